#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "momentfield/errors.hpp"
#include "momentfield/noise.hpp"
#include "momentfield/polynomial.hpp"
#include "momentfield/random_pde.hpp"
#include "momentfield/simulate.hpp"
#include "momentfield/spectral_operator.hpp"
#include "momentfield/time_grid.hpp"

namespace momentfield {

using nlohmann::json;

namespace cfg_detail {

inline const json& require_key(const json& j, const std::string& path, const std::string& key) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "/" : path, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw ConfigError(path + "/" + key, "missing required key");
  return *it;
}

inline double as_double(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  return j.get<double>();
}

inline std::int64_t as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
  return j.get<std::int64_t>();
}

inline bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw ConfigError(path, "expected a boolean");
  return j.get<bool>();
}

inline std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  return j.get<std::string>();
}

inline Eigen::VectorXd as_vector(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = as_double(j[i], path + "/" + std::to_string(i));
  return v;
}

inline Eigen::MatrixXd as_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path, "expected a non-empty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) throw ConfigError(path + "/0", "expected a non-empty row");
  Eigen::MatrixXd m(j.size(), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const std::string row_path = path + "/" + std::to_string(r);
    if (!j[r].is_array() || j[r].size() != cols)
      throw ConfigError(row_path, "rows must all have " + std::to_string(cols) + " entries");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          as_double(j[r][c], row_path + "/" + std::to_string(c));
  }
  return m;
}

}  // namespace cfg_detail

struct McSettings {
  std::size_t samples = 10'000;
  std::uint64_t master_seed = 0;
  int threads = 0;  // 0 = hardware default
};

struct ToleranceSettings {
  double variational = 1e-8;
  double se_multiplier = 4.0;
  double boundary_order = 1.9;
};

/// Parsed and validated run configuration. All cross-references (one K
/// everywhere, grid-aligned forcing blocks) are checked at load time, so a
/// constructed RunConfig is internally consistent.
class RunConfig {
public:
  static RunConfig from_json(const json& doc) {
    using namespace cfg_detail;
    RunConfig cfg;
    cfg.raw_ = doc;

    // operator
    {
      const json& jop = require_key(doc, "", "operator");
      const std::string type = as_string(require_key(jop, "/operator", "type"), "/operator/type");
      if (type == "dirichlet_laplacian") {
        const auto K = as_int(require_key(jop, "/operator", "K"), "/operator/K");
        if (K < 1) throw ConfigError("/operator/K", "mode count must be at least 1");
        cfg.op_.emplace(make_dirichlet_laplacian(static_cast<int>(K)));
      } else if (type == "eigenvalues") {
        const Eigen::VectorXd vals =
            as_vector(require_key(jop, "/operator", "values"), "/operator/values");
        try {
          cfg.op_.emplace(vals);
        } catch (const Error& e) {
          throw ConfigError("/operator/values", e.what());
        }
      } else {
        throw ConfigError("/operator/type",
                          "unknown type '" + type + "' (dirichlet_laplacian | eigenvalues)");
      }
    }
    const int K = cfg.op_->modes();

    // grid
    {
      const json& jg = require_key(doc, "", "grid");
      const double T = as_double(require_key(jg, "/grid", "T"), "/grid/T");
      const auto N = as_int(require_key(jg, "/grid", "N"), "/grid/N");
      try {
        cfg.grid_.emplace(T, static_cast<int>(N));
      } catch (const Error& e) {
        throw ConfigError("/grid", e.what());
      }
    }

    // noise
    {
      const json& jn = require_key(doc, "", "noise");
      const std::string type = as_string(require_key(jn, "/noise", "type"), "/noise/type");
      try {
        if (type == "dense") {
          cfg.noise_.emplace(NoiseCovariance::validate(
              as_matrix(require_key(jn, "/noise", "matrix"), "/noise/matrix"), *cfg.op_));
        } else if (type == "diagonal_profile") {
          DiagonalProfile profile;
          profile.c = as_double(require_key(jn, "/noise", "c"), "/noise/c");
          profile.p = as_double(require_key(jn, "/noise", "p"), "/noise/p");
          cfg.noise_.emplace(NoiseCovariance::from_profile(profile, *cfg.op_));
        } else if (type == "zero") {
          cfg.noise_.emplace(NoiseCovariance::zero(*cfg.op_));
        } else {
          throw ConfigError("/noise/type",
                            "unknown type '" + type + "' (dense | diagonal_profile | zero)");
        }
      } catch (const ConfigError&) {
        throw;
      } catch (const Error& e) {
        throw ConfigError("/noise", e.what());
      }
    }

    // initial law (optional; default deterministic zero)
    if (doc.contains("initial")) {
      cfg.initial_ = parse_initial_law(doc.at("initial"), "/initial", K);
    } else {
      cfg.initial_ = InitialLaw::deterministic(Eigen::VectorXd::Zero(K));
    }

    // mc settings
    if (doc.contains("mc")) {
      const json& jm = doc.at("mc");
      if (jm.contains("M")) {
        const auto M = as_int(jm.at("M"), "/mc/M");
        if (M < 1) throw ConfigError("/mc/M", "sample count must be at least 1");
        cfg.mc_.samples = static_cast<std::size_t>(M);
      }
      if (jm.contains("master_seed")) {
        const json& js = jm.at("master_seed");
        if (!js.is_number_integer() && !js.is_number_unsigned())
          throw ConfigError("/mc/master_seed", "expected an integer");
        cfg.mc_.master_seed = js.get<std::uint64_t>();
      }
      if (jm.contains("threads"))
        cfg.mc_.threads = static_cast<int>(as_int(jm.at("threads"), "/mc/threads"));
    }

    // tolerances
    if (doc.contains("tolerances")) {
      const json& jt = doc.at("tolerances");
      if (jt.contains("variational"))
        cfg.tolerances_.variational = as_double(jt.at("variational"), "/tolerances/variational");
      if (jt.contains("se_multiplier"))
        cfg.tolerances_.se_multiplier =
            as_double(jt.at("se_multiplier"), "/tolerances/se_multiplier");
      if (jt.contains("boundary_order"))
        cfg.tolerances_.boundary_order =
            as_double(jt.at("boundary_order"), "/tolerances/boundary_order");
      if (cfg.tolerances_.variational <= 0 || cfg.tolerances_.se_multiplier <= 0 ||
          cfg.tolerances_.boundary_order <= 0)
        throw ConfigError("/tolerances", "tolerances must be positive");
    }

    // storage caps; the environment variable wins over the config
    if (doc.contains("caps") && doc.at("caps").contains("max_cells")) {
      const auto cells = as_int(doc.at("caps").at("max_cells"), "/caps/max_cells");
      if (cells < 1) throw ConfigError("/caps/max_cells", "cap must be positive");
      cfg.max_cells_ = static_cast<std::size_t>(cells);
    }
    if (const char* env = std::getenv("MOMENTFIELD_MAX_CELLS")) {
      char* end = nullptr;
      const unsigned long long v = std::strtoull(env, &end, 10);
      if (end == env || *end != '\0' || v == 0)
        throw ConfigError("/caps/max_cells", "MOMENTFIELD_MAX_CELLS is not a positive integer");
      cfg.max_cells_ = static_cast<std::size_t>(v);
    }

    // extra stored pairs for capped fields
    if (doc.contains("output") && doc.at("output").contains("pairs")) {
      const json& jp = doc.at("output").at("pairs");
      if (!jp.is_array()) throw ConfigError("/output/pairs", "expected an array of [i,j] pairs");
      for (std::size_t r = 0; r < jp.size(); ++r) {
        const std::string p = "/output/pairs/" + std::to_string(r);
        if (!jp[r].is_array() || jp[r].size() != 2) throw ConfigError(p, "expected [i,j]");
        cfg.extra_pairs_.emplace_back(static_cast<int>(as_int(jp[r][0], p + "/0")),
                                      static_cast<int>(as_int(jp[r][1], p + "/1")));
      }
    }

    // isometry test pairs (optional; the runner has a default set)
    if (doc.contains("isometry") && doc.at("isometry").contains("pairs")) {
      const json& jp = doc.at("isometry").at("pairs");
      if (!jp.is_array()) throw ConfigError("/isometry/pairs", "expected an array");
      for (std::size_t r = 0; r < jp.size(); ++r) {
        const std::string p = "/isometry/pairs/" + std::to_string(r);
        IsometryPair pair;
        pair.v1.mode = static_cast<int>(as_int(require_key(jp[r], p, "mode1"), p + "/mode1"));
        pair.v2.mode = static_cast<int>(as_int(require_key(jp[r], p, "mode2"), p + "/mode2"));
        pair.v1.poly = parse_poly(require_key(jp[r], p, "poly1"), p + "/poly1");
        pair.v2.poly = parse_poly(require_key(jp[r], p, "poly2"), p + "/poly2");
        if (pair.v1.mode < 0 || pair.v1.mode >= K || pair.v2.mode < 0 || pair.v2.mode >= K)
          throw ConfigError(p, "mode index out of range");
        cfg.isometry_pairs_.push_back(std::move(pair));
      }
    }

    // random PDE model (optional; required by the randpde command)
    if (doc.contains("random_pde"))
      cfg.random_model_ = parse_random_model(doc.at("random_pde"), "/random_pde", cfg);

    return cfg;
  }

  static RunConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("/", "cannot open config file '" + path + "'");
    json doc;
    try {
      in >> doc;
    } catch (const json::exception& e) {
      throw ConfigError("/", std::string("JSON parse failure: ") + e.what());
    }
    return from_json(doc);
  }

  struct IsometryPair {
    TestFunction v1, v2;
  };

  const SpectralOperator& op() const { return *op_; }
  const NoiseCovariance& noise() const { return *noise_; }
  const InitialLaw& initial() const { return *initial_; }
  const TimeGrid& grid() const { return *grid_; }
  const McSettings& mc() const { return mc_; }
  const ToleranceSettings& tolerances() const { return tolerances_; }
  std::size_t max_cells() const { return max_cells_; }
  const std::vector<std::pair<int, int>>& extra_pairs() const { return extra_pairs_; }
  const std::vector<IsometryPair>& isometry_pairs() const { return isometry_pairs_; }
  const std::optional<RandomDataModel>& random_model() const { return random_model_; }
  const json& raw() const { return raw_; }

  void override_seed(std::uint64_t seed) {
    mc_.master_seed = seed;
    raw_["mc"]["master_seed"] = seed;
  }
  void override_threads(int threads) {
    mc_.threads = threads;
    raw_["mc"]["threads"] = threads;
  }

private:
  static Polynomial parse_poly(const json& j, const std::string& path) {
    const Eigen::VectorXd c = cfg_detail::as_vector(j, path);
    std::vector<double> coeffs(c.data(), c.data() + c.size());
    return Polynomial(std::move(coeffs));
  }

  static InitialLaw parse_initial_law(const json& j, const std::string& path, int K) {
    using namespace cfg_detail;
    const std::string type = as_string(require_key(j, path, "type"), path + "/type");
    try {
      if (type == "deterministic") {
        const Eigen::VectorXd v = as_vector(require_key(j, path, "values"), path + "/values");
        if (v.size() != K) throw ConfigError(path + "/values", "length must equal operator K");
        return InitialLaw::deterministic(v);
      }
      if (type == "gaussian") {
        Eigen::VectorXd mean = j.contains("mean")
                                   ? as_vector(j.at("mean"), path + "/mean")
                                   : Eigen::VectorXd::Zero(K).eval();
        if (mean.size() != K) throw ConfigError(path + "/mean", "length must equal operator K");
        const Eigen::MatrixXd cov =
            as_matrix(require_key(j, path, "covariance"), path + "/covariance");
        if (cov.rows() != K) throw ConfigError(path + "/covariance", "must be K x K");
        return InitialLaw::gaussian(std::move(mean), cov);
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(path, e.what());
    }
    throw ConfigError(path + "/type", "unknown type '" + type + "' (deterministic | gaussian)");
  }

  static RandomDataModel parse_random_model(const json& j, const std::string& path,
                                            const RunConfig& cfg) {
    using namespace cfg_detail;
    const int K = cfg.op_->modes();
    const int N = cfg.grid_->steps();
    RandomDataModel model;
    model.u0_law = parse_initial_law(require_key(j, path, "u0"), path + "/u0", K);

    const json& jf = require_key(j, path, "forcing");
    if (jf.contains("mean")) {
      model.forcing_mean = as_matrix(jf.at("mean"), path + "/forcing/mean");
      if (model.forcing_mean.rows() != N || model.forcing_mean.cols() != K)
        throw ConfigError(path + "/forcing/mean", "must be N x K = " + std::to_string(N) + "x" +
                                                      std::to_string(K));
    } else {
      model.forcing_mean = Eigen::MatrixXd::Zero(N, K);
    }
    const json& jc = require_key(jf, path + "/forcing", "covariance");
    const std::string ctype =
        as_string(require_key(jc, path + "/forcing/covariance", "type"),
                  path + "/forcing/covariance/type");
    if (ctype == "dense") {
      model.forcing_cov = as_matrix(require_key(jc, path + "/forcing/covariance", "matrix"),
                                    path + "/forcing/covariance/matrix");
    } else if (ctype == "kronecker") {
      const Eigen::MatrixXd time_block = as_matrix(
          require_key(jc, path + "/forcing/covariance", "time"), path + "/forcing/covariance/time");
      const Eigen::MatrixXd mode_block = as_matrix(
          require_key(jc, path + "/forcing/covariance", "mode"), path + "/forcing/covariance/mode");
      if (time_block.rows() != N || time_block.cols() != N || mode_block.rows() != K ||
          mode_block.cols() != K)
        throw ConfigError(path + "/forcing/covariance",
                          "kronecker blocks must be N x N (time) and K x K (mode)");
      model.forcing_cov.resize(N * K, N * K);
      for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b)
          model.forcing_cov.block(a * K, b * K, K, K) = time_block(a, b) * mode_block;
    } else if (ctype == "zero") {
      model.forcing_cov = Eigen::MatrixXd::Zero(N * K, N * K);
    } else {
      throw ConfigError(path + "/forcing/covariance/type",
                        "unknown type '" + ctype + "' (dense | kronecker | zero)");
    }
    if (j.contains("cross_covariance"))
      model.cross_cov = as_matrix(j.at("cross_covariance"), path + "/cross_covariance");
    if (j.contains("independent"))
      model.independent = as_bool(j.at("independent"), path + "/independent");
    if (j.contains("zero_mean_forcing"))
      model.zero_mean_forcing = as_bool(j.at("zero_mean_forcing"), path + "/zero_mean_forcing");
    if (j.contains("zero_mean_u0"))
      model.zero_mean_u0 = as_bool(j.at("zero_mean_u0"), path + "/zero_mean_u0");
    try {
      model.validate(*cfg.op_, *cfg.grid_);
    } catch (const Error& e) {
      throw ConfigError(path, e.what());
    }
    return model;
  }

  json raw_;
  std::optional<SpectralOperator> op_;
  std::optional<NoiseCovariance> noise_;
  std::optional<InitialLaw> initial_;
  std::optional<TimeGrid> grid_;
  McSettings mc_;
  ToleranceSettings tolerances_;
  std::size_t max_cells_ = kDefaultMaxCells;
  std::vector<std::pair<int, int>> extra_pairs_;
  std::vector<IsometryPair> isometry_pairs_;
  std::optional<RandomDataModel> random_model_;
};

}  // namespace momentfield
