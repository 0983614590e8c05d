#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "momentfield/errors.hpp"
#include "momentfield/moment_field.hpp"
#include "momentfield/parallel.hpp"
#include "momentfield/polynomial.hpp"
#include "momentfield/psd.hpp"
#include "momentfield/rng.hpp"
#include "momentfield/simulate.hpp"
#include "momentfield/spectral_operator.hpp"
#include "momentfield/time_grid.hpp"

namespace momentfield {

/// Gaussian model for the data of the random evolution equation
/// (d/dt + A) U = F: an initial law for U0 and a piecewise-constant-in-time
/// Gaussian forcing aligned with the grid intervals. Block index of the
/// forcing: (interval a, mode k) -> a*K + k.
///
/// The cross covariance between U0 and F powers correlated test models;
/// the `independent` flag asserts it vanishes.
struct RandomDataModel {
  InitialLaw u0_law = InitialLaw::deterministic(Eigen::VectorXd::Zero(1));
  Eigen::MatrixXd forcing_mean;  // N x K
  Eigen::MatrixXd forcing_cov;   // (N*K) x (N*K)
  Eigen::MatrixXd cross_cov;     // K x (N*K), Cov(U0_k, F_(a,m)); empty means zero
  bool independent = true;
  bool zero_mean_forcing = false;
  bool zero_mean_u0 = false;

  void validate(const SpectralOperator& op, const TimeGrid& grid) const {
    const int K = op.modes();
    const int N = grid.steps();
    if (u0_law.dimension() != K)
      throw ValidationError("initial law dimension does not match operator modes");
    if (forcing_mean.rows() != N || forcing_mean.cols() != K)
      throw ValidationError("forcing mean must be steps x modes = " + std::to_string(N) + "x" +
                            std::to_string(K));
    if (forcing_cov.rows() != N * K || forcing_cov.cols() != N * K)
      throw ValidationError("forcing covariance must be " + std::to_string(N * K) + " square");
    require_symmetric(forcing_cov, "forcing covariance");
    require_psd(0.5 * (forcing_cov + forcing_cov.transpose()), "forcing covariance");
    if (cross_cov.size() != 0 && (cross_cov.rows() != K || cross_cov.cols() != N * K))
      throw ValidationError("cross covariance must be modes x (steps*modes)");
    if (independent && cross_cov.size() != 0 && cross_cov.cwiseAbs().maxCoeff() != 0.0)
      throw ValidationError("model flagged independent but the cross covariance is nonzero");
    if (zero_mean_forcing && forcing_mean.size() != 0 && forcing_mean.cwiseAbs().maxCoeff() != 0.0)
      throw ValidationError("model flagged zero-mean forcing but the forcing mean is nonzero");
    if (zero_mean_u0 && u0_law.mean().cwiseAbs().maxCoeff() != 0.0)
      throw ValidationError("model flagged zero-mean initial data but the initial mean is nonzero");
    require_psd(joint_covariance(op, grid), "joint (U0, F) covariance");
  }

  /// Joint covariance of the stacked vector [U0; vec(F)].
  Eigen::MatrixXd joint_covariance(const SpectralOperator& op, const TimeGrid& grid) const {
    const int K = op.modes();
    const int N = grid.steps();
    Eigen::MatrixXd joint = Eigen::MatrixXd::Zero(K + N * K, K + N * K);
    joint.topLeftCorner(K, K) = u0_law.covariance();
    joint.bottomRightCorner(N * K, N * K) = 0.5 * (forcing_cov + forcing_cov.transpose());
    if (cross_cov.size() != 0) {
      joint.block(0, K, K, N * K) = cross_cov;
      joint.block(K, 0, N * K, K) = cross_cov.transpose();
    }
    return joint;
  }
};

/// Second-moment (or covariance) data for the tensorized solve; carries the
/// hypotheses flags of the model it came from.
struct SecondMomentData {
  enum class Kind { SecondMoment, Covariance };

  Eigen::MatrixXd u0;       // K x K
  Eigen::MatrixXd forcing;  // (N*K) x (N*K)
  Kind kind = Kind::SecondMoment;
  bool independent = true;
  bool zero_mean_forcing = false;
  bool zero_mean_u0 = false;
};

inline SecondMomentData make_second_moment_data(const RandomDataModel& model) {
  SecondMomentData data;
  data.kind = SecondMomentData::Kind::SecondMoment;
  data.u0 = model.u0_law.second_moment();
  Eigen::VectorXd mean_vec(model.forcing_mean.size());
  const int N = static_cast<int>(model.forcing_mean.rows());
  const int K = static_cast<int>(model.forcing_mean.cols());
  for (int a = 0; a < N; ++a)
    for (int k = 0; k < K; ++k) mean_vec[a * K + k] = model.forcing_mean(a, k);
  data.forcing = 0.5 * (model.forcing_cov + model.forcing_cov.transpose()) +
                 mean_vec * mean_vec.transpose();
  data.independent = model.independent;
  data.zero_mean_forcing = model.zero_mean_forcing;
  data.zero_mean_u0 = model.zero_mean_u0;
  return data;
}

inline SecondMomentData make_covariance_data(const RandomDataModel& model) {
  SecondMomentData data;
  data.kind = SecondMomentData::Kind::Covariance;
  data.u0 = model.u0_law.covariance();
  data.forcing = 0.5 * (model.forcing_cov + model.forcing_cov.transpose());
  data.independent = model.independent;
  data.zero_mean_forcing = model.zero_mean_forcing;
  data.zero_mean_u0 = model.zero_mean_u0;
  return data;
}

/// Draws (U0, F) jointly and propagates the exact Duhamel recursion for
/// piecewise-constant forcing:
///   U(t_{i+1}) = e^{-a dt} U(t_i) + F_i (1 - e^{-a dt}) / a.
/// Each sample consumes exactly K + N*K normals, independent of which
/// blocks are deterministic, so coupled-seed comparisons see identical
/// noise under mean shifts.
class RandomPdeSampler {
public:
  RandomPdeSampler(const SpectralOperator& op, const RandomDataModel& model, const TimeGrid& grid)
      : op_(op), grid_(grid), model_(model) {
    model.validate(op, grid);
    const int K = op.modes();
    joint_factor_ = factor_psd(model.joint_covariance(op, grid), "joint (U0, F) covariance");
    decay_ = op.decay(grid.dt());
    load_.resize(K);
    for (int k = 0; k < K; ++k)
      load_[k] = -std::expm1(-op.eigenvalue(k) * grid.dt()) / op.eigenvalue(k);
  }

  int modes() const { return op_.modes(); }
  const TimeGrid& grid() const { return grid_; }

  /// Draws the data pair; u0 is K, forcing is N x K.
  void draw_data(RngStream& rng, Eigen::VectorXd& u0, Eigen::MatrixXd& forcing) const {
    const int K = op_.modes();
    const int N = grid_.steps();
    Eigen::VectorXd z(K + N * K);
    for (Eigen::Index d = 0; d < z.size(); ++d) z[d] = rng.next_normal();
    const Eigen::VectorXd y = joint_factor_ * z;
    u0 = model_.u0_law.mean() + y.head(K);
    forcing.resize(N, K);
    for (int a = 0; a < N; ++a)
      for (int k = 0; k < K; ++k) forcing(a, k) = model_.forcing_mean(a, k) + y[K + a * K + k];
  }

  /// One solution path, K x (N+1).
  Eigen::MatrixXd sample(RngStream& rng) const {
    Eigen::VectorXd u0;
    Eigen::MatrixXd forcing;
    draw_data(rng, u0, forcing);
    return propagate(u0, forcing);
  }

  Eigen::MatrixXd propagate(const Eigen::VectorXd& u0, const Eigen::MatrixXd& forcing) const {
    const int K = op_.modes();
    Eigen::MatrixXd path(K, grid_.nodes());
    path.col(0) = u0;
    for (int i = 0; i < grid_.steps(); ++i)
      for (int k = 0; k < K; ++k)
        path(k, i + 1) = decay_[k] * path(k, i) + forcing(i, k) * load_[k];
    return path;
  }

private:
  SpectralOperator op_;
  TimeGrid grid_;
  RandomDataModel model_;
  Eigen::MatrixXd joint_factor_;
  Eigen::VectorXd decay_;
  std::vector<double> load_;
};

/// One-off draw; MC loops should hold a RandomPdeSampler instead.
inline Eigen::MatrixXd sample_random_solution(const SpectralOperator& op,
                                              const RandomDataModel& model, const TimeGrid& grid,
                                              RngStream& rng) {
  return RandomPdeSampler(op, model, grid).sample(rng);
}

/// Ensemble of random-PDE solution paths, reusing the Monte Carlo
/// estimator machinery of the Wiener-driven simulator.
inline PathEnsemble simulate_random_paths(const SpectralOperator& op, const RandomDataModel& model,
                                          const TimeGrid& grid, std::size_t M,
                                          std::uint64_t master_seed,
                                          const SimulateOptions& opts = {}) {
  if (M < 1) throw DomainError("sample count must be at least 1");
  const RandomPdeSampler sampler(op, model, grid);
  const int K = op.modes();
  const std::size_t cells = M * static_cast<std::size_t>(K) * grid.nodes();
  if (cells > opts.max_cells)
    throw CapacityError("ensemble needs " + std::to_string(cells) + " cells, cap is " +
                        std::to_string(opts.max_cells));
  PathEnsemble ensemble(K, grid, M, master_seed, false);
  const std::size_t blocks = (M + detail::kSampleBlock - 1) / detail::kSampleBlock;
  parallel_chunks(blocks, opts.threads, [&](std::size_t b) {
    const std::size_t lo = b * detail::kSampleBlock;
    const std::size_t hi = std::min(M, lo + detail::kSampleBlock);
    for (std::size_t j = lo; j < hi; ++j) {
      RngStream rng(master_seed, j);
      const Eigen::MatrixXd path = sampler.sample(rng);
      for (int k = 0; k < K; ++k)
        for (int i = 0; i < grid.nodes(); ++i) ensemble.value(j, k, i) = path(k, i);
    }
  });
  return ensemble;
}

namespace detail {

/// Exact per-mode response of one forcing interval:
///   I_a(t; alpha) = int over [t_a, t_{a+1}] cap [0, t] of e^{-alpha (t-s)} ds,
/// in the overflow-safe expm1 form. Indexed [k][i][a].
inline std::vector<double> interval_responses(const SpectralOperator& op, const TimeGrid& grid) {
  const int K = op.modes();
  const int nodes = grid.nodes();
  const int N = grid.steps();
  std::vector<double> resp(static_cast<std::size_t>(K) * nodes * N, 0.0);
  for (int k = 0; k < K; ++k) {
    const double alpha = op.eigenvalue(k);
    for (int i = 0; i < nodes; ++i) {
      const double t = grid.node(i);
      for (int a = 0; a < N; ++a) {
        const double s0 = std::min(t, grid.node(a));
        const double s1 = std::min(t, grid.node(a + 1));
        if (s1 <= s0) continue;
        resp[(static_cast<std::size_t>(k) * nodes + i) * N + a] =
            std::exp(-alpha * (t - s1)) * (-std::expm1(-alpha * (s1 - s0))) / alpha;
      }
    }
  }
  return resp;
}

inline void require_hypotheses(const SecondMomentData& data) {
  if (data.kind == SecondMomentData::Kind::SecondMoment) {
    if (!data.independent || !(data.zero_mean_forcing || data.zero_mean_u0))
      throw ValidationError(
          "second-moment identity requires independent data and at least one zero-mean flag "
          "(forcing or initial data); refusing to compute");
  } else {
    if (!data.independent)
      throw ValidationError("covariance identity requires independent data; refusing to compute");
  }
}

}  // namespace detail

/// Deterministic tensorized solve for the random equation: the field is the
/// doubly propagated initial matrix plus the interval-pair double Duhamel
/// loads,
///   u_kl(t_i, t_j) = e^{-a_k t_i - a_l t_j} u0_kl
///                  + sum_{a,b} F2[(a,k),(b,l)] I_a(t_i; a_k) I_b(t_j; a_l),
/// each 1-D integral in closed form. Valid when the model satisfies the
/// independence and zero-mean hypotheses; `enforce` exists so tests can
/// demonstrate the identity failing without them.
inline MomentField solve_random_second_moment(const SpectralOperator& op,
                                              const SecondMomentData& data, const TimeGrid& grid,
                                              bool enforce = true,
                                              std::size_t max_cells = kDefaultMaxCells) {
  if (enforce) detail::require_hypotheses(data);
  const int K = op.modes();
  const int nodes = grid.nodes();
  const int N = grid.steps();
  if (data.u0.rows() != K || data.u0.cols() != K)
    throw ValidationError("initial matrix must be modes x modes");
  if (data.forcing.rows() != N * K || data.forcing.cols() != N * K)
    throw ValidationError("forcing second-moment matrix must be (steps*modes) square");

  const std::vector<double> resp = detail::interval_responses(op, grid);
  const TimePairSet pairs = choose_pair_set(K, grid, max_cells);
  MomentField field(K, grid, pairs, FieldProvenance::DeterministicSolve);
  const Eigen::VectorXd& alpha = op.eigenvalues();
  // Only the canonical half is computed; the mirror entry is copied so
  // exchange symmetry holds bitwise despite the asymmetric summation order.
  for (int k = 0; k < K; ++k) {
    for (int l = k; l < K; ++l) {
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto [i, j] = pairs.pair_at(p);
        if (k == l && i > j) continue;
        const double decay = std::exp(-alpha[k] * grid.node(i) - alpha[l] * grid.node(j));
        double load = 0.0;
        const double* ri = &resp[(static_cast<std::size_t>(k) * nodes + i) * N];
        const double* rj = &resp[(static_cast<std::size_t>(l) * nodes + j) * N];
        for (int a = 0; a < N; ++a) {
          if (ri[a] == 0.0) continue;
          double inner = 0.0;
          for (int b = 0; b < N; ++b) inner += data.forcing(a * K + k, b * K + l) * rj[b];
          load += ri[a] * inner;
        }
        const double value = decay * data.u0(k, l) + load;
        field.at(k, l, p) = value;
        field.at(l, k, pairs.index_of(j, i)) = value;
      }
    }
  }
  return field;
}

inline MomentField solve_random_covariance(const SpectralOperator& op, const SecondMomentData& data,
                                           const TimeGrid& grid, bool enforce = true,
                                           std::size_t max_cells = kDefaultMaxCells) {
  if (data.kind != SecondMomentData::Kind::Covariance)
    throw ValidationError("solve_random_covariance expects covariance data");
  return solve_random_second_moment(op, data, grid, enforce, max_cells);
}

/// MC estimates of the two cross pairings E[<F, v1> <U0, v2(0)>] and the
/// mirrored term, plus their centered versions (data with the declared
/// means subtracted). The uncentered terms vanish under independence with
/// one zero mean; the centered ones under independence alone.
struct CrossTermReport {
  double forward_estimate = 0.0;
  double forward_std_error = 0.0;
  double mirrored_estimate = 0.0;
  double mirrored_std_error = 0.0;
  double centered_forward_estimate = 0.0;
  double centered_forward_std_error = 0.0;
  double centered_mirrored_estimate = 0.0;
  double centered_mirrored_std_error = 0.0;
  std::size_t samples = 0;
};

inline CrossTermReport cross_term_estimate(const SpectralOperator& op,
                                           const RandomDataModel& model, const TimeGrid& grid,
                                           const TestFunction& v1, const TestFunction& v2,
                                           std::size_t M, std::uint64_t master_seed,
                                           int threads = 1) {
  if (M < 2) throw DomainError("cross-term estimate needs at least two samples");
  if (v1.mode < 0 || v1.mode >= op.modes() || v2.mode < 0 || v2.mode >= op.modes())
    throw ValidationError("test-function mode index out of range");
  const RandomPdeSampler sampler(op, model, grid);
  const int N = grid.steps();

  // Exact interval weights of the polynomial parts.
  std::vector<double> w1(N), w2(N);
  const Polynomial a1 = v1.poly.antiderivative();
  const Polynomial a2 = v2.poly.antiderivative();
  for (int a = 0; a < N; ++a) {
    w1[a] = a1(grid.node(a + 1)) - a1(grid.node(a));
    w2[a] = a2(grid.node(a + 1)) - a2(grid.node(a));
  }

  const detail::MomentSums sums = detail::blocked_entry_moments(
      M, 4, threads, [&](std::size_t j, double* products) {
        RngStream rng(master_seed, j);
        Eigen::VectorXd u0;
        Eigen::MatrixXd forcing;
        sampler.draw_data(rng, u0, forcing);
        double f_v1 = 0.0, f_v2 = 0.0, fc_v1 = 0.0, fc_v2 = 0.0;
        for (int a = 0; a < N; ++a) {
          f_v1 += forcing(a, v1.mode) * w1[a];
          f_v2 += forcing(a, v2.mode) * w2[a];
          fc_v1 += (forcing(a, v1.mode) - model.forcing_mean(a, v1.mode)) * w1[a];
          fc_v2 += (forcing(a, v2.mode) - model.forcing_mean(a, v2.mode)) * w2[a];
        }
        const double u0c_v1 = u0[v1.mode] - model.u0_law.mean()[v1.mode];
        const double u0c_v2 = u0[v2.mode] - model.u0_law.mean()[v2.mode];
        products[0] = f_v1 * v2.poly(0.0) * u0[v2.mode];
        products[1] = f_v2 * v1.poly(0.0) * u0[v1.mode];
        products[2] = fc_v1 * v2.poly(0.0) * u0c_v2;
        products[3] = fc_v2 * v1.poly(0.0) * u0c_v1;
      });

  CrossTermReport report;
  report.samples = M;
  report.forward_estimate = sums.mean(0);
  report.forward_std_error = detail::standard_error(sums, 0);
  report.mirrored_estimate = sums.mean(1);
  report.mirrored_std_error = detail::standard_error(sums, 1);
  report.centered_forward_estimate = sums.mean(2);
  report.centered_forward_std_error = detail::standard_error(sums, 2);
  report.centered_mirrored_estimate = sums.mean(3);
  report.centered_mirrored_std_error = detail::standard_error(sums, 3);
  return report;
}

}  // namespace momentfield
