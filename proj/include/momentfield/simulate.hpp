#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "momentfield/errors.hpp"
#include "momentfield/moment_field.hpp"
#include "momentfield/noise.hpp"
#include "momentfield/parallel.hpp"
#include "momentfield/polynomial.hpp"
#include "momentfield/psd.hpp"
#include "momentfield/rng.hpp"
#include "momentfield/spectral_operator.hpp"
#include "momentfield/time_grid.hpp"

namespace momentfield {

/// Law of the initial state in coefficient space: a fixed vector or a
/// Gaussian with validated PSD covariance.
class InitialLaw {
public:
  enum class Kind { Deterministic, Gaussian };

  static InitialLaw deterministic(Eigen::VectorXd value) {
    InitialLaw law;
    law.kind_ = Kind::Deterministic;
    law.mean_ = std::move(value);
    law.covariance_ = Eigen::MatrixXd::Zero(law.mean_.size(), law.mean_.size());
    return law;
  }

  static InitialLaw gaussian(Eigen::VectorXd mean, const Eigen::MatrixXd& covariance) {
    if (covariance.rows() != mean.size() || covariance.cols() != mean.size())
      throw ValidationError("initial covariance shape does not match the mean length");
    require_symmetric(covariance, "initial covariance");
    Eigen::MatrixXd sym = 0.5 * (covariance + covariance.transpose());
    require_psd(sym, "initial covariance");
    InitialLaw law;
    law.kind_ = Kind::Gaussian;
    law.mean_ = std::move(mean);
    law.covariance_ = std::move(sym);
    return law;
  }

  Kind kind() const { return kind_; }
  int dimension() const { return static_cast<int>(mean_.size()); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }

  /// E[X0 (x) X0] = Cov + mean mean^T.
  Eigen::MatrixXd second_moment() const { return covariance_ + mean_ * mean_.transpose(); }

private:
  Kind kind_ = Kind::Deterministic;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
};

struct SimulateOptions {
  /// Retain the Wiener increments that drove each path (needed by the
  /// pathwise weak-form and martingale checks). Does not change the paths:
  /// the per-step draw layout is fixed whether or not they are kept.
  bool keep_increments = false;
  std::size_t max_cells = kDefaultMaxCells;
  int threads = 1;
};

/// Monte Carlo ensemble of mode-coefficient paths on a time grid, plus
/// (optionally) the Wiener increments consistent with them. A sample's
/// path is a pure function of (parameters, master_seed, sample index).
class PathEnsemble {
public:
  PathEnsemble(int modes, TimeGrid grid, std::size_t samples, std::uint64_t master_seed,
               bool with_increments)
      : modes_(modes),
        grid_(std::move(grid)),
        samples_(samples),
        master_seed_(master_seed),
        paths_(samples * static_cast<std::size_t>(modes) * grid_.nodes(), 0.0) {
    if (with_increments)
      increments_.assign(samples * static_cast<std::size_t>(modes) * grid_.steps(), 0.0);
  }

  int modes() const { return modes_; }
  const TimeGrid& grid() const { return grid_; }
  std::size_t samples() const { return samples_; }
  std::uint64_t master_seed() const { return master_seed_; }
  bool has_increments() const { return !increments_.empty(); }

  /// Flattened per-sample state dimension K * (N+1), index d = k*(N+1)+i.
  int state_dimension() const { return modes_ * grid_.nodes(); }

  double value(std::size_t sample, int k, int i) const {
    return paths_[(sample * modes_ + k) * grid_.nodes() + i];
  }
  double& value(std::size_t sample, int k, int i) {
    return paths_[(sample * modes_ + k) * grid_.nodes() + i];
  }

  double increment(std::size_t sample, int k, int i) const {
    return increments_[(sample * modes_ + k) * grid_.steps() + i];
  }
  double& increment(std::size_t sample, int k, int i) {
    return increments_[(sample * modes_ + k) * grid_.steps() + i];
  }

  const double* sample_data(std::size_t sample) const {
    return paths_.data() + sample * static_cast<std::size_t>(state_dimension());
  }

private:
  int modes_;
  TimeGrid grid_;
  std::size_t samples_;
  std::uint64_t master_seed_;
  std::vector<double> paths_;       // ((j*K + k)*(N+1) + i)
  std::vector<double> increments_;  // ((j*K + k)*N + i)
};

namespace detail {

inline constexpr std::size_t kSampleBlock = 4096;

}  // namespace detail

/// Samples M mild-solution paths of dX + AX dt = dW on the grid nodes,
/// exact in law: X(t_{i+1}) = e^{-a dt} X(t_i) + eta_i with eta_i drawn
/// jointly with the plain Wiener increment of the step from their exact
/// 2K x 2K covariance. There is no time-discretization bias; refinement
/// studies only reduce quadrature errors of downstream functionals.
///
/// Sample j consumes its own stream derived from (master_seed, j): K
/// normals for a Gaussian initial draw, then 2K per step.
inline PathEnsemble simulate_paths(const SpectralOperator& op, const NoiseCovariance& cov,
                                   const InitialLaw& init, const TimeGrid& grid, std::size_t M,
                                   std::uint64_t master_seed, const SimulateOptions& opts = {}) {
  if (M < 1) throw DomainError("sample count must be at least 1");
  if (init.dimension() != op.modes())
    throw ValidationError("initial law dimension does not match operator modes");
  if (cov.modes() != op.modes())
    throw ValidationError("noise covariance dimension does not match operator modes");

  const int K = op.modes();
  const std::size_t path_cells = M * static_cast<std::size_t>(K) * grid.nodes();
  const std::size_t incr_cells =
      opts.keep_increments ? M * static_cast<std::size_t>(K) * grid.steps() : 0;
  if (path_cells + incr_cells > opts.max_cells)
    throw CapacityError("ensemble needs " + std::to_string(path_cells + incr_cells) +
                        " cells, cap is " + std::to_string(opts.max_cells) +
                        " (set MOMENTFIELD_MAX_CELLS or the caps.max_cells config key)");

  const double dt = grid.dt();
  const Eigen::VectorXd decay = op.decay(dt);
  const Eigen::MatrixXd joint_factor =
      factor_psd(joint_step_covariance(op, cov, dt), "joint step covariance");
  const bool gaussian_init = init.kind() == InitialLaw::Kind::Gaussian;
  const Eigen::MatrixXd init_factor =
      gaussian_init ? factor_psd(init.covariance(), "initial covariance")
                    : Eigen::MatrixXd::Zero(K, K);

  PathEnsemble ensemble(K, grid, M, master_seed, opts.keep_increments);
  const std::size_t blocks = (M + detail::kSampleBlock - 1) / detail::kSampleBlock;

  parallel_chunks(blocks, opts.threads, [&](std::size_t b) {
    Eigen::VectorXd state(K), xi(K), zeta(2 * K), step(2 * K);
    const std::size_t lo = b * detail::kSampleBlock;
    const std::size_t hi = std::min(M, lo + detail::kSampleBlock);
    for (std::size_t j = lo; j < hi; ++j) {
      RngStream rng(master_seed, j);
      state = init.mean();
      if (gaussian_init) {
        for (int k = 0; k < K; ++k) xi[k] = rng.next_normal();
        state += init_factor * xi;
      }
      for (int k = 0; k < K; ++k) ensemble.value(j, k, 0) = state[k];
      for (int i = 0; i < grid.steps(); ++i) {
        for (int k = 0; k < 2 * K; ++k) zeta[k] = rng.next_normal();
        step.noalias() = joint_factor * zeta;
        for (int k = 0; k < K; ++k) {
          state[k] = decay[k] * state[k] + step[k];
          ensemble.value(j, k, i + 1) = state[k];
          if (opts.keep_increments) ensemble.increment(j, k, i) = step[K + k];
        }
      }
    }
  });
  return ensemble;
}

/// Mean estimate per (mode, node) with standard errors.
struct MeanEstimate {
  Eigen::MatrixXd value;      // K x (N+1)
  Eigen::MatrixXd std_error;  // same shape
  std::size_t samples = 0;
};

/// Moment-field estimate with entrywise standard errors.
struct MomentEstimate {
  MomentField value;
  MomentField std_error;
  std::size_t samples = 0;
};

struct EstimatorOptions {
  std::size_t max_cells = kDefaultMaxCells;
  std::vector<std::pair<int, int>> extra_pairs;
  int threads = 1;
};

namespace detail {

/// Per-entry first and second moments over samples.
struct MomentSums {
  std::vector<double> total;      // sum of the raw per-sample values
  std::vector<double> shifted;    // sum of (value - center)
  std::vector<double> shifted_sq; // sum of (value - center)^2
  std::vector<double> center;     // the first sample's values
  std::size_t samples = 0;

  /// Sample mean, exact (== center) when every sample agrees.
  double mean(std::size_t entry) const {
    return center[entry] + shifted[entry] / static_cast<double>(samples);
  }
};

/// Deterministic blocked reduction: values are accumulated relative to the
/// first sample's values (shifted sums), with compensated summation in
/// fixed sample order inside fixed-size blocks combined in block order.
/// Bit-identical for any thread count, and exactly zero spread when every
/// sample produces the same value.
template <class FillProducts>
MomentSums blocked_entry_moments(std::size_t M, std::size_t entries, int threads,
                                 FillProducts&& fill_products) {
  MomentSums out;
  out.samples = M;
  out.center.resize(entries);
  fill_products(0, out.center.data());

  const std::size_t blocks = (M + kSampleBlock - 1) / kSampleBlock;
  std::vector<std::vector<double>> block_sums(blocks), block_sumsqs(blocks);
  parallel_chunks(blocks, threads, [&](std::size_t b) {
    std::vector<double> s(entries, 0.0), c(entries, 0.0), s2(entries, 0.0);
    std::vector<double> products(entries);
    const std::size_t lo = b * kSampleBlock;
    const std::size_t hi = std::min(M, lo + kSampleBlock);
    for (std::size_t j = lo; j < hi; ++j) {
      fill_products(j, products.data());
      for (std::size_t e = 0; e < entries; ++e) {
        const double p = products[e] - out.center[e];
        const double t = s[e] + p;
        if (std::abs(s[e]) >= std::abs(p))
          c[e] += (s[e] - t) + p;
        else
          c[e] += (p - t) + s[e];
        s[e] = t;
        s2[e] += p * p;
      }
    }
    for (std::size_t e = 0; e < entries; ++e) s[e] += c[e];
    block_sums[b] = std::move(s);
    block_sumsqs[b] = std::move(s2);
  });

  out.shifted.assign(entries, 0.0);
  out.shifted_sq.assign(entries, 0.0);
  std::vector<double> comp(entries, 0.0);
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t e = 0; e < entries; ++e) {
      const double p = block_sums[b][e];
      const double t = out.shifted[e] + p;
      if (std::abs(out.shifted[e]) >= std::abs(p))
        comp[e] += (out.shifted[e] - t) + p;
      else
        comp[e] += (p - t) + out.shifted[e];
      out.shifted[e] = t;
      out.shifted_sq[e] += block_sumsqs[b][e];
    }
  }
  out.total.resize(entries);
  for (std::size_t e = 0; e < entries; ++e) {
    out.shifted[e] += comp[e];
    out.total[e] = static_cast<double>(M) * out.center[e] + out.shifted[e];
  }
  return out;
}

inline double standard_error(const MomentSums& sums, std::size_t entry) {
  const std::size_t M = sums.samples;
  if (M < 2) return 0.0;
  const double ssum = sums.shifted[entry];
  const double var = (sums.shifted_sq[entry] - ssum * ssum / static_cast<double>(M)) /
                     static_cast<double>(M - 1);
  return std::sqrt(std::max(0.0, var) / static_cast<double>(M));
}

/// Shared core of the second-moment and covariance estimators: accumulates
/// products of (optionally centered) state vectors over the stored pairs.
inline MomentEstimate product_moment_estimate(const PathEnsemble& e, const Eigen::MatrixXd* center,
                                              bool unbiased, const EstimatorOptions& opts) {
  const int K = e.modes();
  const int nodes = e.grid().nodes();
  const std::size_t M = e.samples();
  const TimePairSet pairs = choose_pair_set(K, e.grid(), opts.max_cells, opts.extra_pairs);

  // Entry list in storage order (k, l, pair). Products of identical factor
  // pairs are bitwise equal under exchange, so symmetry is exact.
  const std::size_t entries = static_cast<std::size_t>(K) * K * pairs.size();
  const std::size_t npairs = pairs.size();
  const MomentSums sums = blocked_entry_moments(
      M, entries, opts.threads, [&](std::size_t j, double* products) {
        const double* v = e.sample_data(j);
        thread_local std::vector<double> buf;
        const double* x = v;
        if (center) {
          buf.resize(static_cast<std::size_t>(K) * nodes);
          for (int k = 0; k < K; ++k)
            for (int i = 0; i < nodes; ++i)
              buf[static_cast<std::size_t>(k) * nodes + i] =
                  v[static_cast<std::size_t>(k) * nodes + i] - (*center)(k, i);
          x = buf.data();
        }
        std::size_t idx = 0;
        for (int k = 0; k < K; ++k) {
          for (int l = 0; l < K; ++l) {
            const double* xk = x + static_cast<std::size_t>(k) * nodes;
            const double* xl = x + static_cast<std::size_t>(l) * nodes;
            for (std::size_t p = 0; p < npairs; ++p, ++idx) {
              const auto [i, jn] = pairs.pair_at(p);
              products[idx] = xk[i] * xl[jn];
            }
          }
        }
      });

  MomentEstimate est{
      MomentField(K, e.grid(), pairs, FieldProvenance::McEstimate),
      MomentField(K, e.grid(), pairs, FieldProvenance::McEstimate),
      M,
  };
  std::size_t idx = 0;
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < K; ++l)
      for (std::size_t p = 0; p < npairs; ++p, ++idx) {
        est.value.at(k, l, p) =
            unbiased ? sums.total[idx] / static_cast<double>(M - 1) : sums.mean(idx);
        est.std_error.at(k, l, p) = standard_error(sums, idx);
      }
  return est;
}

}  // namespace detail

/// Sample mean of the paths per (mode, node); SE = sample std / sqrt(M).
inline MeanEstimate mc_mean(const PathEnsemble& e, int threads = 1) {
  const int K = e.modes();
  const int nodes = e.grid().nodes();
  const std::size_t entries = static_cast<std::size_t>(K) * nodes;
  const detail::MomentSums sums = detail::blocked_entry_moments(
      e.samples(), entries, threads, [&](std::size_t j, double* products) {
        const double* v = e.sample_data(j);
        for (std::size_t d = 0; d < entries; ++d) products[d] = v[d];
      });
  MeanEstimate est;
  est.value.resize(K, nodes);
  est.std_error.resize(K, nodes);
  est.samples = e.samples();
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < nodes; ++i) {
      const std::size_t d = static_cast<std::size_t>(k) * nodes + i;
      est.value(k, i) = sums.mean(d);
      est.std_error(k, i) = detail::standard_error(sums, d);
    }
  return est;
}

/// Uncentered second-moment field (1/M) sum_j X_k(t_i) X_l(t_j) with
/// entrywise standard errors from the per-sample product variance.
inline MomentEstimate mc_second_moment(const PathEnsemble& e, const EstimatorOptions& opts = {}) {
  return detail::product_moment_estimate(e, nullptr, /*unbiased=*/false, opts);
}

/// Covariance field: products of mean-centered paths with the M/(M-1)
/// unbiasing factor.
inline MomentEstimate mc_covariance(const PathEnsemble& e, const EstimatorOptions& opts = {}) {
  if (e.samples() < 2)
    throw DomainError("covariance estimation needs at least two samples");
  const MeanEstimate mean = mc_mean(e, opts.threads);
  return detail::product_moment_estimate(e, &mean.value, /*unbiased=*/true, opts);
}

/// Residual statistics of the pathwise weak formulation.
struct WeakResidualStats {
  double max_abs = 0.0;
  double rms = 0.0;
  double mean = 0.0;
  std::size_t samples = 0;
};

/// For each path, evaluates
///   int X_n (-p' + a_n p) dt  -  X_n(0) p(0)  -  int p dW_n
/// with the time integral by the composite trapezoid on the grid and the
/// stochastic integral by the left-point sum over the same increments that
/// drove the path. The continuum identity is exact; what remains is
/// quadrature error, which vanishes under grid refinement.
inline WeakResidualStats pathwise_weak_residual(const PathEnsemble& e, const SpectralOperator& op,
                                                const TestFunction& tf) {
  if (!e.has_increments())
    throw ValidationError("pathwise residual needs an ensemble simulated with keep_increments");
  if (tf.mode < 0 || tf.mode >= op.modes())
    throw ValidationError("test-function mode index out of range");
  const TimeGrid& grid = e.grid();
  require_test_function(tf.poly, grid.horizon());

  const int n = tf.mode;
  const Polynomial g = tf.poly.derivative() * (-1.0) + tf.poly * op.eigenvalue(n);
  const int nodes = grid.nodes();
  std::vector<double> gw(nodes), pw(grid.steps());
  for (int i = 0; i < nodes; ++i) {
    const double w = (i == 0 || i == nodes - 1) ? 0.5 * grid.dt() : grid.dt();
    gw[i] = w * g(grid.node(i));
  }
  for (int i = 0; i < grid.steps(); ++i) pw[i] = tf.poly(grid.node(i));

  WeakResidualStats stats;
  stats.samples = e.samples();
  Kahan sum, sumsq;
  for (std::size_t j = 0; j < e.samples(); ++j) {
    double time_integral = 0.0;
    for (int i = 0; i < nodes; ++i) time_integral += gw[i] * e.value(j, n, i);
    double stochastic = 0.0;
    for (int i = 0; i < grid.steps(); ++i) stochastic += pw[i] * e.increment(j, n, i);
    const double r = time_integral - e.value(j, n, 0) * tf.poly(0.0) - stochastic;
    stats.max_abs = std::max(stats.max_abs, std::abs(r));
    sum.add(r);
    sumsq.add(r * r);
  }
  stats.mean = sum.result() / static_cast<double>(e.samples());
  stats.rms = std::sqrt(std::max(0.0, sumsq.result() / static_cast<double>(e.samples())));
  return stats;
}

/// Monte Carlo check of one weak-integral isometry instance.
struct IsometryReport {
  double estimate = 0.0;
  double target = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

/// Estimates E[ int <v1, dW> int <v2, dW> ] and compares with the exact
/// q_{n1 n2} int p1 p2 dt. The weak integrals use exact step averages of
/// the polynomials (the weak integral of the piecewise-constant projection
/// of v), so the estimator bias is O(dt^2) while the target integral is an
/// exact antiderivative.
inline IsometryReport isometry_check(const SpectralOperator& op, const NoiseCovariance& cov,
                                     const TimeGrid& grid, const TestFunction& v1,
                                     const TestFunction& v2, std::size_t M,
                                     std::uint64_t master_seed, int threads = 1) {
  if (M < 2) throw DomainError("isometry check needs at least two samples");
  if (v1.mode < 0 || v1.mode >= op.modes() || v2.mode < 0 || v2.mode >= op.modes())
    throw ValidationError("test-function mode index out of range");
  const int K = op.modes();
  const int steps = grid.steps();
  const double dt = grid.dt();
  const Eigen::MatrixXd noise_factor = factor(cov).L * std::sqrt(dt);

  std::vector<double> w1(steps), w2(steps);
  const Polynomial a1 = v1.poly.antiderivative();
  const Polynomial a2 = v2.poly.antiderivative();
  for (int i = 0; i < steps; ++i) {
    w1[i] = (a1(grid.node(i + 1)) - a1(grid.node(i))) / dt;
    w2[i] = (a2(grid.node(i + 1)) - a2(grid.node(i))) / dt;
  }

  const detail::MomentSums sums = detail::blocked_entry_moments(
      M, 1, threads, [&](std::size_t j, double* products) {
        RngStream rng(master_seed, j);
        Eigen::VectorXd xi(K), dw(K);
        double s1 = 0.0, s2 = 0.0;
        for (int i = 0; i < steps; ++i) {
          for (int k = 0; k < K; ++k) xi[k] = rng.next_normal();
          dw.noalias() = noise_factor * xi;
          s1 += w1[i] * dw[v1.mode];
          s2 += w2[i] * dw[v2.mode];
        }
        products[0] = s1 * s2;
      });

  IsometryReport report;
  report.samples = M;
  report.estimate = sums.mean(0);
  report.std_error = detail::standard_error(sums, 0);
  report.target = cov.matrix()(v1.mode, v2.mode) * (v1.poly * v2.poly).integral(0.0, grid.horizon());
  return report;
}

/// MC estimate of E[ <X0, v(0)> int <v, dW> ], which vanishes when the
/// initial state is independent of the driving increments.
struct MartingaleReport {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

inline MartingaleReport martingale_check(const PathEnsemble& e, const TestFunction& tf) {
  if (!e.has_increments())
    throw ValidationError("martingale check needs an ensemble simulated with keep_increments");
  const TimeGrid& grid = e.grid();
  const int n = tf.mode;
  std::vector<double> pw(grid.steps());
  const Polynomial anti = tf.poly.antiderivative();
  for (int i = 0; i < grid.steps(); ++i)
    pw[i] = (anti(grid.node(i + 1)) - anti(grid.node(i))) / grid.dt();

  Kahan sum, sumsq;
  for (std::size_t j = 0; j < e.samples(); ++j) {
    double stochastic = 0.0;
    for (int i = 0; i < grid.steps(); ++i) stochastic += pw[i] * e.increment(j, n, i);
    const double prod = e.value(j, n, 0) * tf.poly(0.0) * stochastic;
    sum.add(prod);
    sumsq.add(prod * prod);
  }
  MartingaleReport report;
  report.samples = e.samples();
  const double count = static_cast<double>(e.samples());
  report.estimate = sum.result() / count;
  if (e.samples() >= 2) {
    const double var = (sumsq.result() - sum.result() * sum.result() / count) / (count - 1.0);
    report.std_error = std::sqrt(std::max(0.0, var) / count);
  }
  return report;
}

}  // namespace momentfield
