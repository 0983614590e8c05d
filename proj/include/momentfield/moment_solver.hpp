#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "momentfield/errors.hpp"
#include "momentfield/moment_field.hpp"
#include "momentfield/noise.hpp"
#include "momentfield/parallel.hpp"
#include "momentfield/psd.hpp"
#include "momentfield/spectral_operator.hpp"
#include "momentfield/time_grid.hpp"

namespace momentfield {

/// Closed-form evaluator of the two-time moment field
///
///   u_kl(t,t') = e^{-a_k t - a_l t'} u0_kl
///              + q_kl e^{-a_k(t-m) - a_l(t'-m)} (1 - e^{-(a_k+a_l)m}) / (a_k+a_l),
///
/// with m = min(t,t'): propagated initial data plus the diagonal-in-time
/// forcing integrated by the tensor product of the semigroups (two-time
/// Duhamel form). The forcing factor is evaluated through expm1 of a
/// nonpositive argument, so it neither overflows for large rates nor
/// cancels for small m.
class MomentEvaluator {
public:
  MomentEvaluator(SpectralOperator op, Eigen::MatrixXd initial, Eigen::MatrixXd forcing)
      : op_(std::move(op)), u0_(std::move(initial)), q_(std::move(forcing)) {
    if (u0_.rows() != op_.modes() || u0_.cols() != op_.modes())
      throw ValidationError("initial matrix must be " + std::to_string(op_.modes()) + "x" +
                            std::to_string(op_.modes()));
    if (q_.rows() != op_.modes() || q_.cols() != op_.modes())
      throw ValidationError("forcing matrix must be " + std::to_string(op_.modes()) + "x" +
                            std::to_string(op_.modes()));
  }

  const SpectralOperator& op() const { return op_; }
  const Eigen::MatrixXd& initial() const { return u0_; }
  const Eigen::MatrixXd& forcing() const { return q_; }

  double value(int k, int l, double t, double tp) const {
    const double ak = op_.eigenvalue(k);
    const double al = op_.eigenvalue(l);
    const double m = std::min(t, tp);
    const double decay = std::exp(-ak * t - al * tp);
    const double rate = ak + al;
    const double load = std::exp(-ak * (t - m) - al * (tp - m)) * (-std::expm1(-rate * m)) / rate;
    return decay * u0_(k, l) + q_(k, l) * load;
  }

  /// Samples the evaluator on the grid's stored pair set.
  MomentField sample(const TimeGrid& grid, const TimePairSet& pairs, FieldProvenance provenance,
                     int threads = 1) const {
    const int K = op_.modes();
    MomentField field(K, grid, pairs, provenance);
    // Mode pairs write to disjoint slices, so the parallel fill is
    // deterministic regardless of scheduling.
    parallel_chunks(static_cast<std::size_t>(K) * K, threads, [&](std::size_t c) {
      const int k = static_cast<int>(c) / K;
      const int l = static_cast<int>(c) % K;
      for (std::size_t idx = 0; idx < pairs.size(); ++idx) {
        const auto [i, j] = pairs.pair_at(idx);
        field.at(k, l, idx) = value(k, l, grid.node(i), grid.node(j));
      }
    });
    return field;
  }

private:
  SpectralOperator op_;
  Eigen::MatrixXd u0_;
  Eigen::MatrixXd q_;
};

struct SolveOptions {
  std::size_t max_cells = kDefaultMaxCells;
  std::vector<std::pair<int, int>> extra_pairs;  // kept when the cap forces slicing
  int threads = 1;
};

/// Second-moment field with initial datum u0 = E[X0 (x) X0]. The initial
/// matrix must be PSD; anything else has no second-moment interpretation
/// and is rejected rather than repaired.
inline MomentField solve_second_moment(const SpectralOperator& op, const NoiseCovariance& cov,
                                       const Eigen::MatrixXd& initial_moment, const TimeGrid& grid,
                                       const SolveOptions& opts = {}) {
  if (initial_moment.rows() != op.modes() || initial_moment.cols() != op.modes())
    throw ValidationError("initial moment matrix must be " + std::to_string(op.modes()) + "x" +
                          std::to_string(op.modes()));
  require_symmetric(initial_moment, "initial moment matrix");
  require_psd(0.5 * (initial_moment + initial_moment.transpose()), "initial moment matrix");
  const MomentEvaluator eval(op, 0.5 * (initial_moment + initial_moment.transpose()), cov.matrix());
  const TimePairSet pairs = choose_pair_set(op.modes(), grid, opts.max_cells, opts.extra_pairs);
  return eval.sample(grid, pairs, FieldProvenance::DeterministicSolve, opts.threads);
}

/// Covariance field: same propagation with u0 = Cov(X0). The forcing term
/// is identical, so this is solve_second_moment as a function of the
/// initial matrix.
inline MomentField solve_covariance(const SpectralOperator& op, const NoiseCovariance& cov,
                                    const Eigen::MatrixXd& initial_covariance, const TimeGrid& grid,
                                    const SolveOptions& opts = {}) {
  return solve_second_moment(op, cov, initial_covariance, grid, opts);
}

/// Mean field: the noiseless decay of the initial mean, K x (N+1).
inline Eigen::MatrixXd solve_mean(const SpectralOperator& op, const Eigen::VectorXd& initial_mean,
                                  const TimeGrid& grid) {
  Eigen::MatrixXd mean(op.modes(), grid.nodes());
  for (int i = 0; i < grid.nodes(); ++i) mean.col(i) = op.semigroup_apply(grid.node(i), initial_mean);
  return mean;
}

}  // namespace momentfield
