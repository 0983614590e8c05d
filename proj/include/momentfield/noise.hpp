#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include "momentfield/errors.hpp"
#include "momentfield/psd.hpp"
#include "momentfield/rng.hpp"
#include "momentfield/spectral_operator.hpp"

namespace momentfield {

/// Diagonal spectral profile gamma_n = c * n^(-p), remembered when a
/// covariance is built from one so admissibility advisories can reason
/// about the untruncated tail.
struct DiagonalProfile {
  double c = 1.0;
  double p = 2.0;
};

/// Trace-class noise covariance expressed as a matrix in the operator's
/// eigenbasis. Covers both the co-diagonal case (eigenvalue profile on the
/// diagonal) and covariances that do not commute with the operator.
class NoiseCovariance {
public:
  /// Symmetry-checks, symmetrizes by averaging, PSD-checks, and computes
  /// the traces. The operator fixes the dimension and the weights of the
  /// A-weighted trace.
  static NoiseCovariance validate(const Eigen::MatrixXd& raw, const SpectralOperator& op,
                                  std::optional<DiagonalProfile> profile = std::nullopt) {
    if (raw.rows() != op.modes() || raw.cols() != op.modes())
      throw ValidationError("covariance is " + std::to_string(raw.rows()) + "x" +
                            std::to_string(raw.cols()) + ", operator has " +
                            std::to_string(op.modes()) + " modes");
    require_symmetric(raw, "noise covariance");
    Eigen::MatrixXd sym = 0.5 * (raw + raw.transpose());
    require_psd(sym, "noise covariance");
    NoiseCovariance cov;
    cov.q_ = std::move(sym);
    cov.trace_ = cov.q_.trace();
    cov.trace_aq_ = (op.eigenvalues().array() * cov.q_.diagonal().array()).sum();
    cov.profile_ = profile;
    return cov;
  }

  static NoiseCovariance zero(const SpectralOperator& op) {
    return validate(Eigen::MatrixXd::Zero(op.modes(), op.modes()), op);
  }

  /// gamma_n = c * n^(-p) on the diagonal, truncated to the operator's modes.
  static NoiseCovariance from_profile(const DiagonalProfile& profile, const SpectralOperator& op) {
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(op.modes(), op.modes());
    for (int n = 1; n <= op.modes(); ++n) q(n - 1, n - 1) = profile.c * std::pow(n, -profile.p);
    return validate(q, op, profile);
  }

  const Eigen::MatrixXd& matrix() const { return q_; }
  int modes() const { return static_cast<int>(q_.rows()); }
  double trace() const { return trace_; }
  double trace_aq() const { return trace_aq_; }
  const std::optional<DiagonalProfile>& profile() const { return profile_; }

private:
  NoiseCovariance() = default;

  Eigen::MatrixXd q_;
  double trace_ = 0.0;
  double trace_aq_ = 0.0;
  std::optional<DiagonalProfile> profile_;
};

/// A factor L with L L^T equal to the covariance it came from.
struct NoiseFactor {
  Eigen::MatrixXd L;
};

/// Pseudo-square-root by symmetric eigendecomposition (rank-deficient
/// covariances are allowed; tiny negative eigenvalues are clipped).
inline NoiseFactor factor(const NoiseCovariance& cov) {
  return NoiseFactor{factor_psd(cov.matrix(), "noise covariance")};
}

/// Exact covariance of the stochastic-convolution increment
/// int_0^dt S(dt - s) dW(s), entry (k,l):
///   q_kl * (1 - exp(-(alpha_k + alpha_l) dt)) / (alpha_k + alpha_l).
/// Follows from the Ito isometry applied mode pair by mode pair.
inline Eigen::MatrixXd convolution_increment_covariance(const SpectralOperator& op,
                                                        const NoiseCovariance& cov, double dt) {
  if (!(dt > 0.0)) throw DomainError("step size must be positive");
  const int K = op.modes();
  Eigen::MatrixXd c(K, K);
  for (int k = 0; k < K; ++k) {
    for (int l = k; l < K; ++l) {
      const double rate = op.eigenvalue(k) + op.eigenvalue(l);
      const double v = cov.matrix()(k, l) * (-std::expm1(-rate * dt)) / rate;
      c(k, l) = v;
      c(l, k) = v;
    }
  }
  return c;
}

/// Squared Hilbert-Schmidt norm of Phi Q^{1/2} for a diagonal multiplier
/// Phi = diag(phi_k): Tr(Phi q Phi^T) = sum_k phi_k^2 q_kk. Kernel modes of
/// a rank-deficient covariance contribute zero, matching the pseudo-inverse
/// convention for the reproducing space of Q.
inline double hs_norm_squared(const SpectralOperator& op, const NoiseCovariance& cov,
                              const Eigen::VectorXd& phi_diag) {
  if (phi_diag.size() != op.modes())
    throw ValidationError("multiplier length does not match operator modes");
  return (phi_diag.array().square() * cov.matrix().diagonal().array()).sum();
}

/// One Wiener increment over a step of length dt: sqrt(dt) * L * xi,
/// marginal law N(0, dt * q). Consumes exactly K normals from the stream.
inline Eigen::VectorXd sample_increments(const NoiseFactor& fac, double dt, RngStream& rng) {
  if (!(dt > 0.0)) throw DomainError("step size must be positive");
  const Eigen::Index K = fac.L.rows();
  Eigen::VectorXd xi(K);
  for (Eigen::Index k = 0; k < K; ++k) xi[k] = rng.next_normal();
  return std::sqrt(dt) * (fac.L * xi);
}

/// Joint covariance of the pair (convolution increment eta, Wiener
/// increment dW) over one step, blockwise
///   [ C_ee  C_ew ]      C_ee(k,l) = q_kl (1-e^{-(a_k+a_l)dt})/(a_k+a_l)
///   [ C_ew' C_ww ],     C_ew(k,l) = q_kl (1-e^{-a_k dt})/a_k
///                       C_ww(k,l) = q_kl dt.
/// Sampling the pair jointly keeps node values exact in law while the
/// retained Wiener increments stay consistent with the paths they drove.
inline Eigen::MatrixXd joint_step_covariance(const SpectralOperator& op, const NoiseCovariance& cov,
                                             double dt) {
  if (!(dt > 0.0)) throw DomainError("step size must be positive");
  const int K = op.modes();
  Eigen::MatrixXd j(2 * K, 2 * K);
  j.topLeftCorner(K, K) = convolution_increment_covariance(op, cov, dt);
  Eigen::MatrixXd cross(K, K);
  for (int k = 0; k < K; ++k) {
    const double load = -std::expm1(-op.eigenvalue(k) * dt) / op.eigenvalue(k);
    for (int l = 0; l < K; ++l) cross(k, l) = cov.matrix()(k, l) * load;
  }
  j.block(0, K, K, K) = cross;
  j.block(K, 0, K, K) = cross.transpose();
  j.bottomRightCorner(K, K) = dt * cov.matrix();
  return j;
}

}  // namespace momentfield
