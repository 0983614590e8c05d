#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "momentfield/errors.hpp"

namespace momentfield {

/// Relative tolerance for symmetry of user-supplied covariance matrices.
inline constexpr double kSymmetryTol = 1e-12;
/// Eigenvalues in [-kPsdTol * lambda_max, 0] are clipped to zero;
/// anything below is a genuine indefiniteness and gets rejected.
inline constexpr double kPsdTol = 1e-10;

/// Checks |m_ij - m_ji| <= kSymmetryTol * max(1, |m_ij|) entrywise and
/// throws naming the worst offender.
inline void require_symmetric(const Eigen::MatrixXd& m, const std::string& what) {
  if (m.rows() != m.cols())
    throw ValidationError(what + " must be square, got " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()));
  double worst = 0.0;
  Eigen::Index wi = 0, wj = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < m.cols(); ++j) {
      const double gap = std::abs(m(i, j) - m(j, i)) / std::max(1.0, std::abs(m(i, j)));
      if (gap > worst) {
        worst = gap;
        wi = i;
        wj = j;
      }
    }
  }
  if (worst > kSymmetryTol)
    throw ValidationError(what + " is not symmetric: entries (" + std::to_string(wi) + "," +
                          std::to_string(wj) + ") and (" + std::to_string(wj) + "," +
                          std::to_string(wi) + ") differ by relative " + std::to_string(worst));
}

/// Validates that the symmetric matrix is PSD within the clipping tolerance.
/// Throws ValidationError otherwise.
inline void require_psd(const Eigen::MatrixXd& sym, const std::string& what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo < -kPsdTol * std::max(hi, 0.0))
    throw ValidationError(what + " is not positive semidefinite: min eigenvalue " +
                          std::to_string(lo) + " vs max " + std::to_string(hi));
}

/// Symmetric-eigendecomposition square root with clipping of tolerated
/// negative eigenvalues: L = U diag(sqrt(max(lambda, 0))) U^T, L L^T = sym.
/// Handles rank-deficient input, which rules out plain Cholesky here.
inline Eigen::MatrixXd factor_psd(const Eigen::MatrixXd& sym, const std::string& what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const double hi = es.eigenvalues().maxCoeff();
  const double lo = es.eigenvalues().minCoeff();
  if (lo < -kPsdTol * std::max(hi, 0.0))
    throw ValidationError(what + " is not positive semidefinite: min eigenvalue " +
                          std::to_string(lo) + " vs max " + std::to_string(hi));
  Eigen::VectorXd sqrt_ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * sqrt_ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Smallest eigenvalue relative to the largest, for PSD diagnostics of
/// computed (not user-supplied) matrices.
inline double min_eigenvalue_ratio(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  const double hi = std::max(es.eigenvalues().maxCoeff(), 0.0);
  const double lo = es.eigenvalues().minCoeff();
  if (hi == 0.0) return lo >= 0.0 ? 0.0 : -1.0;
  return lo / hi;
}

}  // namespace momentfield
