#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>

#include "momentfield/errors.hpp"

namespace momentfield {

/// Which norm of the Gelfand triple V subset H subset V* to evaluate.
/// In the eigenbasis the three norms carry weights alpha_k, 1, 1/alpha_k.
enum class Space { H, V, Vstar };

/// A densely defined, self-adjoint, positive definite operator represented
/// by its eigenvalues at truncation level K. Everything downstream lives in
/// coefficient space, so eigenfunctions never materialize.
class SpectralOperator {
public:
  explicit SpectralOperator(Eigen::VectorXd eigenvalues) : alpha_(std::move(eigenvalues)) {
    if (alpha_.size() < 1) throw DomainError("operator needs at least one eigenvalue");
    for (Eigen::Index k = 0; k < alpha_.size(); ++k) {
      if (!(alpha_[k] > 0.0))
        throw ValidationError("eigenvalue " + std::to_string(k) + " is not positive");
      if (k > 0 && alpha_[k] < alpha_[k - 1])
        throw ValidationError("eigenvalues must be nondecreasing (violated at index " +
                              std::to_string(k) + ")");
    }
  }

  int modes() const { return static_cast<int>(alpha_.size()); }
  const Eigen::VectorXd& eigenvalues() const { return alpha_; }
  double eigenvalue(int k) const { return alpha_[k]; }
  double max_eigenvalue() const { return alpha_[alpha_.size() - 1]; }

  /// Applies the analytic contraction semigroup S(t) = exp(-tA) mode by mode.
  Eigen::VectorXd semigroup_apply(double t, const Eigen::VectorXd& v) const {
    if (t < 0.0) throw DomainError("semigroup time must be nonnegative");
    check_length(v);
    return (-t * alpha_.array()).exp() * v.array();
  }

  /// Per-mode decay factors exp(-alpha_k * t).
  Eigen::VectorXd decay(double t) const {
    if (t < 0.0) throw DomainError("semigroup time must be nonnegative");
    return (-t * alpha_.array()).exp();
  }

  double norm(Space space, const Eigen::VectorXd& v) const {
    check_length(v);
    switch (space) {
      case Space::H:
        return v.norm();
      case Space::V:
        return std::sqrt((alpha_.array() * v.array().square()).sum());
      case Space::Vstar:
        return std::sqrt((v.array().square() / alpha_.array()).sum());
    }
    throw DomainError("unknown space");
  }

  /// The parabolic smoothing integral of the V-norm of S(t)v over [0,T],
  /// in closed form: sum_k v_k^2 (1 - exp(-2 alpha_k T)) / 2.
  /// Always bounded by half the squared H-norm of v.
  double smoothing_integral(double horizon, const Eigen::VectorXd& v) const {
    if (horizon < 0.0) throw DomainError("horizon must be nonnegative");
    check_length(v);
    double acc = 0.0;
    for (Eigen::Index k = 0; k < alpha_.size(); ++k)
      acc += v[k] * v[k] * (-std::expm1(-2.0 * alpha_[k] * horizon)) * 0.5;
    return acc;
  }

private:
  void check_length(const Eigen::VectorXd& v) const {
    if (v.size() != alpha_.size())
      throw ValidationError("coefficient vector has length " + std::to_string(v.size()) +
                            ", operator has " + std::to_string(alpha_.size()) + " modes");
  }

  Eigen::VectorXd alpha_;
};

/// Canonical instance: the 1-D Dirichlet Laplacian on the unit interval,
/// eigenvalues (k pi)^2 for k = 1..K.
inline SpectralOperator make_dirichlet_laplacian(int K) {
  if (K < 1) throw DomainError("mode count must be at least 1");
  constexpr double pi = 3.14159265358979323846;
  Eigen::VectorXd alpha(K);
  for (int k = 1; k <= K; ++k) alpha[k - 1] = (k * pi) * (k * pi);
  return SpectralOperator(std::move(alpha));
}

}  // namespace momentfield
