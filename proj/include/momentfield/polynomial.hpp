#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "momentfield/errors.hpp"

namespace momentfield {

/// Real polynomial in monomial basis; coefficient arithmetic is exact for
/// derivative and antiderivative, so time integrals of test-function
/// products have no quadrature error.
class Polynomial {
public:
  Polynomial() : coeffs_{0.0} {}
  Polynomial(std::initializer_list<double> coeffs) : coeffs_(coeffs) { normalize(); }
  explicit Polynomial(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) { normalize(); }

  /// p(t) = c (constant).
  static Polynomial constant(double c) { return Polynomial{c}; }

  /// p(t) = (T - t) * t^a, the canonical test-function family vanishing at T.
  static Polynomial bubble(double T, int a) {
    std::vector<double> c(static_cast<std::size_t>(a) + 2, 0.0);
    c[static_cast<std::size_t>(a)] = T;
    c[static_cast<std::size_t>(a) + 1] = -1.0;
    return Polynomial(std::move(c));
  }

  int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
  const std::vector<double>& coefficients() const { return coeffs_; }

  double operator()(double t) const {
    double acc = 0.0;
    for (std::size_t i = coeffs_.size(); i-- > 0;) acc = acc * t + coeffs_[i];
    return acc;
  }

  Polynomial derivative() const {
    if (coeffs_.size() == 1) return Polynomial{0.0};
    std::vector<double> d(coeffs_.size() - 1);
    for (std::size_t i = 1; i < coeffs_.size(); ++i) d[i - 1] = coeffs_[i] * static_cast<double>(i);
    return Polynomial(std::move(d));
  }

  Polynomial antiderivative() const {
    std::vector<double> a(coeffs_.size() + 1, 0.0);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) a[i + 1] = coeffs_[i] / static_cast<double>(i + 1);
    return Polynomial(std::move(a));
  }

  /// Definite integral over [a, b] via the exact antiderivative.
  double integral(double a, double b) const {
    const Polynomial anti = antiderivative();
    return anti(b) - anti(a);
  }

  Polynomial operator*(const Polynomial& other) const {
    std::vector<double> prod(coeffs_.size() + other.coeffs_.size() - 1, 0.0);
    for (std::size_t i = 0; i < coeffs_.size(); ++i)
      for (std::size_t j = 0; j < other.coeffs_.size(); ++j)
        prod[i + j] += coeffs_[i] * other.coeffs_[j];
    return Polynomial(std::move(prod));
  }

  Polynomial operator+(const Polynomial& other) const {
    std::vector<double> sum(std::max(coeffs_.size(), other.coeffs_.size()), 0.0);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) sum[i] += coeffs_[i];
    for (std::size_t i = 0; i < other.coeffs_.size(); ++i) sum[i] += other.coeffs_[i];
    return Polynomial(std::move(sum));
  }

  Polynomial operator*(double s) const {
    std::vector<double> c = coeffs_;
    for (double& x : c) x *= s;
    return Polynomial(std::move(c));
  }

  double max_abs_coefficient() const {
    double m = 0.0;
    for (double c : coeffs_) m = std::max(m, std::abs(c));
    return m;
  }

private:
  void normalize() {
    while (coeffs_.size() > 1 && coeffs_.back() == 0.0) coeffs_.pop_back();
    if (coeffs_.empty()) coeffs_.push_back(0.0);
  }

  std::vector<double> coeffs_;  // coeffs_[i] multiplies t^i
};

/// A space-time test function p(t) * e_mode with polynomial time part.
struct TestFunction {
  Polynomial poly;
  int mode = 0;
};

/// Members of the dual-side test space must vanish at the horizon and stay
/// within the supported degree.
inline void require_test_function(const Polynomial& p, double horizon) {
  if (p.degree() > 6)
    throw ValidationError("test-function polynomial degree " + std::to_string(p.degree()) +
                          " exceeds 6");
  const double scale = std::max(1.0, p.max_abs_coefficient() * std::pow(std::max(1.0, horizon),
                                                                        p.degree()));
  if (std::abs(p(horizon)) > 1e-12 * scale)
    throw ValidationError("test function must vanish at the horizon (p(T) = " +
                          std::to_string(p(horizon)) + ")");
}

}  // namespace momentfield
