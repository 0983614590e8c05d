#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "momentfield/errors.hpp"

namespace momentfield {

/// Gauss-Legendre nodes and weights on [0, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Computes the n-point Gauss-Legendre rule by Newton iteration on the
/// Legendre polynomial, then maps [-1,1] -> [0,1].
inline GaussRule gauss_legendre(int n) {
  if (n < 1) throw DomainError("quadrature order must be positive");
  GaussRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  constexpr double pi = 3.14159265358979323846;
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    // Chebyshev-based initial guess for the i-th positive root.
    double x = std::cos(pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      // Recurrence for P_n(x) and its derivative.
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      pp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * pp * pp);
    rule.nodes[static_cast<std::size_t>(i)] = 0.5 * (1.0 - x);
    rule.weights[static_cast<std::size_t>(i)] = 0.5 * w;
    rule.nodes[static_cast<std::size_t>(n - 1 - i)] = 0.5 * (1.0 + x);
    rule.weights[static_cast<std::size_t>(n - 1 - i)] = 0.5 * w;
  }
  return rule;
}

/// Integrates f over [a, b] with `panels` uniform Gauss-Legendre panels.
template <class F>
double integrate_panels(F&& f, double a, double b, int panels, const GaussRule& rule) {
  const double w = (b - a) / panels;
  double acc = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + p * w;
    double panel = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
      panel += rule.weights[i] * f(lo + w * rule.nodes[i]);
    acc += w * panel;
  }
  return acc;
}

namespace detail {

/// One triangle of a diagonal cell [x0,x0+w]^2, integrated through the
/// collapsed (Duffy) map so the kink edge t == t' becomes a coordinate
/// line and the integrand is smooth on the mapped square.
/// lower = true integrates {t' <= t}, false integrates {t <= t'}.
template <class F>
double integrate_duffy_triangle(F&& f, double x0, double w, bool lower, const GaussRule& rule) {
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double x = rule.nodes[i];
    double inner = 0.0;
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
      const double y = rule.nodes[j];
      const double t = x0 + w * x;
      const double s = x0 + w * x * y;
      inner += rule.weights[j] * (lower ? f(t, s) : f(s, t));
    }
    acc += rule.weights[i] * inner * x;  // Jacobian w^2 * x, w^2 applied below
  }
  return acc * w * w;
}

}  // namespace detail

/// Integrates f over [0, T]^2 on a panels x panels mesh. Off-diagonal cells
/// use the tensorized rule; cells crossed by the diagonal t == t' are split
/// into two triangles so a kink along the diagonal does not degrade the
/// convergence order.
template <class F>
double integrate_square_diagonal_split(F&& f, double T, int panels, const GaussRule& rule) {
  const double w = T / panels;
  const std::size_t n = rule.nodes.size();
  std::vector<double> pts(n);
  double acc = 0.0;
  for (int a = 0; a < panels; ++a) {
    const double t0 = a * w;
    for (std::size_t i = 0; i < n; ++i) pts[i] = t0 + w * rule.nodes[i];
    for (int b = 0; b < panels; ++b) {
      if (a == b) continue;
      const double s0 = b * w;
      double cell = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double inner = 0.0;
        for (std::size_t j = 0; j < n; ++j) inner += rule.weights[j] * f(pts[i], s0 + w * rule.nodes[j]);
        cell += rule.weights[i] * inner;
      }
      acc += cell * w * w;
    }
  }
  for (int a = 0; a < panels; ++a) {
    const double t0 = a * w;
    acc += detail::integrate_duffy_triangle(f, t0, w, true, rule);
    acc += detail::integrate_duffy_triangle(f, t0, w, false, rule);
  }
  return acc;
}

/// Result of the self-verifying square integration.
struct SquareIntegral {
  double value = 0.0;       // finest-level result
  double refinement = 0.0;  // |change| in the last panel doubling
  int panels = 0;           // panel count of the accepted level
};

/// Integrates f over [0,T]^2 with the diagonal-split mesh, doubling the
/// panel count until one refinement changes the result by no more than
/// rel_tol * max(1, |value|). Throws NumericError when either the
/// doubling count or the absolute panel cap is exhausted; the panel cap
/// keeps a hopeless integrand from consuming quadratic work per level.
template <class F>
SquareIntegral integrate_square_verified(F&& f, double T, int initial_panels, double rel_tol,
                                         const GaussRule& rule, int max_doublings = 5,
                                         int max_panels = 512) {
  int panels = std::min(initial_panels, max_panels);
  double coarse = integrate_square_diagonal_split(f, T, panels, rule);
  for (int level = 0; level < max_doublings && panels <= max_panels / 2; ++level) {
    panels *= 2;
    const double fine = integrate_square_diagonal_split(f, T, panels, rule);
    const double change = std::abs(fine - coarse);
    if (change <= rel_tol * std::max(1.0, std::abs(fine)))
      return SquareIntegral{fine, change, panels};
    coarse = fine;
  }
  throw NumericError("square quadrature did not settle within the panel refinement cap");
}

}  // namespace momentfield
