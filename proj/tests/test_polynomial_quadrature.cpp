#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "momentfield/polynomial.hpp"
#include "momentfield/quadrature.hpp"
#include "oracles.hpp"

using namespace momentfield;

TEST_CASE("polynomial arithmetic is exact") {
  const Polynomial p{1.0, -2.0, 3.0};  // 1 - 2t + 3t^2
  REQUIRE(p(0.0) == 1.0);
  REQUIRE(p(2.0) == 1.0 - 4.0 + 12.0);
  const Polynomial d = p.derivative();
  REQUIRE(d(0.5) == -2.0 + 3.0);
  REQUIRE(p.antiderivative().derivative()(0.7) == p(0.7));
  REQUIRE_THAT(p.integral(0.0, 1.0), Catch::Matchers::WithinRel(1.0 - 1.0 + 1.0, 1e-15));
  const Polynomial q{0.0, 1.0};
  REQUIRE((p * q)(1.5) == p(1.5) * 1.5);
  REQUIRE((p + q)(1.5) == p(1.5) + 1.5);
  REQUIRE((p * 2.0)(1.5) == 2.0 * p(1.5));
}

TEST_CASE("bubble test functions vanish at the horizon exactly") {
  for (int a = 0; a <= 3; ++a) {
    for (double T : {0.3, 1.0, 7.5}) {
      const Polynomial b = Polynomial::bubble(T, a);
      REQUIRE(b(T) == 0.0);
      REQUIRE_NOTHROW(require_test_function(b, T));
    }
  }
  REQUIRE_THROWS_AS(require_test_function(Polynomial::constant(1.0), 1.0), ValidationError);
  REQUIRE_THROWS_AS(require_test_function(Polynomial{0, 0, 0, 0, 0, 0, 0, 1.0}, 1.0),
                    ValidationError);  // degree 7
}

TEST_CASE("Gauss-Legendre rules integrate high-order monomials") {
  const GaussRule rule = gauss_legendre(16);
  double weight_sum = 0.0;
  for (double w : rule.weights) weight_sum += w;
  REQUIRE_THAT(weight_sum, Catch::Matchers::WithinRel(1.0, 1e-14));
  // n-point rule is exact up to degree 2n-1
  for (int deg : {0, 5, 17, 31}) {
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
      acc += rule.weights[i] * std::pow(rule.nodes[i], deg);
    REQUIRE_THAT(acc, Catch::Matchers::WithinRel(1.0 / (deg + 1), 1e-13));
  }
  const GaussRule rule5 = gauss_legendre(5);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule5.nodes.size(); ++i)
    acc += rule5.weights[i] * std::pow(rule5.nodes[i], 9);
  REQUIRE_THAT(acc, Catch::Matchers::WithinRel(0.1, 1e-13));
}

TEST_CASE("panel integration of a smooth function") {
  const GaussRule rule = gauss_legendre(16);
  const double value = integrate_panels([](double t) { return std::exp(-3.0 * t); }, 0.0, 2.0, 4,
                                        rule);
  REQUIRE_THAT(value, Catch::Matchers::WithinRel((1.0 - std::exp(-6.0)) / 3.0, 1e-14));
}

TEST_CASE("diagonal-split square quadrature handles the kink") {
  const GaussRule rule = gauss_legendre(16);
  SECTION("|t - t'| integrates exactly once split") {
    const double value =
        integrate_square_diagonal_split([](double t, double s) { return std::abs(t - s); }, 1.0, 3,
                                        rule);
    REQUIRE_THAT(value, Catch::Matchers::WithinRel(1.0 / 3.0, 1e-14));
  }
  SECTION("min(t, t') integrates exactly once split") {
    // int int min(t,s) over [0,1]^2 = 1/3
    const double value =
        integrate_square_diagonal_split([](double t, double s) { return std::min(t, s); }, 1.0, 2,
                                        rule);
    REQUIRE_THAT(value, Catch::Matchers::WithinRel(1.0 / 3.0, 1e-14));
  }
  SECTION("smooth tensor products agree with 1-D quadrature") {
    const double value = integrate_square_diagonal_split(
        [](double t, double s) { return std::exp(-t - 2.0 * s); }, 1.5, 2, rule);
    const double one_d =
        (1.0 - std::exp(-1.5)) * (1.0 - std::exp(-3.0)) / 2.0;
    REQUIRE_THAT(value, Catch::Matchers::WithinRel(one_d, 1e-13));
  }
}

TEST_CASE("verified square integration refines and reports") {
  const GaussRule rule = gauss_legendre(16);
  const SquareIntegral r = integrate_square_verified(
      [](double t, double s) { return std::exp(-(t + s)) * std::abs(t - s); }, 1.0, 2, 1e-10, rule);
  const double oracle = oracles::integrate(
      [&](double t) {
        return oracles::integrate(
            [&](double s) { return std::exp(-(t + s)) * std::abs(t - s); }, 0.0, 1.0, 1e-13);
      },
      0.0, 1.0, 1e-12);
  REQUIRE_THAT(r.value, Catch::Matchers::WithinRel(oracle, 1e-9));
  REQUIRE(r.refinement <= 1e-10 * std::max(1.0, std::abs(r.value)));

  SECTION("a hopeless integrand trips the refinement cap") {
    REQUIRE_THROWS_AS(integrate_square_verified(
                          [](double t, double s) { return std::cos(4000.0 * t * s); }, 1.0, 1,
                          1e-14, gauss_legendre(2), 2),
                      NumericError);
  }
}
