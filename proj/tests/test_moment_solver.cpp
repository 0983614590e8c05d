#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "momentfield/moment_solver.hpp"
#include "momentfield/simulate.hpp"
#include "oracles.hpp"

using namespace momentfield;

namespace {

NoiseCovariance diag_cov(const SpectralOperator& op, std::initializer_list<double> gammas) {
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(op.modes(), op.modes());
  int k = 0;
  for (double g : gammas) q(k, k) = g, ++k;
  return NoiseCovariance::validate(q, op);
}

}  // namespace

TEST_CASE("closed-form field on the axes and in the stationary limit") {
  SpectralOperator op{(Eigen::VectorXd(1) << 1.0).finished()};
  const NoiseCovariance cov = diag_cov(op, {1.0});
  SECTION("zero initial data keeps the axes at zero") {
    const MomentEvaluator u(op, Eigen::MatrixXd::Zero(1, 1), cov.matrix());
    for (double t : {0.0, 0.2, 1.0, 5.0}) {
      REQUIRE(u.value(0, 0, t, 0.0) == 0.0);
      REQUIRE(u.value(0, 0, 0.0, t) == 0.0);
    }
  }
  SECTION("long times approach the stationary variance") {
    const MomentEvaluator u(op, Eigen::MatrixXd::Zero(1, 1), cov.matrix());
    REQUIRE_THAT(u.value(0, 0, 30.0, 30.0), Catch::Matchers::WithinRel(0.5, 1e-12));
  }
  SECTION("the two-time value matches its closed form and the quadrature oracle") {
    const MomentEvaluator u(op, Eigen::MatrixXd::Zero(1, 1), cov.matrix());
    const double got = u.value(0, 0, 1.0, 0.5);
    REQUIRE_THAT(got, Catch::Matchers::WithinRel(std::exp(-1.5) * (std::exp(1.0) - 1.0) / 2.0,
                                                 1e-14));
    REQUIRE_THAT(got, Catch::Matchers::WithinRel(oracles::duhamel_value(1.0, 1.0, 0.0, 1.0, 1.0,
                                                                        0.5),
                                                 1e-12));
  }
  SECTION("huge rate-times-horizon products stay finite") {
    const SpectralOperator stiff{(Eigen::VectorXd(2) << 40.0, 350.0).finished()};
    const MomentEvaluator u(stiff, 0.5 * Eigen::MatrixXd::Identity(2, 2),
                            Eigen::MatrixXd::Identity(2, 2));
    const double v = u.value(1, 1, 10.0, 10.0);
    REQUIRE(std::isfinite(v));
    REQUIRE_THAT(v, Catch::Matchers::WithinRel(1.0 / 700.0, 1e-12));  // gamma / (2 alpha)
  }
}

TEST_CASE("solver agrees with the brute-force Duhamel oracle") {
  std::mt19937_64 gen(2718);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 8; ++trial) {
    const int K = 1 + static_cast<int>(gen() % 4);
    Eigen::VectorXd alpha(K);
    double prev = 0.0;
    for (int k = 0; k < K; ++k) prev = alpha[k] = prev + 0.3 + 5.0 * unit(gen);
    const SpectralOperator op{alpha};
    const Eigen::MatrixXd q = oracles::random_psd(K, [&] { return unit(gen); });
    const Eigen::MatrixXd u0 = oracles::random_psd(K, [&] { return unit(gen); });
    const NoiseCovariance cov = NoiseCovariance::validate(q, op);
    const TimeGrid grid(0.5 + 2.0 * unit(gen), 6);
    const MomentField field = solve_second_moment(op, cov, u0, grid);
    for (int k = 0; k < K; ++k)
      for (int l = 0; l < K; ++l)
        for (int i = 0; i <= 6; ++i)
          for (int j = 0; j <= 6; ++j) {
            const double oracle = oracles::duhamel_value(alpha[k], alpha[l], u0(k, l), q(k, l),
                                                         grid.node(i), grid.node(j));
            const double got = field.value(k, l, i, j);
            REQUIRE(std::abs(got - oracle) <= 1e-10 * std::max(1.0, std::abs(oracle)));
          }
  }
}

TEST_CASE("covariance solve is the second-moment solve of the centered matrix") {
  const SpectralOperator op = make_dirichlet_laplacian(2);
  const NoiseCovariance cov = diag_cov(op, {1.0, 0.25});
  const TimeGrid grid(1.0, 8);
  SECTION("zero data, zero noise, zero field") {
    const MomentField f = solve_covariance(op, NoiseCovariance::zero(op),
                                           Eigen::MatrixXd::Zero(2, 2), grid);
    for (int k = 0; k < 2; ++k)
      for (std::size_t p = 0; p < f.pairs().size(); ++p) REQUIRE(f.at(k, k, p) == 0.0);
  }
  SECTION("the formula never sees the mean") {
    // deterministic initial data has zero covariance regardless of value
    const MomentField f = solve_covariance(op, cov, Eigen::MatrixXd::Zero(2, 2), grid);
    const MomentField g = solve_second_moment(op, cov, Eigen::MatrixXd::Zero(2, 2), grid);
    for (int k = 0; k < 2; ++k)
      for (int l = 0; l < 2; ++l)
        for (std::size_t p = 0; p < f.pairs().size(); ++p)
          REQUIRE(f.at(k, l, p) == g.at(k, l, p));
  }
  SECTION("cross-checks against the Monte Carlo covariance") {
    const Eigen::MatrixXd c0 = 0.2 * Eigen::MatrixXd::Identity(2, 2);
    Eigen::VectorXd mean(2);
    mean << 1.0, -0.5;
    const PathEnsemble e = simulate_paths(op, cov, InitialLaw::gaussian(mean, c0), grid,
                                          50'000, 33, {false, kDefaultMaxCells, 4});
    const MomentEstimate mc = mc_covariance(e, {kDefaultMaxCells, {}, 4});
    const MomentField det = solve_covariance(op, cov, c0, grid);
    for (int k = 0; k < 2; ++k)
      for (int l = 0; l < 2; ++l)
        for (std::size_t p = 0; p < mc.value.pairs().size(); ++p) {
          const auto [i, j] = mc.value.pairs().pair_at(p);
          const double se = mc.std_error.at(k, l, p);
          if (se == 0.0) continue;
          REQUIRE(std::abs(mc.value.at(k, l, p) - det.value(k, l, i, j)) <= 4.0 * se);
        }
  }
}

TEST_CASE("mean solve") {
  const SpectralOperator op = make_dirichlet_laplacian(4);
  const TimeGrid grid(1.0, 8);
  SECTION("zero stays zero and time zero is the data") {
    Eigen::VectorXd m(4);
    m << 1.0, 2.0, 3.0, 4.0;
    REQUIRE(solve_mean(op, Eigen::VectorXd::Zero(4), grid).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((solve_mean(op, m, grid).col(0) - m).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("matches the Monte Carlo mean") {
    Eigen::VectorXd m(4);
    m << 1.0, -1.0, 0.5, 0.0;
    const NoiseCovariance cov = diag_cov(op, {1.0, 0.5, 0.25, 0.125});
    const PathEnsemble e = simulate_paths(
        op, cov, InitialLaw::gaussian(m, 0.1 * Eigen::MatrixXd::Identity(4, 4)), grid, 50'000, 2);
    const MeanEstimate mc = mc_mean(e);
    const Eigen::MatrixXd det = solve_mean(op, m, grid);
    for (int k = 0; k < 4; ++k)
      for (int i = 0; i <= 8; ++i)
        REQUIRE(std::abs(mc.value(k, i) - det(k, i)) <=
                4.0 * std::max(mc.std_error(k, i), 1e-14));
  }
}

TEST_CASE("initial matrices are validated") {
  const SpectralOperator op = make_dirichlet_laplacian(2);
  const NoiseCovariance cov = diag_cov(op, {1.0, 0.25});
  const TimeGrid grid(1.0, 4);
  Eigen::MatrixXd indefinite(2, 2);
  indefinite << 1.0, 2.0, 2.0, 1.0;
  REQUIRE_THROWS_AS(solve_second_moment(op, cov, indefinite, grid), ValidationError);
  REQUIRE_THROWS_AS(solve_second_moment(op, cov, Eigen::MatrixXd::Zero(3, 3), grid),
                    ValidationError);
}

TEST_CASE("mean shifts add exactly the decayed rank-one term") {
  const SpectralOperator op = make_dirichlet_laplacian(2);
  const NoiseCovariance cov = diag_cov(op, {1.0, 0.25});
  const TimeGrid grid(1.0, 6);
  Eigen::VectorXd m(2);
  m << 0.7, -0.3;
  const Eigen::MatrixXd c0 = 0.1 * Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd m2 = c0 + m * m.transpose();
  const MomentField with_mean = solve_second_moment(op, cov, m2, grid);
  const MomentField centered = solve_covariance(op, cov, c0, grid);
  for (int k = 0; k < 2; ++k)
    for (int l = 0; l < 2; ++l)
      for (int i = 0; i <= 6; ++i)
        for (int j = 0; j <= 6; ++j) {
          const double rank_one = std::exp(-op.eigenvalue(k) * grid.node(i)) * m[k] *
                                  std::exp(-op.eigenvalue(l) * grid.node(j)) * m[l];
          const double diff = with_mean.value(k, l, i, j) - centered.value(k, l, i, j);
          REQUIRE_THAT(diff, Catch::Matchers::WithinAbs(rank_one, 1e-12));
        }
}

TEST_CASE("solved fields satisfy the Gram invariants") {
  std::mt19937_64 gen(404);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const SpectralOperator op = make_dirichlet_laplacian(3);
  const TimeGrid grid(1.0, 12);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::MatrixXd u0 = oracles::random_psd(3, [&] { return unit(gen); });
    const Eigen::MatrixXd q = oracles::random_psd(3, [&] { return unit(gen); });
    const MomentField f = solve_second_moment(op, NoiseCovariance::validate(q, op), u0, grid);
    REQUIRE(exchange_symmetry_error(f) == 0.0);
    REQUIRE(equal_time_min_eig_ratio(f) >= -kPsdTol);
    REQUIRE(gram_min_eig_ratio(f) >= -kPsdTol);
  }
}

TEST_CASE("storage caps fall back to the diagonal-plus-pairs layout") {
  const SpectralOperator op = make_dirichlet_laplacian(2);
  const NoiseCovariance cov = diag_cov(op, {1.0, 0.25});
  const TimeGrid grid(1.0, 32);
  SolveOptions opts;
  opts.max_cells = 1000;  // the full field would need 4 * 33^2 = 4356 cells
  opts.extra_pairs = {{0, 32}, {5, 7}};
  const MomentField sliced = solve_second_moment(op, cov, 0.1 * Eigen::MatrixXd::Identity(2, 2),
                                                 grid, opts);
  REQUIRE_FALSE(sliced.pairs().is_full());
  REQUIRE(sliced.has(5, 7));
  REQUIRE(sliced.has(7, 5));
  REQUIRE(sliced.has(32, 0));
  REQUIRE_FALSE(sliced.has(1, 2));
  const MomentField full = solve_second_moment(op, cov, 0.1 * Eigen::MatrixXd::Identity(2, 2),
                                               grid);
  for (int i = 0; i <= 32; ++i)
    REQUIRE(sliced.value(0, 1, i, i) == full.value(0, 1, i, i));
  REQUIRE(sliced.value(1, 0, 5, 7) == full.value(1, 0, 5, 7));
  REQUIRE_THROWS_AS(sliced.value(0, 0, 1, 2), DomainError);
}

TEST_CASE("second moments cross-check the simulator at one off-diagonal time pair") {
  SpectralOperator op{(Eigen::VectorXd(1) << 1.0).finished()};
  const NoiseCovariance cov = diag_cov(op, {1.0});
  const TimeGrid grid(1.0, 2);  // nodes 0, 0.5, 1
  const PathEnsemble e = simulate_paths(op, cov,
                                        InitialLaw::deterministic(Eigen::VectorXd::Zero(1)), grid,
                                        200'000, 6, {false, kDefaultMaxCells, 4});
  const MomentEstimate mc = mc_second_moment(e, {kDefaultMaxCells, {}, 4});
  const MomentField det = solve_second_moment(op, cov, Eigen::MatrixXd::Zero(1, 1), grid);
  const double se = mc.std_error.value(0, 0, 2, 1);
  REQUIRE(se > 0.0);
  REQUIRE(std::abs(mc.value.value(0, 0, 2, 1) - det.value(0, 0, 2, 1)) <= 4.0 * se);
}
