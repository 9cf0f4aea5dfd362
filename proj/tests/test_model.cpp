#include <catch2/catch_amalgamated.hpp>

#include "mctm/model.hpp"
#include "test_helpers.hpp"

using namespace mctm;
using mctm::testing::fd_gradient;
using mctm::testing::random_instance;
using mctm::testing::raw_expansion;

TEST_CASE("single-cell loss evaluates to 0.5") {
  Eigen::MatrixXd A(1, 1), Ap(1, 1);
  A << 1.0;
  Ap << 1.0;
  const BasisExpansion ex = raw_expansion(A, Ap, 1);
  ModelParams p = ModelParams::zeros(1, 1, 1e-8);
  p.theta[0](0) = 1.0;
  const LossBreakdown loss = nll(ex, p);
  CHECK_THAT(loss.total, Catch::Matchers::WithinAbs(0.5, 1e-14));
  CHECK(loss.clamp_count == 0);

  Eigen::VectorXd w(1);
  w << 3.0;
  CHECK_THAT(nll(ex, p, w).total, Catch::Matchers::WithinAbs(1.5, 1e-14));
}

TEST_CASE("two-dimensional hand-evaluated loss") {
  // n=1, J=2, d=1, all basis entries 1, theta = (1,1), lambda_21 = 1:
  // 0.5 * 1^2 + 0.5 * (1 + 1)^2 = 2.5 with zero log contribution.
  Eigen::MatrixXd A(1, 2), Ap(1, 2);
  A << 1.0, 1.0;
  Ap << 1.0, 1.0;
  const BasisExpansion ex = raw_expansion(A, Ap, 2);
  ModelParams p = ModelParams::zeros(2, 1, 1e-8);
  p.theta[0](0) = 1.0;
  p.theta[1](0) = 1.0;
  p.lambda_strict(0) = 1.0;
  const LossBreakdown loss = nll(ex, p);
  CHECK_THAT(loss.total, Catch::Matchers::WithinAbs(2.5, 1e-14));

  // Independent scalar re-evaluation of the same formula.
  double expected = 0.0;
  const double m1 = 1.0, m2 = 1.0;
  expected += 0.5 * m1 * m1 - std::log(1.0);
  expected += 0.5 * (1.0 * m1 + m2) * (1.0 * m1 + m2) - std::log(1.0);
  CHECK_THAT(loss.total, Catch::Matchers::WithinAbs(expected, 1e-14));
}

TEST_CASE("loss split signs and composition") {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    auto [ex, p] = random_instance(rng, 6, 2, 3);
    const LossBreakdown loss = nll(ex, p);
    CHECK(loss.f1 >= 0.0);
    CHECK(loss.f2 >= 0.0);
    CHECK(loss.f3 >= 0.0);
    CHECK(loss.total == loss.f1 - loss.f2 + loss.f3);
  }
}

TEST_CASE("weight linearity") {
  Rng rng(22);
  auto [ex, p] = random_instance(rng, 12, 2, 3);
  Eigen::VectorXd w(12);
  for (Eigen::Index i = 0; i < 12; ++i) w(i) = rng.uniform(0.1, 3.0);
  const double weighted = nll(ex, p, w).total;
  double accumulated = 0.0;
  for (Eigen::Index i = 0; i < 12; ++i)
    accumulated += w(i) * nll(ex.subset({i}), p).total;
  CHECK_THAT(weighted, Catch::Matchers::WithinAbs(accumulated, 1e-10));
}

TEST_CASE("clamped cells floor the log argument and count") {
  Eigen::MatrixXd A(1, 1), Ap(1, 1);
  A << 1.0;
  Ap << -2.0;  // negative log argument, must clamp
  const BasisExpansion ex = raw_expansion(A, Ap, 1);
  ModelParams p = ModelParams::zeros(1, 1, 1e-3);
  p.theta[0](0) = 1.0;
  const LossBreakdown loss = nll(ex, p);
  CHECK(loss.clamp_count == 1);
  CHECK_THAT(loss.f3, Catch::Matchers::WithinAbs(-std::log(1e-3), 1e-12));

  p.eta = 0.0;
  CHECK_THROWS_AS(nll(ex, p), std::domain_error);
}

TEST_CASE("stationary single-cell gradient") {
  Eigen::MatrixXd A(1, 1), Ap(1, 1);
  A << 1.0;
  Ap << 1.0;
  const BasisExpansion ex = raw_expansion(A, Ap, 1);
  ModelParams p = ModelParams::zeros(1, 1, 1e-8);
  p.theta[0](0) = 1.0;
  const ModelGradient g = nll_gradient(ex, p);
  CHECK_THAT(g.theta[0](0), Catch::Matchers::WithinAbs(0.0, 1e-14));
}

TEST_CASE("analytic gradient matches finite differences") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.uniform_index(10));
    const Eigen::Index J = 1 + static_cast<Eigen::Index>(rng.uniform_index(3));
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.uniform_index(5));
    auto [ex, p] = random_instance(rng, n, J, d);
    const Eigen::VectorXd analytic = nll_gradient(ex, p).flatten();
    const Eigen::VectorXd fd = fd_gradient(ex, p).flatten();
    for (Eigen::Index c = 0; c < analytic.size(); ++c) {
      const double scale = std::max(1e-3, std::abs(fd(c)));
      CHECK(std::abs(analytic(c) - fd(c)) / scale < 1e-5);
    }
  }
}

TEST_CASE("gradient is linear in the weights") {
  Rng rng(24);
  auto [ex, p] = random_instance(rng, 8, 2, 3);
  Eigen::VectorXd w = Eigen::VectorXd::Constant(8, 1e-12);
  w(5) = 2.5;
  const Eigen::VectorXd g_all = nll_gradient(ex, p, w).flatten();
  const Eigen::VectorXd g_single = nll_gradient(ex.subset({5}), p).flatten();
  CHECK((g_all - 2.5 * g_single).norm() < 1e-9 * std::max(1.0, g_single.norm()));
}

TEST_CASE("clamped cells contribute zero log gradient") {
  Eigen::MatrixXd A(1, 2), Ap(1, 2);
  A << 0.3, 0.7;
  Ap << -1.0, -1.0;  // always below the floor
  const BasisExpansion ex = raw_expansion(A, Ap, 1);
  ModelParams p = ModelParams::zeros(1, 2, 0.5);
  p.theta[0] << 0.2, 0.1;
  const ModelGradient g = nll_gradient(ex, p);
  // Only the squared part remains: z * a.
  const double z = 0.3 * 0.2 + 0.7 * 0.1;
  CHECK_THAT(g.theta[0](0), Catch::Matchers::WithinAbs(z * 0.3, 1e-14));
  CHECK_THAT(g.theta[0](1), Catch::Matchers::WithinAbs(z * 0.7, 1e-14));
}

TEST_CASE("shift_into_domain solves the smallest sufficient shift") {
  Eigen::MatrixXd A(1, 2), Ap(1, 2);
  A << 0.5, 0.5;
  Ap << -0.5, 0.5;
  const BasisExpansion ex = raw_expansion(A, Ap, 1);
  ModelParams p = ModelParams::zeros(1, 2, 0.1);

  const ModelParams shifted = shift_into_domain(p, ex, 0.1);
  const double arg = ex.deriv_row(0, 0).dot(shifted.theta[0]);
  CHECK_THAT(arg, Catch::Matchers::WithinAbs(0.1, 1e-12));
  // Exact 1-D solve: ramp direction (0,1), effect 0.5 per unit, c = 0.2.
  CHECK_THAT(shifted.theta[0](1), Catch::Matchers::WithinAbs(0.2, 1e-12));

  // Already inside: unchanged.
  ModelParams inside = shifted;
  inside.theta[0](1) += 1.0;
  const ModelParams same = shift_into_domain(inside, ex, 0.1);
  CHECK(same.theta[0] == inside.theta[0]);

  // eta = 0 with positive arguments: unchanged.
  const ModelParams same0 = shift_into_domain(inside, ex, 0.0);
  CHECK(same0.theta[0] == inside.theta[0]);
}

TEST_CASE("normalization shift changes no gradient component") {
  Rng rng(25);
  auto [ex, p] = random_instance(rng, 10, 2, 4);
  const Eigen::VectorXd g = nll_gradient(ex, p).flatten();
  // The reporting shift nJ(ln c + 1) is parameter-free; the gradient of
  // total + shift is the same object.
  const double shift = static_cast<double>(ex.n() * ex.dims());
  const double shifted_total = nll(ex, p).total + shift;
  (void)shifted_total;
  const Eigen::VectorXd g_again = nll_gradient(ex, p).flatten();
  CHECK(g == g_again);
}

TEST_CASE("params JSON round trip") {
  Rng rng(26);
  auto [ex, p] = random_instance(rng, 4, 3, 4);
  BasisConfig config;
  config.degree = 3;
  config.bounds = {{-1.0, 2.0}, {0.0, 1.0}, {-5.0, 5.0}};
  const nlohmann::json j = params_to_json(p, config);
  CHECK(j.contains("degree"));
  CHECK(j.contains("bounds"));
  CHECK(j.contains("theta"));
  CHECK(j.contains("lambda"));
  CHECK(j.contains("eta"));

  const auto [p2, config2] = params_from_json(j);
  CHECK(p2.lambda_strict == p.lambda_strict);
  CHECK(p2.eta == p.eta);
  CHECK(config2.degree == config.degree);
  for (std::size_t jdim = 0; jdim < p.theta.size(); ++jdim)
    CHECK(p2.theta[jdim] == p.theta[jdim]);
}

TEST_CASE("lambda matrix is unit lower triangular") {
  ModelParams p = ModelParams::zeros(3, 2);
  p.lambda_strict << 0.5, -1.0, 2.0;
  const Eigen::MatrixXd L = p.lambda_matrix();
  CHECK(L(0, 0) == 1.0);
  CHECK(L(1, 1) == 1.0);
  CHECK(L(2, 2) == 1.0);
  CHECK(L(1, 0) == 0.5);
  CHECK(L(2, 0) == -1.0);
  CHECK(L(2, 1) == 2.0);
  CHECK(L(0, 1) == 0.0);
  CHECK(L(0, 2) == 0.0);
  CHECK(L(1, 2) == 0.0);
}
