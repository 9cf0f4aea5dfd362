#include <catch2/catch_amalgamated.hpp>

#include "mctm/dgp.hpp"
#include "mctm/fit.hpp"
#include "mctm/lbfgs.hpp"
#include "test_helpers.hpp"

using namespace mctm;

TEST_CASE("lbfgs minimizes a shifted quadratic") {
  const Eigen::Index dim = 5;
  Eigen::VectorXd center(dim);
  center << 1.0, -2.0, 0.5, 3.0, -1.5;
  auto objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = 2.0 * (x - center);
    return (x - center).squaredNorm();
  };
  const LbfgsResult res = lbfgs_minimize(objective, Eigen::VectorXd::Zero(dim));
  CHECK(res.converged);
  CHECK((res.x - center).norm() < 1e-6);
}

TEST_CASE("lbfgs handles the Rosenbrock valley") {
  auto objective = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const double a = 1.0 - x(0);
    const double b = x(1) - x(0) * x(0);
    g.resize(2);
    g(0) = -2.0 * a - 400.0 * x(0) * b;
    g(1) = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  LbfgsOptions opts;
  opts.max_iters = 2000;
  Eigen::VectorXd x0(2);
  x0 << -1.2, 1.0;
  const LbfgsResult res = lbfgs_minimize(objective, x0, opts);
  CHECK(res.converged);
  CHECK((res.x - Eigen::Vector2d(1.0, 1.0)).norm() < 1e-5);
}

TEST_CASE("lbfgs reports divergence with the last finite iterate") {
  auto objective = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g.resize(1);
    g(0) = 1.0;
    return std::numeric_limits<double>::quiet_NaN() * x(0);
  };
  Eigen::VectorXd x0(1);
  x0 << 2.0;
  CHECK_THROWS_AS(lbfgs_minimize(objective, x0), DivergedError);
}

TEST_CASE("monotone map round trips and preserves monotonicity") {
  detail::MonotoneMap map{2, 4};
  Rng rng(31);
  Eigen::VectorXd x(map.free_dim());
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
  const ModelParams p = map.to_params(x, 1e-6);
  for (const auto& t : p.theta)
    for (Eigen::Index k = 1; k < t.size(); ++k) CHECK(t(k) > t(k - 1));
  const Eigen::VectorXd x2 = map.from_params(p);
  CHECK((x - x2).norm() < 1e-9);
}

TEST_CASE("monotone pull-back matches finite differences") {
  Rng rng(32);
  const Eigen::Index J = 2;
  const int d = 4;
  auto [ex, ignored] = mctm::testing::random_instance(rng, 8, J, d);
  detail::MonotoneMap map{J, d};
  Eigen::VectorXd x(map.free_dim());
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal(0.0, 0.5);

  auto value = [&](const Eigen::VectorXd& v) {
    return nll(ex, map.to_params(v, 1e-8)).total;
  };
  const ModelParams p = map.to_params(x, 1e-8);
  const Eigen::VectorXd pulled = map.pull_back(x, nll_gradient(ex, p));
  const double h = 1e-6;
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    Eigen::VectorXd up = x, down = x;
    up(c) += h;
    down(c) -= h;
    const double fd = (value(up) - value(down)) / (2.0 * h);
    const double scale = std::max(1e-3, std::abs(fd));
    CHECK(std::abs(pulled(c) - fd) / scale < 1e-5);
  }
}

TEST_CASE("fitted marginals are increasing everywhere") {
  const Dataset data = generate({DgpId::kBivariateNormal, 500, 11});
  const BasisConfig config = fit_bounds(data, 6);
  const BasisExpansion ex = expand(data, config);
  const FitResult res = fit(ex);
  CHECK(res.converged);

  // Dense grid over [0, 1] per dimension: the derivative of the fitted
  // transformation must stay strictly positive.
  const int d = config.basis_dim();
  std::vector<double> ders(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < 2; ++j) {
    for (int g = 0; g <= 10000; ++g) {
      bernstein_derivatives(config.degree, g / 10000.0, ders.data());
      double slope = 0.0;
      for (int k = 0; k < d; ++k)
        slope += ders[static_cast<std::size_t>(k)] *
                 res.params.theta[static_cast<std::size_t>(j)](k);
      CHECK(slope > 0.0);
    }
  }
}

TEST_CASE("fitted density integrates to one") {
  const Dataset data = generate({DgpId::kBivariateNormal, 2000, 12});
  const BasisConfig config = fit_bounds(data, 6, 0.15);
  const BasisExpansion ex = expand(data, config);
  const FitResult res = fit(ex);
  REQUIRE(res.converged);

  // Trapezoid quadrature of the model density over the basis rectangle:
  // p(y) = phi(z_1) phi(z_2) h_1'(y_1) h_2'(y_2) with z = Lambda h(y).
  const int grid = 220;
  const auto [lo1, hi1] = config.bounds[0];
  const auto [lo2, hi2] = config.bounds[1];
  const double dy1 = (hi1 - lo1) / grid;
  const double dy2 = (hi2 - lo2) / grid;
  const double lambda = res.params.lambda_strict(0);
  const int d = config.basis_dim();
  std::vector<double> vals(static_cast<std::size_t>(d)),
      ders(static_cast<std::size_t>(d));

  auto marginal = [&](int j, double y, double& h, double& hp) {
    const auto [lo, hi] = config.bounds[static_cast<std::size_t>(j)];
    const double t = (y - lo) / (hi - lo);
    bernstein_values(config.degree, t, vals.data());
    bernstein_derivatives(config.degree, t, ders.data());
    h = 0.0;
    hp = 0.0;
    for (int k = 0; k < d; ++k) {
      h += vals[static_cast<std::size_t>(k)] *
           res.params.theta[static_cast<std::size_t>(j)](k);
      hp += ders[static_cast<std::size_t>(k)] *
            res.params.theta[static_cast<std::size_t>(j)](k) / (hi - lo);
    }
  };

  const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  double mass = 0.0;
  for (int g1 = 0; g1 <= grid; ++g1) {
    const double w1 = (g1 == 0 || g1 == grid) ? 0.5 : 1.0;
    double h1, hp1;
    marginal(0, lo1 + g1 * dy1, h1, hp1);
    for (int g2 = 0; g2 <= grid; ++g2) {
      const double w2 = (g2 == 0 || g2 == grid) ? 0.5 : 1.0;
      double h2, hp2;
      marginal(1, lo2 + g2 * dy2, h2, hp2);
      const double z1 = h1;
      const double z2 = lambda * h1 + h2;
      const double density = inv_sqrt2pi * std::exp(-0.5 * z1 * z1) *
                             inv_sqrt2pi * std::exp(-0.5 * z2 * z2) * hp1 * hp2;
      mass += w1 * w2 * density * dy1 * dy2;
    }
  }
  CHECK_THAT(mass, Catch::Matchers::WithinAbs(1.0, 0.02));
}

TEST_CASE("dependence parameter recovers the simulated correlation") {
  const Dataset data = generate({DgpId::kBivariateNormal, 5000, 13});
  const BasisConfig config = fit_bounds(data, 6);
  const BasisExpansion ex = expand(data, config);
  const FitResult res = fit(ex);
  REQUIRE(res.converged);
  // For a Gaussian pair the implied correlation is -lambda / sqrt(1+lambda^2).
  const double lambda = res.params.lambda_strict(0);
  const double rho = -lambda / std::sqrt(1.0 + lambda * lambda);
  CHECK_THAT(rho, Catch::Matchers::WithinAbs(0.7, 0.05));
}

TEST_CASE("same configuration twice gives identical parameters") {
  const Dataset data = generate({DgpId::kHourglass, 800, 14});
  const BasisConfig config = fit_bounds(data, 6);
  const BasisExpansion ex = expand(data, config);
  FitConfig fc;
  fc.seed = 99;
  const FitResult a = fit(ex, Eigen::VectorXd(), fc);
  const FitResult b = fit(ex, Eigen::VectorXd(), fc);
  CHECK(a.loss.total == b.loss.total);
  CHECK(a.params.lambda_strict == b.params.lambda_strict);
  for (std::size_t j = 0; j < a.params.theta.size(); ++j)
    CHECK(a.params.theta[j] == b.params.theta[j]);
}

TEST_CASE("both initializers reach the same optimum") {
  const Dataset data = generate({DgpId::kBivariateNormal, 1000, 15});
  const BasisConfig config = fit_bounds(data, 6);
  const BasisExpansion ex = expand(data, config);
  FitConfig identity_cfg;
  identity_cfg.initializer = Initializer::kIdentityMarginals;
  FitConfig random_cfg;
  random_cfg.initializer = Initializer::kRandomSeeded;
  random_cfg.seed = 4;
  const FitResult a = fit(ex, Eigen::VectorXd(), identity_cfg);
  const FitResult b = fit(ex, Eigen::VectorXd(), random_cfg);
  CHECK(std::abs(a.loss.total - b.loss.total) <
        1e-4 * std::max(1.0, std::abs(a.loss.total)));
  CHECK(std::abs(a.params.lambda_strict(0) - b.params.lambda_strict(0)) < 1e-2);
}

TEST_CASE("weighted fit matches fitting replicated observations") {
  const Dataset data = generate({DgpId::kBivariateNormal, 120, 16});
  const BasisConfig config = fit_bounds(data, 4);
  const BasisExpansion ex = expand(data, config);

  Eigen::VectorXd w = Eigen::VectorXd::Ones(120);
  w.head(40).setConstant(3.0);

  std::vector<Eigen::Index> replicated;
  for (Eigen::Index i = 0; i < 120; ++i) {
    replicated.push_back(i);
    if (i < 40) {
      replicated.push_back(i);
      replicated.push_back(i);
    }
  }
  const BasisExpansion ex_rep = ex.subset(replicated);

  const FitResult a = fit(ex, w);
  const FitResult b = fit(ex_rep);
  CHECK(std::abs(a.loss.total - b.loss.total) <
        1e-5 * std::max(1.0, std::abs(a.loss.total)));
  CHECK((a.params.theta_concat() - b.params.theta_concat()).norm() < 1e-2);
}

TEST_CASE("fit rejects bad configuration") {
  const Dataset data = generate({DgpId::kBivariateNormal, 50, 17});
  const BasisExpansion ex = expand(data, fit_bounds(data, 3));
  FitConfig bad;
  bad.max_iters = 0;
  CHECK_THROWS_AS(fit(ex, Eigen::VectorXd(), bad), std::invalid_argument);
}
