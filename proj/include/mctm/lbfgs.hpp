#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <deque>
#include <functional>
#include <stdexcept>

namespace mctm {

struct LbfgsOptions {
  int max_iters = 500;
  double grad_tol = 1e-6;  // on ||g||_2 / max(1, |f|)
  int memory = 10;
  double armijo_c1 = 1e-4;
  int max_halvings = 60;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double fx = 0.0;
  int iterations = 0;
  bool converged = false;
  bool stalled = false;  // line search failed; best iterate returned
};

// Thrown when the objective is non-finite at the current iterate and no
// recovery is possible; carries the last finite iterate.
struct DivergedError : std::runtime_error {
  Eigen::VectorXd last_finite;
  explicit DivergedError(Eigen::VectorXd x)
      : std::runtime_error("optimizer diverged: non-finite loss"),
        last_finite(std::move(x)) {}
};

// Limited-memory BFGS with Armijo backtracking (halving). The objective
// callback fills the gradient and returns the loss.
inline LbfgsResult lbfgs_minimize(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& objective,
    Eigen::VectorXd x0, const LbfgsOptions& opts = {}) {
  const Eigen::Index dim = x0.size();
  Eigen::VectorXd x = std::move(x0);
  Eigen::VectorXd grad(dim);
  double fx = objective(x, grad);
  if (!std::isfinite(fx) || !grad.allFinite()) throw DivergedError(x);

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;

  LbfgsResult result;
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    result.iterations = iter;
    if (grad.norm() <= opts.grad_tol * std::max(1.0, std::abs(fx))) {
      result.converged = true;
      break;
    }

    // Two-loop recursion.
    Eigen::VectorXd q = grad;
    const std::size_t m = s_hist.size();
    std::vector<double> alpha(m);
    for (std::size_t h = m; h-- > 0;) {
      alpha[h] = rho_hist[h] * s_hist[h].dot(q);
      q -= alpha[h] * y_hist[h];
    }
    if (m > 0) {
      const double gamma =
          s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      q *= gamma;
    }
    for (std::size_t h = 0; h < m; ++h) {
      const double beta = rho_hist[h] * y_hist[h].dot(q);
      q += (alpha[h] - beta) * s_hist[h];
    }
    Eigen::VectorXd direction = -q;
    double directional = grad.dot(direction);
    if (!(directional < 0.0)) {
      direction = -grad;
      directional = -grad.squaredNorm();
    }

    // Backtracking with Armijo condition.
    double step = 1.0;
    Eigen::VectorXd x_new(dim), grad_new(dim);
    double fx_new = 0.0;
    bool accepted = false;
    for (int halving = 0; halving <= opts.max_halvings; ++halving) {
      x_new = x + step * direction;
      fx_new = objective(x_new, grad_new);
      if (std::isfinite(fx_new) && grad_new.allFinite() &&
          fx_new <= fx + opts.armijo_c1 * step * directional) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      result.stalled = true;
      break;
    }

    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd y = grad_new - grad;
    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opts.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x = std::move(x_new);
    grad = grad_new;
    fx = fx_new;
  }

  result.x = std::move(x);
  result.fx = fx;
  return result;
}

}  // namespace mctm
