#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mctm/basis.hpp"
#include "mctm/util.hpp"

namespace mctm {

// Index of the strictly-lower-triangular entry (j, k), k < j, in row-major
// packing: (1,0), (2,0), (2,1), (3,0), ...
inline Eigen::Index lambda_index(Eigen::Index j, Eigen::Index k) {
  return j * (j - 1) / 2 + k;
}

inline Eigen::Index lambda_count(Eigen::Index J) { return J * (J - 1) / 2; }

// Marginal coefficient vectors and the unit lower-triangular dependence
// matrix Lambda (diagonal fixed to 1, strictly-lower entries free).
struct ModelParams {
  std::vector<Eigen::VectorXd> theta;  // J vectors of length d
  Eigen::VectorXd lambda_strict;       // J(J-1)/2 entries
  double eta = 1e-6;                   // floor for the log argument

  Eigen::Index dims() const { return static_cast<Eigen::Index>(theta.size()); }
  Eigen::Index basis_dim() const { return theta.empty() ? 0 : theta[0].size(); }

  Eigen::MatrixXd lambda_matrix() const {
    const Eigen::Index J = dims();
    Eigen::MatrixXd L = Eigen::MatrixXd::Identity(J, J);
    for (Eigen::Index j = 1; j < J; ++j)
      for (Eigen::Index k = 0; k < j; ++k)
        L(j, k) = lambda_strict(lambda_index(j, k));
    return L;
  }

  // Concatenation of all theta blocks (used for parameter distances).
  Eigen::VectorXd theta_concat() const {
    const Eigen::Index d = basis_dim();
    Eigen::VectorXd out(dims() * d);
    for (Eigen::Index j = 0; j < dims(); ++j) out.segment(j * d, d) = theta[j];
    return out;
  }

  static ModelParams zeros(Eigen::Index J, Eigen::Index d, double eta = 1e-6) {
    ModelParams p;
    p.theta.assign(static_cast<std::size_t>(J), Eigen::VectorXd::Zero(d));
    p.lambda_strict = Eigen::VectorXd::Zero(lambda_count(J));
    p.eta = eta;
    return p;
  }
};

// Negative log-likelihood split into the squared part f1, the positive log
// part f2 and the negative log part f3; total = f1 - f2 + f3.
struct LossBreakdown {
  double f1 = 0.0;
  double f2 = 0.0;
  double f3 = 0.0;
  double total = 0.0;
  std::size_t clamp_count = 0;  // cells where the log argument hit the floor
};

// Gradient over (theta, lambda_strict), matching the ModelParams layout.
struct ModelGradient {
  std::vector<Eigen::VectorXd> theta;
  Eigen::VectorXd lambda_strict;

  Eigen::VectorXd flatten() const {
    Eigen::Index total = lambda_strict.size();
    for (const auto& t : theta) total += t.size();
    Eigen::VectorXd out(total);
    Eigen::Index pos = 0;
    for (const auto& t : theta) {
      out.segment(pos, t.size()) = t;
      pos += t.size();
    }
    out.segment(pos, lambda_strict.size()) = lambda_strict;
    return out;
  }

  double squared_norm() const { return flatten().squaredNorm(); }
};

namespace detail {

inline void check_weights(const Eigen::VectorXd& weights, Eigen::Index n) {
  if (weights.size() == 0) return;
  if (weights.size() != n)
    throw std::invalid_argument("weights length must equal n");
  if ((weights.array() <= 0.0).any())
    throw std::invalid_argument("weights must all be positive");
}

// z_ij = sum_{k<j} lambda_jk <theta_k, a_ik> + <theta_j, a_ij>
// Fills per-observation marginal values m (n x J) and composites z (n x J).
inline void marginal_and_composite(const BasisExpansion& expansion,
                                   const ModelParams& params,
                                   Eigen::MatrixXd& m, Eigen::MatrixXd& z,
                                   Eigen::MatrixXd& dp) {
  const Eigen::Index n = expansion.n();
  const Eigen::Index J = expansion.dims();
  const int d = expansion.basis_dim();
  m.resize(n, J);
  dp.resize(n, J);
  for (Eigen::Index j = 0; j < J; ++j) {
    m.col(j) = expansion.A.middleCols(j * d, d) * params.theta[static_cast<std::size_t>(j)];
    dp.col(j) =
        expansion.Aprime.middleCols(j * d, d) * params.theta[static_cast<std::size_t>(j)];
  }
  z = m;
  for (Eigen::Index j = 1; j < J; ++j)
    for (Eigen::Index k = 0; k < j; ++k)
      z.col(j) += params.lambda_strict(lambda_index(j, k)) * m.col(k);
}

}  // namespace detail

// Weighted negative log-likelihood. Pass an empty weights vector for unit
// weights. Accumulation is pairwise-summed over observations so that results
// are reproducible.
inline LossBreakdown nll(const BasisExpansion& expansion,
                         const ModelParams& params,
                         const Eigen::VectorXd& weights = Eigen::VectorXd()) {
  const Eigen::Index n = expansion.n();
  const Eigen::Index J = expansion.dims();
  detail::check_weights(weights, n);

  Eigen::MatrixXd m, z, dp;
  detail::marginal_and_composite(expansion, params, m, z, dp);

  std::vector<double> c1(static_cast<std::size_t>(n));
  std::vector<double> c2(static_cast<std::size_t>(n));
  std::vector<double> c3(static_cast<std::size_t>(n));
  LossBreakdown out;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = weights.size() ? weights(i) : 1.0;
    double s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (Eigen::Index j = 0; j < J; ++j) {
      s1 += 0.5 * z(i, j) * z(i, j);
      double arg = dp(i, j);
      if (arg < params.eta) {
        if (params.eta <= 0.0 && arg <= 0.0)
          throw std::domain_error("nll: nonpositive log argument at (i=" +
                                  std::to_string(i) + ", j=" + std::to_string(j) +
                                  ") with eta = 0");
        arg = params.eta;
        ++out.clamp_count;
      }
      const double lg = std::log(arg);
      s2 += std::max(lg, 0.0);
      s3 += std::max(-lg, 0.0);
    }
    c1[static_cast<std::size_t>(i)] = w * s1;
    c2[static_cast<std::size_t>(i)] = w * s2;
    c3[static_cast<std::size_t>(i)] = w * s3;
  }
  out.f1 = pairwise_sum(c1);
  out.f2 = pairwise_sum(c2);
  out.f3 = pairwise_sum(c3);
  out.total = out.f1 - out.f2 + out.f3;
  return out;
}

// Analytic gradient of nll(...).total with respect to all free parameters.
// Cells clamped at the eta floor contribute zero gradient from the log term.
inline ModelGradient nll_gradient(
    const BasisExpansion& expansion, const ModelParams& params,
    const Eigen::VectorXd& weights = Eigen::VectorXd()) {
  const Eigen::Index n = expansion.n();
  const Eigen::Index J = expansion.dims();
  const int d = expansion.basis_dim();
  detail::check_weights(weights, n);

  Eigen::MatrixXd m, z, dp;
  detail::marginal_and_composite(expansion, params, m, z, dp);

  // r_ik = dL_i/dm_ik = z_ik + sum_{j>k} lambda_jk z_ij
  Eigen::MatrixXd r = z;
  for (Eigen::Index k = 0; k < J; ++k)
    for (Eigen::Index j = k + 1; j < J; ++j)
      r.col(k) += params.lambda_strict(lambda_index(j, k)) * z.col(j);

  Eigen::VectorXd w = weights.size()
                          ? weights
                          : Eigen::VectorXd::Ones(n);

  ModelGradient grad;
  grad.theta.assign(static_cast<std::size_t>(J), Eigen::VectorXd::Zero(d));
  for (Eigen::Index j = 0; j < J; ++j) {
    // Squared-part contribution through m, plus log-term through dp.
    Eigen::VectorXd coef_a = w.array() * r.col(j).array();
    Eigen::VectorXd coef_ap(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double arg = dp(i, j);
      if (arg < params.eta) {
        if (params.eta <= 0.0 && arg <= 0.0)
          throw std::domain_error("nll_gradient: nonpositive log argument at (i=" +
                                  std::to_string(i) + ", j=" + std::to_string(j) +
                                  ") with eta = 0");
        coef_ap(i) = 0.0;  // flat floor
      } else {
        coef_ap(i) = -w(i) / arg;
      }
    }
    grad.theta[static_cast<std::size_t>(j)] =
        expansion.A.middleCols(j * d, d).transpose() * coef_a +
        expansion.Aprime.middleCols(j * d, d).transpose() * coef_ap;
  }

  grad.lambda_strict = Eigen::VectorXd::Zero(lambda_count(J));
  for (Eigen::Index j = 1; j < J; ++j)
    for (Eigen::Index k = 0; k < j; ++k)
      grad.lambda_strict(lambda_index(j, k)) =
          (w.array() * z.col(j).array() * m.col(k).array()).sum();
  return grad;
}

// Shifts each theta_j along the nondecreasing ramp direction until every
// log argument <theta_j, a'_ij> exceeds eta. The ramp direction adds a
// constant positive slope, so the smallest sufficient shift solves a 1-D
// linear equation per dimension. Returns the input unchanged if already
// inside D(eta).
inline ModelParams shift_into_domain(const ModelParams& params,
                                     const BasisExpansion& expansion,
                                     double eta) {
  const Eigen::Index J = expansion.dims();
  const int d = expansion.basis_dim();
  ModelParams out = params;
  Eigen::VectorXd ramp(d);
  for (int k = 0; k < d; ++k) ramp(k) = static_cast<double>(k) / (d - 1);
  for (Eigen::Index j = 0; j < J; ++j) {
    const auto block = expansion.Aprime.middleCols(j * d, d);
    const double current_min =
        (block * params.theta[static_cast<std::size_t>(j)]).minCoeff();
    if (current_min > eta) continue;
    // Per-unit effect of the ramp on each cell; constant across i for a
    // partition-of-unity basis but we take the worst case anyway.
    const double effect = (block * ramp).minCoeff();
    if (effect <= 0.0)
      throw std::runtime_error(
          "shift_into_domain: infeasible shift for dimension " +
          std::to_string(j));
    const double c = (eta - current_min) / effect;
    out.theta[static_cast<std::size_t>(j)] += c * ramp;
  }
  return out;
}

// --- serialization -------------------------------------------------------

inline nlohmann::json params_to_json(const ModelParams& params,
                                     const BasisConfig& config) {
  nlohmann::json j;
  j["degree"] = config.degree;
  auto& bounds = j["bounds"] = nlohmann::json::array();
  for (const auto& [lo, hi] : config.bounds) bounds.push_back({lo, hi});
  auto& theta = j["theta"] = nlohmann::json::array();
  for (const auto& t : params.theta) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < t.size(); ++k) row.push_back(t(k));
    theta.push_back(std::move(row));
  }
  auto& lambda = j["lambda"] = nlohmann::json::array();
  for (Eigen::Index k = 0; k < params.lambda_strict.size(); ++k)
    lambda.push_back(params.lambda_strict(k));
  j["eta"] = params.eta;
  return j;
}

inline std::pair<ModelParams, BasisConfig> params_from_json(
    const nlohmann::json& j) {
  BasisConfig config;
  config.degree = j.at("degree").get<int>();
  for (const auto& b : j.at("bounds"))
    config.bounds.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
  ModelParams params;
  for (const auto& row : j.at("theta")) {
    Eigen::VectorXd t(row.size());
    for (std::size_t k = 0; k < row.size(); ++k) t(static_cast<Eigen::Index>(k)) = row[k].get<double>();
    params.theta.push_back(std::move(t));
  }
  const auto& lambda = j.at("lambda");
  params.lambda_strict.resize(static_cast<Eigen::Index>(lambda.size()));
  for (std::size_t k = 0; k < lambda.size(); ++k)
    params.lambda_strict(static_cast<Eigen::Index>(k)) = lambda[k].get<double>();
  params.eta = j.at("eta").get<double>();
  return {std::move(params), std::move(config)};
}

}  // namespace mctm
