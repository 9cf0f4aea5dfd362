#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mctm/dataset.hpp"

namespace mctm {

enum class BoundPolicy { kFromDataMinMax, kUserSupplied };

// Configuration of the Bernstein basis expansion: polynomial degree M
// (basis dimension d = M + 1) and per-dimension affine bounds mapping raw
// values into [0, 1].
struct BasisConfig {
  int degree = 6;
  std::vector<std::pair<double, double>> bounds;  // (lo_j, hi_j)
  BoundPolicy bound_policy = BoundPolicy::kFromDataMinMax;
  double margin = 0.01;  // fraction of the observed range added on each side

  int basis_dim() const { return degree + 1; }

  void validate() const {
    if (degree < 1) throw std::invalid_argument("BasisConfig: degree must be >= 1");
    for (std::size_t j = 0; j < bounds.size(); ++j) {
      if (!(bounds[j].second > bounds[j].first))
        throw std::invalid_argument("BasisConfig: hi <= lo for dimension " +
                                    std::to_string(j));
    }
  }
};

// Evaluates the d = M+1 Bernstein basis values B_{k,M}(t) at t. Uses the
// de Casteljau-style recurrence, which is stable for large M.
inline void bernstein_values(int degree, double t, double* out) {
  out[0] = 1.0;
  const double s = 1.0 - t;
  for (int m = 1; m <= degree; ++m) {
    double saved = 0.0;
    for (int k = 0; k < m; ++k) {
      const double tmp = out[k];
      out[k] = saved + s * tmp;
      saved = t * tmp;
    }
    out[m] = saved;
  }
}

// Derivatives with respect to t: B'_{k,M}(t) = M (B_{k-1,M-1} - B_{k,M-1}).
inline void bernstein_derivatives(int degree, double t, double* out) {
  std::vector<double> lower(static_cast<std::size_t>(degree));
  bernstein_values(degree - 1, t, lower.data());
  for (int k = 0; k <= degree; ++k) {
    double v = 0.0;
    if (k > 0) v += lower[static_cast<std::size_t>(k - 1)];
    if (k < degree) v -= lower[static_cast<std::size_t>(k)];
    out[k] = degree * v;
  }
}

// Per-observation, per-dimension basis rows a_ij in R^d and derivative rows
// a'_ij in R^d (derivative taken with respect to the raw value, chain factor
// 1/(hi_j - lo_j) included). Stored as n x (J*d) matrices; block j occupies
// columns [j*d, (j+1)*d).
struct BasisExpansion {
  Eigen::MatrixXd A;       // n x (J*d)
  Eigen::MatrixXd Aprime;  // n x (J*d)
  BasisConfig config;
  std::size_t clip_count = 0;  // values clipped to [0,1] after scaling

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index dims() const {
    return A.cols() / config.basis_dim();
  }
  int basis_dim() const { return config.basis_dim(); }

  Eigen::VectorXd row(Eigen::Index i, Eigen::Index j) const {
    const int d = basis_dim();
    return A.row(i).segment(j * d, d).transpose();
  }
  Eigen::VectorXd deriv_row(Eigen::Index i, Eigen::Index j) const {
    const int d = basis_dim();
    return Aprime.row(i).segment(j * d, d).transpose();
  }

  // Restriction to a subset of observations (same config and bounds).
  BasisExpansion subset(const std::vector<Eigen::Index>& indices) const {
    BasisExpansion out;
    out.config = config;
    out.A.resize(static_cast<Eigen::Index>(indices.size()), A.cols());
    out.Aprime.resize(static_cast<Eigen::Index>(indices.size()), A.cols());
    for (std::size_t r = 0; r < indices.size(); ++r) {
      out.A.row(static_cast<Eigen::Index>(r)) = A.row(indices[r]);
      out.Aprime.row(static_cast<Eigen::Index>(r)) = Aprime.row(indices[r]);
    }
    return out;
  }
};

// Determines per-dimension bounds from the data (min/max widened by the
// margin fraction of the range on each side).
inline BasisConfig fit_bounds(const Dataset& data, int degree = 6,
                              double margin = 0.01) {
  if (data.n() < 2) throw std::invalid_argument("fit_bounds: need n >= 2");
  BasisConfig config;
  config.degree = degree;
  config.margin = margin;
  config.bound_policy = BoundPolicy::kFromDataMinMax;
  for (Eigen::Index j = 0; j < data.dims(); ++j) {
    const double lo = data.values.col(j).minCoeff();
    const double hi = data.values.col(j).maxCoeff();
    if (!(hi > lo)) {
      const std::string name = static_cast<std::size_t>(j) < data.names.size()
                                   ? data.names[static_cast<std::size_t>(j)]
                                   : std::to_string(j);
      throw std::invalid_argument("fit_bounds: degenerate column '" + name +
                                  "' (constant values)");
    }
    const double pad = margin * (hi - lo);
    config.bounds.emplace_back(lo - pad, hi + pad);
  }
  config.validate();
  return config;
}

// Bernstein expansion of the data under the given config. Values falling
// outside the bounds are clipped to [0, 1] after scaling and counted.
inline BasisExpansion expand(const Dataset& data, const BasisConfig& config) {
  config.validate();
  if (static_cast<Eigen::Index>(config.bounds.size()) != data.dims())
    throw std::invalid_argument("expand: bounds/dimension mismatch");
  const int d = config.basis_dim();
  const Eigen::Index n = data.n();
  const Eigen::Index J = data.dims();

  BasisExpansion out;
  out.config = config;
  out.A.resize(n, J * d);
  out.Aprime.resize(n, J * d);

  std::vector<double> vals(static_cast<std::size_t>(d));
  std::vector<double> ders(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < J; ++j) {
      const auto [lo, hi] = config.bounds[static_cast<std::size_t>(j)];
      const double range = hi - lo;
      double t = (data.values(i, j) - lo) / range;
      if (t < 0.0 || t > 1.0) {
        t = std::clamp(t, 0.0, 1.0);
        ++out.clip_count;
      }
      bernstein_values(config.degree, t, vals.data());
      bernstein_derivatives(config.degree, t, ders.data());
      for (int k = 0; k < d; ++k) {
        out.A(i, j * d + k) = vals[static_cast<std::size_t>(k)];
        out.Aprime(i, j * d + k) = ders[static_cast<std::size_t>(k)] / range;
      }
    }
  }
  return out;
}

}  // namespace mctm
