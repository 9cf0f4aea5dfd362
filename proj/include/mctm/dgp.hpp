#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>

#include "mctm/dataset.hpp"
#include "mctm/rng.hpp"

namespace mctm {

// The 14 bivariate simulation processes.
enum class DgpId : int {
  kBivariateNormal = 1,
  kNonlinearCorrelation = 2,
  kNormalMixture = 3,
  kGeometricMixed = 4,
  kSkewT = 5,
  kHeteroscedastic = 6,
  kClaytonCopula = 7,
  kSpiral = 8,
  kCircular = 9,
  kTCopula = 10,
  kPiecewise = 11,
  kHourglass = 12,
  kBimodalClusters = 13,
  kSinusoidal = 14,
};

inline std::string to_string(DgpId id) {
  switch (id) {
    case DgpId::kBivariateNormal: return "bivariate-normal";
    case DgpId::kNonlinearCorrelation: return "nonlinear-correlation";
    case DgpId::kNormalMixture: return "normal-mixture";
    case DgpId::kGeometricMixed: return "geometric-mixed";
    case DgpId::kSkewT: return "skew-t";
    case DgpId::kHeteroscedastic: return "heteroscedastic";
    case DgpId::kClaytonCopula: return "clayton-copula";
    case DgpId::kSpiral: return "spiral";
    case DgpId::kCircular: return "circular";
    case DgpId::kTCopula: return "t-copula";
    case DgpId::kPiecewise: return "piecewise";
    case DgpId::kHourglass: return "hourglass";
    case DgpId::kBimodalClusters: return "bimodal-clusters";
    case DgpId::kSinusoidal: return "sinusoidal";
  }
  return "?";
}

inline DgpId dgp_from_int(int v) {
  if (v < 1 || v > 14)
    throw std::invalid_argument("unknown DGP id: " + std::to_string(v));
  return static_cast<DgpId>(v);
}

struct DgpSpec {
  DgpId id = DgpId::kBivariateNormal;
  Eigen::Index n = 10000;
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 1) throw std::invalid_argument("DgpSpec: n >= 1");
  }
};

namespace detail {

// Bivariate normal draw with given means, sds and correlation.
inline void bvn(Rng& rng, double m1, double m2, double s1, double s2,
                double rho, double& y1, double& y2) {
  const double z1 = rng.normal();
  const double z2 = rng.normal();
  y1 = m1 + s1 * z1;
  y2 = m2 + s2 * (rho * z1 + std::sqrt(1.0 - rho * rho) * z2);
}

}  // namespace detail

inline Dataset generate(const DgpSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "dgp", static_cast<std::uint64_t>(spec.id)));
  Dataset data;
  data.names = {"y1", "y2"};
  data.values.resize(spec.n, 2);
  constexpr double kPi = std::numbers::pi;

  switch (spec.id) {
    case DgpId::kBivariateNormal: {
      for (Eigen::Index i = 0; i < spec.n; ++i)
        detail::bvn(rng, 0, 0, 1, 1, 0.7, data.values(i, 0), data.values(i, 1));
      break;
    }
    case DgpId::kNonlinearCorrelation: {
      // Y1 = X^2 + eps1; Y2 standard normal with correlation sin(X) to the
      // standardized eps1.
      for (Eigen::Index i = 0; i < spec.n; ++i) {
        const double x = rng.uniform(-3.0, 3.0);
        const double eps1 = rng.normal(0.0, 0.5);
        const double rho = std::sin(x);
        data.values(i, 0) = x * x + eps1;
        data.values(i, 1) =
            rho * (eps1 / 0.5) + std::sqrt(1.0 - rho * rho) * rng.normal();
      }
      break;
    }
    case DgpId::kNormalMixture: {
      for (Eigen::Index i = 0; i < spec.n; ++i) {
        if (rng.uniform() < 0.5) {
          detail::bvn(rng, 0, 0, 1, 1, 0.8, data.values(i, 0), data.values(i, 1));
        } else {
          const double s = std::sqrt(1.5);
          detail::bvn(rng, 3, -2, s, s, -0.5 / 1.5, data.values(i, 0),
                      data.values(i, 1));
        }
      }
      break;
    }
    case DgpId::kGeometricMixed: {
      // Half circle (radius N(2, 0.2^2), uniform angle), half cross (two
      // perpendicular lines at +-45 degrees, coordinate noise sd 0.2).
      for (Eigen::Index i = 0; i < spec.n; ++i) {
        if (rng.uniform() < 0.5) {
          const double r = rng.normal(2.0, 0.2);
          const double phi = rng.uniform(0.0, 2.0 * kPi);
          data.values(i, 0) = r * std::cos(phi);
          data.values(i, 1) = r * std::sin(phi);
        } else {
          const double s = rng.normal(0.0, 2.0);
          const double w = rng.normal(0.0, 0.2);
          const double sgn = rng.uniform() < 0.5 ? 1.0 : -1.0;
          const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
          data.values(i, 0) = inv_sqrt2 * (s - sgn * w);
          data.values(i, 1) = inv_sqrt2 * (sgn * s + w);
        }
      }
      break;
    }
    case DgpId::kSkewT: {
      // Hidden-truncation representation: augment the scale matrix with
      // delta = Omega alpha / sqrt(1 + alpha' Omega alpha), flip on the sign
      // of the latent coordinate, then divide by sqrt(chi2_nu / nu).
      const double nu = 4.0;
      Eigen::Matrix2d omega;
      omega << 1.0, 0.5, 0.5, 1.0;
      Eigen::Vector2d alpha(5.0, -3.0);
      const Eigen::Vector2d oa = omega * alpha;
      const Eigen::Vector2d delta = oa / std::sqrt(1.0 + alpha.dot(oa));
      Eigen::Matrix3d full;
      full << 1.0, delta(0), delta(1),
              delta(0), omega(0, 0), omega(0, 1),
              delta(1), omega(1, 0), omega(1, 1);
      Eigen::LLT<Eigen::Matrix3d> llt(full);
      if (llt.info() != Eigen::Success)
        throw std::runtime_error("skew-t: augmented scale matrix not PD");
      const Eigen::Matrix3d L = llt.matrixL();
      for (Eigen::Index i = 0; i < spec.n; ++i) {
        Eigen::Vector3d z(rng.normal(), rng.normal(), rng.normal());
        const Eigen::Vector3d x = L * z;
        const double flip = x(0) > 0.0 ? 1.0 : -1.0;
        const double scale = std::sqrt(rng.chi_squared(nu) / nu);
        data.values(i, 0) = flip * x(1) / scale;
        data.values(i, 1) = flip * x(2) / scale;
      }
      break;
    }
    case DgpId::kHeteroscedastic: {
      for (Eigen::Index i = 0; i < spec.n; ++i) {
        const double x = rng.uniform(-3.0, 3.0);
        data.values(i, 0) = rng.normal(x * x, std::exp(0.5 * x));
        data.values(i, 1) = rng.normal(std::sin(x), std::sqrt(std::abs(x)));
      }
      break;
    }
    case DgpId::kClaytonCopula: {
      // Marshall-Olkin gamma-frailty construction, theta = 2.
      const double theta = 2.0;
      const boost::math::gamma_distribution<double> gamma_marginal(2.0, 1.0);
      for (Eigen::Index i = 0; i < spec.n; ++i) {
        const double v = rng.gamma(1.0 / theta, 1.0);
        const double u1 = std::pow(1.0 + rng.exponential() / v, -1.0 / theta);
        const double u2 = std::pow(1.0 + rng.exponential() / v, -1.0 / theta);
        data.values(i, 0) = boost::math::quantile(gamma_marginal, u1);
        data.values(i, 1) = std::exp(boost::math::quantile(
            boost::math::normal_distribution<double>(), u2));
      }
      break;
    }
    case DgpId::kSpiral: {
      for (Eigen::Index i = 0; i < spec.n; ++i) {
        const double t = rng.uniform(0.0, 3.0 * kPi);
        const double r = 0.5 * t;
        data.values(i, 0) = r * std::cos(t) + rng.normal(0.0, 0.5);
        data.values(i, 1) = r * std::sin(t) + rng.normal(0.0, 0.5);
      }
      break;
    }
    case DgpId::kCircular: {
      for (Eigen::Index i = 0; i < spec.n; ++i) {
        const double phi = rng.uniform(0.0, 2.0 * kPi);
        const double r = rng.normal(5.0, 1.0);
        data.values(i, 0) = r * std::cos(phi);
        data.values(i, 1) = r * std::sin(phi);
      }
      break;
    }
    case DgpId::kTCopula: {
      // Gaussian copula draws scaled by a common chi2_nu mixing variable.
      const double rho = 0.7, nu = 3.0;
      const boost::math::students_t_distribution<double> t_nu(nu);
      const boost::math::students_t_distribution<double> t5(5.0);
      for (Eigen::Index i = 0; i < spec.n; ++i) {
        double z1, z2;
        detail::bvn(rng, 0, 0, 1, 1, rho, z1, z2);
        const double scale = std::sqrt(rng.chi_squared(nu) / nu);
        const double u1 = boost::math::cdf(t_nu, z1 / scale);
        const double u2 = boost::math::cdf(t_nu, z2 / scale);
        data.values(i, 0) = boost::math::quantile(t5, u1);
        data.values(i, 1) = -std::log1p(-u2);  // Exp(1) quantile
      }
      break;
    }
    case DgpId::kPiecewise: {
      for (Eigen::Index i = 0; i < spec.n; ++i) {
        const double y1 = rng.normal(0.0, 2.0);
        double y2;
        if (y1 < -1.0)
          y2 = 1.5 * y1 + rng.normal(0.0, 0.5);
        else if (y1 < 1.0)
          y2 = -0.5 * y1 + rng.normal(0.0, 0.8);
        else
          y2 = -2.0 * y1 + rng.normal(0.0, 0.5);
        data.values(i, 0) = y1;
        data.values(i, 1) = y2;
      }
      break;
    }
    case DgpId::kHourglass: {
      for (Eigen::Index i = 0; i < spec.n; ++i) {
        const double y1 = rng.normal(0.0, 2.0);
        data.values(i, 0) = y1;
        data.values(i, 1) = rng.normal(0.0, std::sqrt(0.2 + 0.3 * y1 * y1));
      }
      break;
    }
    case DgpId::kBimodalClusters: {
      for (Eigen::Index i = 0; i < spec.n; ++i) {
        if (rng.uniform() < 0.5)
          detail::bvn(rng, -2, 2, 1, 1, 0.8, data.values(i, 0), data.values(i, 1));
        else
          detail::bvn(rng, 2, 2, 1, 1, -0.7, data.values(i, 0), data.values(i, 1));
      }
      break;
    }
    case DgpId::kSinusoidal: {
      for (Eigen::Index i = 0; i < spec.n; ++i) {
        const double y1 = rng.uniform(-3.0, 3.0);
        data.values(i, 0) = y1;
        data.values(i, 1) = 2.0 * std::sin(kPi * y1) + rng.normal(0.0, 0.5);
      }
      break;
    }
  }
  return data;
}

// One dataset per process; per-process seeds derived from the master seed.
inline std::map<DgpId, Dataset> generate_all(Eigen::Index n,
                                             std::uint64_t seed) {
  std::map<DgpId, Dataset> out;
  for (int id = 1; id <= 14; ++id)
    out[dgp_from_int(id)] = generate({dgp_from_int(id), n, seed});
  return out;
}

}  // namespace mctm
