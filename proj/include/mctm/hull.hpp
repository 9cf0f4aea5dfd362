#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mctm/basis.hpp"
#include "mctm/rng.hpp"

namespace mctm {

struct HullDistanceResult {
  double distance = 0.0;
  Eigen::VectorXd witness;  // point of conv(S) achieving the distance
};

// Distance from q to conv(S) via Wolfe's min-norm-point algorithm. The
// active set ("corral") stays affinely independent, so every outer round
// solves a small KKT system and the iteration terminates finitely; the
// result is exact up to the duality-gap threshold, which guarantees a
// distance of at most dist(q, conv(S)) + epsilon * scale. `scale` should be
// the diameter of the point set; if <= 0 it is estimated from S.
inline HullDistanceResult hull_distance(const Eigen::VectorXd& q,
                                        const Eigen::MatrixXd& S,
                                        double epsilon, double scale = 0.0) {
  const Eigen::Index m = S.rows();
  const Eigen::Index d = S.cols();
  if (m == 0) throw std::invalid_argument("hull_distance: empty S");
  if (scale <= 0.0) {
    scale = 0.0;
    for (Eigen::Index a = 0; a < m; ++a)
      scale = std::max(scale, (S.row(a) - S.row(0)).norm());
    if (scale == 0.0) scale = 1.0;
  }
  // Work on the translated problem: minimize ||x|| over conv(S - q).
  const Eigen::MatrixXd P = S.rowwise() - q.transpose();

  Eigen::Index best = 0;
  P.rowwise().squaredNorm().minCoeff(&best);
  std::vector<Eigen::Index> corral{best};
  Eigen::VectorXd lam = Eigen::VectorXd::Ones(1);
  Eigen::VectorXd x = P.row(best).transpose();

  const double eps_abs = epsilon * scale;
  // ||x||^2 - min_j <x, p_j> bounds half the suboptimality of ||x||^2.
  const double gap_tol = 0.5 * eps_abs * eps_abs + 1e-13 * scale * scale;
  const double drop_tol = 1e-12;

  for (int major = 0; major < 200; ++major) {
    Eigen::Index entering;
    const double most_opposite = (P * x).minCoeff(&entering);
    if (x.squaredNorm() - most_opposite <= gap_tol) break;
    bool already_in = false;
    for (Eigen::Index c : corral) already_in |= (c == entering);
    if (already_in) break;  // numerically stuck; x is as good as it gets
    corral.push_back(entering);
    lam.conservativeResize(lam.size() + 1);
    lam(lam.size() - 1) = 0.0;

    for (int minor = 0; minor < 200; ++minor) {
      const Eigen::Index k = static_cast<Eigen::Index>(corral.size());
      Eigen::MatrixXd M(k, d);
      for (Eigen::Index r = 0; r < k; ++r)
        M.row(r) = P.row(corral[static_cast<std::size_t>(r)]);
      // Affine minimizer: [M M^T, 1; 1^T, 0] (alpha, mu) = (0, 1).
      Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(k + 1, k + 1);
      kkt.topLeftCorner(k, k) = M * M.transpose();
      kkt.topRightCorner(k, 1).setOnes();
      kkt.bottomLeftCorner(1, k).setOnes();
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k + 1);
      rhs(k) = 1.0;
      const Eigen::VectorXd alpha =
          kkt.completeOrthogonalDecomposition().solve(rhs).head(k);

      if (alpha.minCoeff() > drop_tol) {
        lam = alpha;
        x = M.transpose() * lam;
        break;
      }
      // Step towards the affine minimizer until a coefficient hits zero,
      // then drop every vanished point from the corral.
      double step = 1.0;
      for (Eigen::Index r = 0; r < k; ++r)
        if (alpha(r) <= drop_tol)
          step = std::min(step, lam(r) / std::max(lam(r) - alpha(r), 1e-300));
      lam += step * (alpha - lam);
      std::vector<Eigen::Index> next_corral;
      std::vector<double> next_lam;
      for (Eigen::Index r = 0; r < k; ++r)
        if (lam(r) > drop_tol) {
          next_corral.push_back(corral[static_cast<std::size_t>(r)]);
          next_lam.push_back(lam(r));
        }
      if (next_corral.empty()) {
        next_corral.push_back(corral[0]);
        next_lam.push_back(1.0);
      }
      corral = std::move(next_corral);
      lam = Eigen::Map<Eigen::VectorXd>(next_lam.data(),
                                        static_cast<Eigen::Index>(next_lam.size()));
      lam /= lam.sum();
      x.setZero();
      for (Eigen::Index r = 0; r < lam.size(); ++r)
        x += lam(r) * P.row(corral[static_cast<std::size_t>(r)]).transpose();
    }
  }
  return {x.norm(), q + x};
}

// Greedy epsilon-kernel selection: seed with a random point, the farthest
// point from it, and the farthest point from their line; then repeatedly add
// the input point farthest from the hull of the current selection.
class GreedyHullSelector {
 public:
  GreedyHullSelector(const Eigen::MatrixXd& points, double epsilon,
                     std::uint64_t seed,
                     Eigen::Index prefilter_threshold = 4096,
                     Eigen::Index prefilter_directions = 512)
      : points_(points), epsilon_(epsilon) {
    const Eigen::Index m = points.rows();
    if (m == 0) throw std::invalid_argument("hull selection: no points");
    if (!(epsilon > 0.0 && epsilon < 1.0))
      throw std::invalid_argument("hull selection: epsilon must be in (0,1)");
    estimate_diameter();
    tol_ = epsilon_ * diam_;
    build_candidates(seed, prefilter_threshold, prefilter_directions);
    seed_selection(seed);
  }

  // Adds the farthest remaining candidate. Returns false when the maximum
  // hull distance fell below epsilon * diam or no candidates remain.
  bool step() {
    if (selected_.empty()) return false;
    Eigen::MatrixXd S = selected_points();
    double best_dist = -1.0;
    Eigen::Index best_id = -1;
    for (Eigen::Index c : candidates_) {
      if (!active_[static_cast<std::size_t>(c)]) continue;
      const auto res =
          hull_distance(points_.row(c).transpose(), S, epsilon_, diam_);
      if (res.distance < tol_) {
        active_[static_cast<std::size_t>(c)] = false;  // can only shrink further
        continue;
      }
      // Lowest index wins ties, and candidates are scanned in ascending order.
      if (res.distance > best_dist) {
        best_dist = res.distance;
        best_id = c;
      }
    }
    if (best_id < 0) {
      residuals_.push_back(std::max(best_dist, 0.0));
      return false;
    }
    residuals_.push_back(best_dist);
    select(best_id);
    return true;
  }

  // Drops selected points lying within tolerance of the hull of the other
  // selected points. The random seed point (and occasionally the line seeds)
  // can end up interior once real extreme points join the selection.
  std::size_t prune_interior() {
    if (selected_.size() < 3) return 0;
    std::vector<Eigen::Index> kept;
    std::size_t removed = 0;
    for (std::size_t r = 0; r < selected_.size(); ++r) {
      Eigen::MatrixXd others(static_cast<Eigen::Index>(selected_.size() - 1),
                             points_.cols());
      Eigen::Index row = 0;
      for (std::size_t o = 0; o < selected_.size(); ++o)
        if (o != r) others.row(row++) = points_.row(selected_[o]);
      const auto res = hull_distance(points_.row(selected_[r]).transpose(),
                                     others, epsilon_, diam_);
      if (res.distance < tol_) {
        ++removed;
      } else {
        kept.push_back(selected_[r]);
      }
    }
    if (removed) selected_ = std::move(kept);
    return removed;
  }

  const std::vector<Eigen::Index>& selected() const { return selected_; }
  const std::vector<double>& residuals() const { return residuals_; }
  double diameter() const { return diam_; }
  double tolerance() const { return tol_; }

  Eigen::MatrixXd selected_points() const {
    Eigen::MatrixXd S(static_cast<Eigen::Index>(selected_.size()), points_.cols());
    for (std::size_t r = 0; r < selected_.size(); ++r)
      S.row(static_cast<Eigen::Index>(r)) = points_.row(selected_[r]);
    return S;
  }

 private:
  void estimate_diameter() {
    // Constant-factor estimate from the 2d axis-extreme points.
    std::vector<Eigen::Index> extremes;
    for (Eigen::Index c = 0; c < points_.cols(); ++c) {
      Eigen::Index lo, hi;
      points_.col(c).minCoeff(&lo);
      points_.col(c).maxCoeff(&hi);
      extremes.push_back(lo);
      extremes.push_back(hi);
    }
    diam_ = 0.0;
    for (std::size_t a = 0; a < extremes.size(); ++a)
      for (std::size_t b = a + 1; b < extremes.size(); ++b)
        diam_ = std::max(
            diam_, (points_.row(extremes[a]) - points_.row(extremes[b])).norm());
    if (diam_ == 0.0) diam_ = 1.0;
  }

  void build_candidates(std::uint64_t seed, Eigen::Index threshold,
                        Eigen::Index n_directions) {
    const Eigen::Index m = points_.rows();
    active_.assign(static_cast<std::size_t>(m), false);
    if (m <= threshold) {
      candidates_.resize(static_cast<std::size_t>(m));
      for (Eigen::Index i = 0; i < m; ++i) candidates_[static_cast<std::size_t>(i)] = i;
      active_.assign(static_cast<std::size_t>(m), true);
      return;
    }
    // Large inputs: restrict the greedy search to points extremal in random
    // directions (plus axis extremes). Only near-hull points can ever be
    // selected, so this prunes the bulk of interior points up front.
    std::set<Eigen::Index> keep;
    for (Eigen::Index c = 0; c < points_.cols(); ++c) {
      Eigen::Index lo, hi;
      points_.col(c).minCoeff(&lo);
      points_.col(c).maxCoeff(&hi);
      keep.insert(lo);
      keep.insert(hi);
    }
    Rng rng(derive_seed(seed, "hull-directions"));
    const Eigen::Index d = points_.cols();
    for (Eigen::Index k = 0; k < n_directions; ++k) {
      Eigen::VectorXd dir(d);
      for (Eigen::Index c = 0; c < d; ++c) dir(c) = rng.normal();
      dir.normalize();
      Eigen::Index arg;
      (points_ * dir).maxCoeff(&arg);
      keep.insert(arg);
    }
    candidates_.assign(keep.begin(), keep.end());
    for (Eigen::Index c : candidates_) active_[static_cast<std::size_t>(c)] = true;
  }

  void seed_selection(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "hull-seed"));
    const Eigen::Index a0 =
        candidates_[static_cast<std::size_t>(rng.uniform_index(candidates_.size()))];
    select(a0);
    if (candidates_.size() < 2) return;
    // Farthest point from a0.
    Eigen::Index a1 = -1;
    double best = -1.0;
    for (Eigen::Index c : candidates_) {
      if (!active_[static_cast<std::size_t>(c)]) continue;
      const double dist = (points_.row(c) - points_.row(a0)).norm();
      if (dist > best) {
        best = dist;
        a1 = c;
      }
    }
    if (a1 < 0) return;
    select(a1);
    // Farthest point from the line through a0 and a1.
    const Eigen::VectorXd base = points_.row(a0).transpose();
    Eigen::VectorXd axis = points_.row(a1).transpose() - base;
    const double axis_norm2 = axis.squaredNorm();
    if (axis_norm2 == 0.0) return;
    Eigen::Index a2 = -1;
    best = -1.0;
    for (Eigen::Index c : candidates_) {
      if (!active_[static_cast<std::size_t>(c)]) continue;
      Eigen::VectorXd rel = points_.row(c).transpose() - base;
      rel -= (rel.dot(axis) / axis_norm2) * axis;
      const double dist = rel.norm();
      if (dist > best) {
        best = dist;
        a2 = c;
      }
    }
    if (a2 >= 0 && best > 0.0) select(a2);
  }

  void select(Eigen::Index id) {
    selected_.push_back(id);
    active_[static_cast<std::size_t>(id)] = false;
  }

  const Eigen::MatrixXd& points_;
  double epsilon_;
  double diam_ = 1.0;
  double tol_ = 0.0;
  std::vector<Eigen::Index> candidates_;
  std::vector<bool> active_;
  std::vector<Eigen::Index> selected_;
  std::vector<double> residuals_;
};

struct HullSelection {
  std::vector<Eigen::Index> selected;  // row indices into the input points
  Eigen::MatrixXd points;              // the selected rows
  std::vector<double> residuals;       // max hull distance per greedy round
  double epsilon = 0.0;
  double diameter = 0.0;
};

// Selects up to `budget` points whose hull approximates the hull of the
// input within epsilon * diameter. Inputs with fewer than 3 points are
// returned whole.
inline HullSelection select_hull_points(const Eigen::MatrixXd& points,
                                        Eigen::Index budget, double epsilon,
                                        std::uint64_t seed = 0) {
  if (budget < 1) throw std::invalid_argument("select_hull_points: budget >= 1");
  HullSelection out;
  out.epsilon = epsilon;
  if (points.rows() < 3) {
    for (Eigen::Index i = 0; i < points.rows(); ++i) out.selected.push_back(i);
    out.points = points;
    return out;
  }
  GreedyHullSelector selector(points, epsilon, seed);
  for (;;) {
    bool exhausted = false;
    while (static_cast<Eigen::Index>(selector.selected().size()) < budget) {
      if (!selector.step()) {
        exhausted = true;
        break;
      }
    }
    if (selector.prune_interior() == 0 || exhausted) break;
  }
  out.selected = selector.selected();
  if (static_cast<Eigen::Index>(out.selected.size()) > budget)
    out.selected.resize(static_cast<std::size_t>(budget));
  out.residuals = selector.residuals();
  out.diameter = selector.diameter();
  out.points.resize(static_cast<Eigen::Index>(out.selected.size()), points.cols());
  for (std::size_t r = 0; r < out.selected.size(); ++r)
    out.points.row(static_cast<Eigen::Index>(r)) = points.row(out.selected[r]);
  return out;
}

// Pools the nJ derivative rows, runs the greedy selection at tolerance
// epsilon / J, and maps selected (i, j) pairs to distinct observation
// indices. Selection continues past duplicates until `budget` distinct
// observations or the residual drops below tolerance.
inline std::vector<Eigen::Index> hull_augmentation(
    const BasisExpansion& expansion, Eigen::Index budget, double epsilon,
    std::uint64_t seed = 0, bool per_dimension = false) {
  if (budget <= 0) return {};
  const Eigen::Index n = expansion.n();
  const Eigen::Index J = expansion.dims();
  const int d = expansion.basis_dim();

  auto run_pool = [&](const Eigen::MatrixXd& pool, Eigen::Index pool_budget,
                      double eps, auto to_obs) {
    auto distinct = [&](const std::vector<Eigen::Index>& ids) {
      std::set<Eigen::Index> obs;
      for (Eigen::Index id : ids) obs.insert(to_obs(id));
      return static_cast<Eigen::Index>(obs.size());
    };
    std::vector<Eigen::Index> obs_order;
    std::set<Eigen::Index> seen;
    auto absorb = [&](Eigen::Index row_id) {
      const Eigen::Index i = to_obs(row_id);
      if (seen.insert(i).second) obs_order.push_back(i);
    };
    if (pool.rows() < 3) {
      for (Eigen::Index r = 0; r < pool.rows(); ++r) absorb(r);
      return obs_order;
    }
    GreedyHullSelector selector(pool, eps, seed);
    for (;;) {
      bool exhausted = false;
      while (distinct(selector.selected()) < pool_budget) {
        if (!selector.step()) {
          exhausted = true;
          break;
        }
      }
      if (selector.prune_interior() == 0 || exhausted) break;
    }
    for (Eigen::Index id : selector.selected()) absorb(id);
    if (static_cast<Eigen::Index>(obs_order.size()) > pool_budget)
      obs_order.resize(static_cast<std::size_t>(pool_budget));
    return obs_order;
  };

  if (!per_dimension) {
    Eigen::MatrixXd pool(n * J, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < J; ++j)
        pool.row(i * J + j) = expansion.deriv_row(i, j);
    return run_pool(pool, budget, epsilon / static_cast<double>(J),
                    [J](Eigen::Index id) { return id / J; });
  }

  // Per-dimension variant: split the budget evenly across dimensions.
  std::vector<Eigen::Index> out;
  std::set<Eigen::Index> seen;
  for (Eigen::Index j = 0; j < J; ++j) {
    const Eigen::Index share = budget / J + (j < budget % J ? 1 : 0);
    if (share == 0) continue;
    Eigen::MatrixXd pool(n, d);
    for (Eigen::Index i = 0; i < n; ++i) pool.row(i) = expansion.deriv_row(i, j);
    for (Eigen::Index i :
         run_pool(pool, share, epsilon / static_cast<double>(J),
                  [](Eigen::Index id) { return id; }))
      if (seen.insert(i).second) out.push_back(i);
  }
  return out;
}

}  // namespace mctm
