#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "mctm/basis.hpp"
#include "mctm/rng.hpp"

namespace mctm {

enum class LeverageMethod { kExactQr, kSketched };

struct LeverageScores {
  Eigen::VectorXd u;  // per-observation leverage, 0 <= u_i <= 1
  Eigen::Index rank = 0;
  LeverageMethod method = LeverageMethod::kExactQr;
};

struct SamplingProbabilities {
  Eigen::VectorXd p;  // sums to 1
  Eigen::VectorXd s;  // s_i = u_i + 1/n
};

// Row i is the concatenation (a_i1, ..., a_iJ) in R^{dJ}. The expansion
// already stores exactly this layout.
inline const Eigen::MatrixXd& stacked_rows(const BasisExpansion& expansion) {
  if (expansion.n() == 0) throw std::invalid_argument("stacked_rows: empty expansion");
  return expansion.A;
}

namespace detail {

// Leverage scores of M from a rank-revealing (column-pivoted) thin QR:
// u_i = ||Q_i||^2 over the first rank columns of Q.
inline LeverageScores leverage_from_matrix(const Eigen::MatrixXd& M) {
  if (M.cwiseAbs().maxCoeff() == 0.0)
    throw std::invalid_argument("leverage_scores: all-zero matrix");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M);
  const Eigen::Index rank = qr.rank();
  Eigen::MatrixXd thin_q =
      qr.householderQ() * Eigen::MatrixXd::Identity(M.rows(), rank);
  LeverageScores out;
  out.u = thin_q.rowwise().squaredNorm();
  out.u = out.u.cwiseMin(1.0).cwiseMax(0.0);  // shave roundoff
  out.rank = rank;
  out.method = LeverageMethod::kExactQr;
  return out;
}

}  // namespace detail

// Per-observation l2 leverage scores of the block matrix whose J rows per
// observation place the stacked row b_i in disjoint column blocks. By that
// block structure the score of every row (i, j) equals the leverage of row i
// of the n x (dJ) stacked matrix, so one score per observation suffices.
inline LeverageScores leverage_scores(const BasisExpansion& expansion) {
  return detail::leverage_from_matrix(stacked_rows(expansion));
}

// Sensitivity proxy s_i = u_i + 1/n, normalized to probabilities.
inline SamplingProbabilities sampling_probabilities(const Eigen::VectorXd& u) {
  const Eigen::Index n = u.size();
  SamplingProbabilities out;
  out.s = u.array() + 1.0 / static_cast<double>(n);
  out.p = out.s / out.s.sum();
  return out;
}

// Approximate leverage scores via a seeded Rademacher row-mixing sketch:
// QR of the (sketch_dim x dJ) sketch S*A gives R, and u~_i = ||a_i R^{-1}||^2.
// With sketch_dim >= n the sketch is skipped and the result is exact.
inline LeverageScores sketched_leverage(const BasisExpansion& expansion,
                                        Eigen::Index sketch_dim,
                                        std::uint64_t seed) {
  const Eigen::MatrixXd& A = stacked_rows(expansion);
  const Eigen::Index n = A.rows();
  const Eigen::Index dJ = A.cols();
  if (sketch_dim < dJ)
    throw std::invalid_argument("sketched_leverage: sketch_dim must be >= dJ");
  if (sketch_dim >= n) {
    LeverageScores out = detail::leverage_from_matrix(A);
    out.method = LeverageMethod::kSketched;
    return out;
  }

  // Sparse Rademacher mixing: each input row lands in one sketch row with a
  // random sign (CountSketch); cheap and a constant-factor subspace embedding
  // for sketch_dim = Omega(dJ^2), good in practice well below that.
  Rng rng(derive_seed(seed, "leverage-sketch"));
  Eigen::MatrixXd sketch = Eigen::MatrixXd::Zero(sketch_dim, dJ);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index bucket =
        static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(sketch_dim)));
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    sketch.row(bucket) += sign * A.row(i);
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sketch);
  const Eigen::Index rank = qr.rank();
  // Solve R^T x = a_i via the triangular factor restricted to the revealed rank.
  Eigen::MatrixXd R = qr.matrixR()
                          .topLeftCorner(rank, dJ)
                          .triangularView<Eigen::Upper>();
  Eigen::MatrixXd P = qr.colsPermutation();
  Eigen::MatrixXd AP = A * P;
  // u~_i = || R^{-T} (AP)_i ||^2 using the leading rank x rank block.
  Eigen::MatrixXd Rr = R.leftCols(rank);
  Eigen::MatrixXd sol = Rr.transpose()
                            .triangularView<Eigen::Lower>()
                            .solve(AP.leftCols(rank).transpose());
  LeverageScores out;
  out.u = sol.colwise().squaredNorm();
  out.rank = rank;
  out.method = LeverageMethod::kSketched;
  return out;
}

// --- non-canonical extras (not defined in the reference experiments; kept
// behind explicit calls and flagged in the CLI) ---------------------------

// Ridge leverage scores: diag(A (A^T A + gamma I)^{-1} A^T).
inline LeverageScores ridge_leverage_scores(const BasisExpansion& expansion,
                                            double gamma = -1.0) {
  const Eigen::MatrixXd& A = stacked_rows(expansion);
  const Eigen::Index dJ = A.cols();
  Eigen::MatrixXd gram = A.transpose() * A;
  if (gamma < 0.0) gamma = 1e-3 * gram.trace() / static_cast<double>(dJ);
  gram.diagonal().array() += gamma;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  Eigen::MatrixXd sol = llt.matrixL().solve(A.transpose());
  LeverageScores out;
  out.u = sol.colwise().squaredNorm();
  out.rank = dJ;
  out.method = LeverageMethod::kExactQr;
  return out;
}

// Square-rooted leverage scores, renormalized to keep the same total mass.
inline Eigen::VectorXd root_leverage_scores(const Eigen::VectorXd& u) {
  Eigen::VectorXd r = u.cwiseSqrt();
  return r * (u.sum() / r.sum());
}

}  // namespace mctm
