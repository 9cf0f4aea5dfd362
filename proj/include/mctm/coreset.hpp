#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mctm/hull.hpp"
#include "mctm/rng.hpp"
#include "mctm/scores.hpp"
#include "mctm/util.hpp"

namespace mctm {

enum class CoresetMethod { kUniform, kL2Only, kL2Hull };

inline std::string to_string(CoresetMethod m) {
  switch (m) {
    case CoresetMethod::kUniform: return "uniform";
    case CoresetMethod::kL2Only: return "l2-only";
    case CoresetMethod::kL2Hull: return "l2-hull";
  }
  return "?";
}

inline CoresetMethod coreset_method_from_string(const std::string& s) {
  if (s == "uniform") return CoresetMethod::kUniform;
  if (s == "l2-only" || s == "l2only") return CoresetMethod::kL2Only;
  if (s == "l2-hull" || s == "l2hull") return CoresetMethod::kL2Hull;
  throw std::invalid_argument("unknown coreset method: " + s);
}

struct CoresetSample {
  std::vector<Eigen::Index> indices;  // distinct observation ids
  Eigen::VectorXd weights;            // aligned with indices, all > 0
  CoresetMethod method = CoresetMethod::kUniform;
  Eigen::Index k_target = 0;
  double alpha = 1.0;
  std::uint64_t seed = 0;
  double sample_time_s = 0.0;
};

// k distinct indices uniformly without replacement; weights n/k.
inline CoresetSample sample_uniform(Eigen::Index n, Eigen::Index k,
                                    std::uint64_t seed) {
  if (k < 1 || k > n)
    throw std::invalid_argument("sample_uniform: need 1 <= k <= n");
  Stopwatch timer;
  Rng rng(derive_seed(seed, "uniform-sample"));
  std::vector<Eigen::Index> ids(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::Index j =
        i + static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n - i)));
    std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
  }
  ids.resize(static_cast<std::size_t>(k));
  std::sort(ids.begin(), ids.end());

  CoresetSample out;
  out.indices = std::move(ids);
  out.weights = Eigen::VectorXd::Constant(
      k, static_cast<double>(n) / static_cast<double>(k));
  out.method = CoresetMethod::kUniform;
  out.k_target = k;
  out.seed = seed;
  out.sample_time_s = timer.seconds();
  return out;
}

namespace detail {

// k independent draws from p (with replacement); each draw contributes
// weight 1/(k p_i); duplicates merged by summing.
inline std::map<Eigen::Index, double> importance_draws(
    const Eigen::VectorXd& p, Eigen::Index k, Rng& rng) {
  const Eigen::Index n = p.size();
  Eigen::VectorXd cdf(n);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    acc += p(i);
    cdf(i) = acc;
  }
  std::map<Eigen::Index, double> merged;
  for (Eigen::Index draw = 0; draw < k; ++draw) {
    const double u = rng.uniform() * acc;
    const Eigen::Index idx = static_cast<Eigen::Index>(
        std::lower_bound(cdf.data(), cdf.data() + n, u) - cdf.data());
    const Eigen::Index i = std::min(idx, n - 1);
    merged[i] += 1.0 / (static_cast<double>(k) * p(i));
  }
  return merged;
}

inline CoresetSample from_weight_map(const std::map<Eigen::Index, double>& merged) {
  CoresetSample out;
  out.weights.resize(static_cast<Eigen::Index>(merged.size()));
  Eigen::Index r = 0;
  for (const auto& [idx, w] : merged) {
    out.indices.push_back(idx);
    out.weights(r++) = w;
  }
  return out;
}

}  // namespace detail

// Sensitivity-style sampling: k independent draws from p, merged.
inline CoresetSample sample_l2(const SamplingProbabilities& probabilities,
                               Eigen::Index k, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("sample_l2: k >= 1");
  Stopwatch timer;
  Rng rng(derive_seed(seed, "l2-sample"));
  CoresetSample out =
      detail::from_weight_map(detail::importance_draws(probabilities.p, k, rng));
  out.method = CoresetMethod::kL2Only;
  out.k_target = k;
  out.seed = seed;
  out.sample_time_s = timer.seconds();
  return out;
}

// Hybrid: k1 = floor(alpha k) sensitivity draws weighted 1/(k1 p_i) plus
// k2 = k - k1 hull-augmentation observations weighted 1. An observation
// selected by both keeps the sum of its weights.
inline CoresetSample sample_hybrid(const BasisExpansion& expansion,
                                   const SamplingProbabilities& probabilities,
                                   Eigen::Index k, double alpha, double epsilon,
                                   std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("sample_hybrid: alpha must be in (0, 1]");
  if (k < 2) throw std::invalid_argument("sample_hybrid: k >= 2");
  Stopwatch timer;
  const Eigen::Index k1 = static_cast<Eigen::Index>(
      std::floor(alpha * static_cast<double>(k)));
  const Eigen::Index k2 = k - k1;

  Rng rng(derive_seed(seed, "hybrid-sample"));
  auto merged = detail::importance_draws(probabilities.p, k1, rng);
  for (Eigen::Index i : hull_augmentation(expansion, k2, epsilon, seed))
    merged[i] += 1.0;

  CoresetSample out = detail::from_weight_map(merged);
  out.method = CoresetMethod::kL2Hull;
  out.k_target = k;
  out.alpha = alpha;
  out.seed = seed;
  out.sample_time_s = timer.seconds();
  return out;
}

// --- serialization: CSV of index,weight plus JSON metadata ---------------

inline void save_coreset_csv(const CoresetSample& sample,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "index,weight\n";
  out.precision(17);
  for (std::size_t r = 0; r < sample.indices.size(); ++r)
    out << sample.indices[r] << "," << sample.weights(static_cast<Eigen::Index>(r))
        << "\n";
}

inline nlohmann::json coreset_metadata(const CoresetSample& sample) {
  return nlohmann::json{{"method", to_string(sample.method)},
                        {"k", sample.k_target},
                        {"size", sample.indices.size()},
                        {"alpha", sample.alpha},
                        {"seed", sample.seed},
                        {"sample_time_s", sample.sample_time_s}};
}

inline CoresetSample load_coreset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty file: " + path);
  CoresetSample out;
  std::vector<double> weights;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error("malformed coreset row: " + line);
    out.indices.push_back(std::stoll(line.substr(0, comma)));
    weights.push_back(std::stod(line.substr(comma + 1)));
  }
  out.weights = Eigen::Map<Eigen::VectorXd>(weights.data(),
                                            static_cast<Eigen::Index>(weights.size()));
  return out;
}

}  // namespace mctm
