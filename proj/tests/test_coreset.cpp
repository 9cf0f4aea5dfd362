#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <set>

#include "mctm/coreset.hpp"
#include "mctm/dgp.hpp"
#include "test_helpers.hpp"

using namespace mctm;

TEST_CASE("uniform sample with k = n keeps everything at weight one") {
  const CoresetSample s = sample_uniform(10, 10, 1);
  REQUIRE(s.indices.size() == 10);
  for (Eigen::Index i = 0; i < 10; ++i) {
    CHECK(s.indices[static_cast<std::size_t>(i)] == i);
    CHECK(s.weights(i) == 1.0);
  }
}

TEST_CASE("uniform sample weights sum to n") {
  const CoresetSample s = sample_uniform(1000, 37, 5);
  CHECK(s.indices.size() == 37);
  CHECK_THAT(s.weights.sum(), Catch::Matchers::WithinAbs(1000.0, 1e-9));
  CHECK(std::is_sorted(s.indices.begin(), s.indices.end()));
  CHECK(std::set<Eigen::Index>(s.indices.begin(), s.indices.end()).size() == 37);
  CHECK_THROWS_AS(sample_uniform(10, 11, 0), std::invalid_argument);
  CHECK_THROWS_AS(sample_uniform(10, 0, 0), std::invalid_argument);
}

TEST_CASE("uniform sampling is unbiased for linear statistics") {
  const Eigen::Index n = 50;
  Eigen::VectorXd v(n);
  Rng vr(61);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = vr.uniform(0.0, 10.0);
  const double truth = v.sum();

  const int reps = 10000;
  std::vector<double> estimates;
  double second_moment = 0.0;
  for (int rep = 0; rep < reps; ++rep) {
    const CoresetSample s =
        sample_uniform(n, 10, derive_seed(7, "unbias-u", static_cast<std::uint64_t>(rep)));
    double est = 0.0;
    for (std::size_t r = 0; r < s.indices.size(); ++r)
      est += s.weights(static_cast<Eigen::Index>(r)) * v(s.indices[r]);
    estimates.push_back(est);
    second_moment += est * est;
  }
  const double mean = pairwise_sum(estimates) / reps;
  const double var = second_moment / reps - mean * mean;
  const double se = std::sqrt(var / reps);
  CHECK(std::abs(mean - truth) <= 3.0 * se + 1e-9);
}

TEST_CASE("importance sampling is unbiased for linear statistics") {
  const Eigen::Index n = 50;
  Eigen::VectorXd u(n);
  Rng vr(62);
  for (Eigen::Index i = 0; i < n; ++i) u(i) = vr.uniform(0.0, 0.9);
  const SamplingProbabilities probs = sampling_probabilities(u);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = vr.uniform(-5.0, 5.0);
  const double truth = v.sum();

  const int reps = 10000;
  std::vector<double> estimates;
  double second_moment = 0.0;
  for (int rep = 0; rep < reps; ++rep) {
    const CoresetSample s =
        sample_l2(probs, 10, derive_seed(8, "unbias-l2", static_cast<std::uint64_t>(rep)));
    double est = 0.0;
    for (std::size_t r = 0; r < s.indices.size(); ++r)
      est += s.weights(static_cast<Eigen::Index>(r)) * v(s.indices[r]);
    estimates.push_back(est);
    second_moment += est * est;
  }
  const double mean = pairwise_sum(estimates) / reps;
  const double var = second_moment / reps - mean * mean;
  const double se = std::sqrt(var / reps);
  CHECK(std::abs(mean - truth) <= 3.0 * se + 1e-9);
}

TEST_CASE("duplicate draws are merged with summed weights") {
  // Nearly all mass on index 0: most of the k draws repeat it.
  Eigen::VectorXd u = Eigen::VectorXd::Zero(4);
  u(0) = 100.0;  // not a leverage score, just a concentrated s-profile
  SamplingProbabilities probs;
  probs.s = u.array() + 0.25;
  probs.p = probs.s / probs.s.sum();

  const CoresetSample s = sample_l2(probs, 200, 3);
  CHECK(s.indices.size() <= 4);
  CHECK(std::is_sorted(s.indices.begin(), s.indices.end()));
  // Each draw of index i contributes 1/(k p_i); totals stay near n-ish scale.
  double total_draws = 0.0;
  for (std::size_t r = 0; r < s.indices.size(); ++r)
    total_draws +=
        s.weights(static_cast<Eigen::Index>(r)) * 200.0 * probs.p(s.indices[r]);
  CHECK_THAT(total_draws, Catch::Matchers::WithinAbs(200.0, 1e-9));
}

TEST_CASE("hybrid sample includes the hull augmentation with unit weights") {
  const Dataset data = generate({DgpId::kCircular, 400, 21});
  const BasisExpansion ex = expand(data, fit_bounds(data, 6));
  const LeverageScores scores = leverage_scores(ex);
  const SamplingProbabilities probs = sampling_probabilities(scores.u);

  const Eigen::Index k = 30;
  const double alpha = 0.8;
  const std::uint64_t seed = 9;
  const CoresetSample s = sample_hybrid(ex, probs, k, alpha, 0.01, seed);
  CHECK(s.method == CoresetMethod::kL2Hull);
  CHECK(s.alpha == alpha);

  // Reconstruct both halves: k1 = 24 importance draws, k2 = 6 hull points.
  Rng rng(derive_seed(seed, "hybrid-sample"));
  auto merged = detail::importance_draws(probs.p, 24, rng);
  const auto hull_ids = hull_augmentation(ex, 6, 0.01, seed);
  CHECK(hull_ids.size() <= 6);
  for (Eigen::Index i : hull_ids) merged[i] += 1.0;

  REQUIRE(s.indices.size() == merged.size());
  for (std::size_t r = 0; r < s.indices.size(); ++r) {
    CHECK(merged.count(s.indices[r]) == 1);
    CHECK(s.weights(static_cast<Eigen::Index>(r)) == merged[s.indices[r]]);
  }
  // Hull-only observations carry weight exactly 1.
  for (Eigen::Index i : hull_ids) {
    const auto it = std::find(s.indices.begin(), s.indices.end(), i);
    REQUIRE(it != s.indices.end());
    CHECK(s.weights(static_cast<Eigen::Index>(it - s.indices.begin())) >= 1.0);
  }
}

TEST_CASE("hybrid with alpha = 1 draws no hull points") {
  Rng rng(63);
  auto [ex, p] = mctm::testing::random_instance(rng, 100, 2, 3);
  const SamplingProbabilities probs =
      sampling_probabilities(leverage_scores(ex).u);
  const CoresetSample s = sample_hybrid(ex, probs, 20, 1.0, 0.01, 4);
  // All weights follow the 1/(k p_i) pattern: integer draw counts.
  for (std::size_t r = 0; r < s.indices.size(); ++r) {
    const double draws =
        s.weights(static_cast<Eigen::Index>(r)) * 20.0 * probs.p(s.indices[r]);
    CHECK_THAT(draws, Catch::Matchers::WithinAbs(std::round(draws), 1e-9));
  }
  CHECK_THROWS_AS(sample_hybrid(ex, probs, 20, 1.5, 0.01, 4),
                  std::invalid_argument);
  CHECK_THROWS_AS(sample_hybrid(ex, probs, 1, 0.8, 0.01, 4),
                  std::invalid_argument);
}

TEST_CASE("same seed reproduces the same sample") {
  const Dataset data = generate({DgpId::kSpiral, 300, 22});
  const BasisExpansion ex = expand(data, fit_bounds(data, 6));
  const SamplingProbabilities probs =
      sampling_probabilities(leverage_scores(ex).u);
  for (int variant = 0; variant < 3; ++variant) {
    CoresetSample a, b;
    switch (variant) {
      case 0:
        a = sample_uniform(300, 40, 17);
        b = sample_uniform(300, 40, 17);
        break;
      case 1:
        a = sample_l2(probs, 40, 17);
        b = sample_l2(probs, 40, 17);
        break;
      default:
        a = sample_hybrid(ex, probs, 40, 0.8, 0.01, 17);
        b = sample_hybrid(ex, probs, 40, 0.8, 0.01, 17);
        break;
    }
    CHECK(a.indices == b.indices);
    CHECK(a.weights == b.weights);
  }
}

TEST_CASE("coreset CSV round trip") {
  CoresetSample s;
  s.indices = {3, 17, 42};
  s.weights.resize(3);
  s.weights << 1.25, 0.5, 7.0 / 3.0;
  s.method = CoresetMethod::kL2Hull;
  s.k_target = 3;

  const std::string path = "coreset_roundtrip_tmp.csv";
  save_coreset_csv(s, path);
  const CoresetSample loaded = load_coreset_csv(path);
  std::remove(path.c_str());
  CHECK(loaded.indices == s.indices);
  for (Eigen::Index r = 0; r < 3; ++r)
    CHECK(loaded.weights(r) == s.weights(r));

  const nlohmann::json meta = coreset_metadata(s);
  CHECK(meta.at("method") == "l2-hull");
  CHECK(meta.at("size") == 3);
}

TEST_CASE("method names round trip") {
  for (CoresetMethod m : {CoresetMethod::kUniform, CoresetMethod::kL2Only,
                          CoresetMethod::kL2Hull})
    CHECK(coreset_method_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(coreset_method_from_string("bogus"), std::invalid_argument);
}
