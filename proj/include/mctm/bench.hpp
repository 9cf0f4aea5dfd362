#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "mctm/coreset.hpp"
#include "mctm/dgp.hpp"
#include "mctm/fit.hpp"
#include "mctm/model.hpp"
#include "mctm/scores.hpp"

namespace mctm {

// --- metrics -------------------------------------------------------------

// Full-data nll at the coreset-fitted parameters divided by the full-data
// nll at the full-fit parameters. When the denominator is nonpositive the
// normalization shift nJ(ln c + 1) with c = 1 is applied to both sides.
inline double likelihood_ratio(double full_total,
                               const ModelParams& coreset_params,
                               const BasisExpansion& expansion_full) {
  const double coreset_total = nll(expansion_full, coreset_params).total;
  if (full_total > 0.0) return coreset_total / full_total;
  const double shift = static_cast<double>(expansion_full.n()) *
                       static_cast<double>(expansion_full.dims());
  return (coreset_total + shift) / (full_total + shift);
}

// Euclidean distance between concatenated theta vectors.
inline double param_l2(const ModelParams& a, const ModelParams& b) {
  if (a.dims() != b.dims() || a.basis_dim() != b.basis_dim())
    throw std::invalid_argument("param_l2: shape mismatch");
  return (a.theta_concat() - b.theta_concat()).norm();
}

// Euclidean norm over the strictly-lower-triangular differences; a scalar
// absolute difference when J = 2.
inline double lambda_err(const ModelParams& a, const ModelParams& b) {
  if (a.lambda_strict.size() != b.lambda_strict.size())
    throw std::invalid_argument("lambda_err: shape mismatch");
  return (a.lambda_strict - b.lambda_strict).norm();
}

// --- experiment runner ---------------------------------------------------

struct MetricRow {
  std::string dataset;
  std::string method;
  Eigen::Index k = 0;
  int rep = 0;
  double loglik_ratio = std::numeric_limits<double>::quiet_NaN();
  double param_l2 = std::numeric_limits<double>::quiet_NaN();
  double param_l2_sq = std::numeric_limits<double>::quiet_NaN();
  double lambda_err = std::numeric_limits<double>::quiet_NaN();
  double sample_time_s = 0.0;
  double fit_time_s = 0.0;
  double total_time_s = 0.0;
  bool failed = false;
};

struct MetricStats {
  double mean = 0.0;
  double std_dev = 0.0;
  std::size_t count = 0;
};

struct ExperimentReport {
  std::vector<MetricRow> rows;
  // (dataset, method, k) -> metric name -> stats
  std::map<std::tuple<std::string, std::string, Eigen::Index>,
           std::map<std::string, MetricStats>>
      aggregates;
  nlohmann::json config_echo;
};

struct BenchConfig {
  std::vector<DgpId> dgps;  // empty => use external datasets instead
  Eigen::Index n = 10000;
  std::vector<Eigen::Index> ks = {30, 100};
  std::vector<CoresetMethod> methods = {CoresetMethod::kUniform,
                                        CoresetMethod::kL2Only,
                                        CoresetMethod::kL2Hull};
  int reps = 10;
  std::uint64_t seed = 7;
  int degree = 6;
  double alpha = 0.8;
  double epsilon = 0.01;
  double eta = -1.0;  // < 0 => 2 * epsilon
  int max_iters = 2000;
  double grad_tol = 1e-6;
  int threads = 0;  // 0 => hardware concurrency
  bool zero_timings = false;  // write 0 for timing columns (stable output)

  double resolved_eta() const { return eta < 0.0 ? 2.0 * epsilon : eta; }

  nlohmann::json echo() const {
    nlohmann::json j;
    j["n"] = n;
    j["ks"] = ks;
    std::vector<std::string> ms;
    for (auto m : methods) ms.push_back(to_string(m));
    j["methods"] = ms;
    std::vector<std::string> ds;
    for (auto d : dgps) ds.push_back(to_string(d));
    j["dgps"] = ds;
    j["reps"] = reps;
    j["seed"] = seed;
    j["degree"] = degree;
    j["alpha"] = alpha;
    j["epsilon"] = epsilon;
    j["eta"] = resolved_eta();
    j["max_iters"] = max_iters;
    j["grad_tol"] = grad_tol;
    return j;
  }
};

namespace detail {

inline void parallel_for(std::size_t count, int threads,
                         const std::function<void(std::size_t)>& body) {
  if (threads <= 0)
    threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min<int>(threads, static_cast<int>(count)));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

// Runs the full workflow on one named dataset: full-data fit once, then per
// repetition draws each method's coreset at each size, refits, and computes
// the metrics against the full-data baseline.
inline std::vector<MetricRow> run_dataset(const std::string& name,
                                          const Dataset& data,
                                          const BenchConfig& config) {
  std::vector<MetricRow> rows;
  const double eta = config.resolved_eta();

  const BasisConfig basis_config = fit_bounds(data, config.degree);
  const BasisExpansion expansion = expand(data, basis_config);
  const Eigen::Index n = expansion.n();

  FitConfig fit_config;
  fit_config.max_iters = config.max_iters;
  fit_config.grad_tol = config.grad_tol;
  fit_config.eta = eta;
  fit_config.seed = derive_seed(config.seed, "fit-full-" + name);
  const FitResult full_fit = fit(expansion, Eigen::VectorXd(), fit_config);
  const double full_total = full_fit.loss.total;

  // Scores are shared across methods and repetitions; their cost counts
  // toward sampling time for the score-based methods.
  Stopwatch score_timer;
  const LeverageScores scores = leverage_scores(expansion);
  const SamplingProbabilities probs = sampling_probabilities(scores.u);
  const double score_time = score_timer.seconds();

  for (int rep = 0; rep < config.reps; ++rep) {
    for (const CoresetMethod method : config.methods) {
      for (const Eigen::Index k : config.ks) {
        MetricRow row;
        row.dataset = name;
        row.method = to_string(method);
        row.k = k;
        row.rep = rep;
        const std::uint64_t sample_seed = derive_seed(
            config.seed, "sample-" + name + "-" + row.method + "-" + std::to_string(k),
            static_cast<std::uint64_t>(rep));
        try {
          CoresetSample sample;
          switch (method) {
            case CoresetMethod::kUniform:
              sample = sample_uniform(n, std::min(k, n), sample_seed);
              break;
            case CoresetMethod::kL2Only:
              sample = sample_l2(probs, k, sample_seed);
              row.sample_time_s = score_time;
              break;
            case CoresetMethod::kL2Hull:
              sample = sample_hybrid(expansion, probs, k, config.alpha,
                                     config.epsilon, sample_seed);
              row.sample_time_s = score_time;
              break;
          }
          row.sample_time_s += sample.sample_time_s;

          const BasisExpansion sub = expansion.subset(sample.indices);
          FitConfig coreset_fit_config = fit_config;
          coreset_fit_config.seed =
              derive_seed(sample_seed, "fit-coreset");
          const FitResult coreset_fit =
              fit(sub, sample.weights, coreset_fit_config);
          row.fit_time_s = coreset_fit.fit_time_s;
          row.total_time_s = row.sample_time_s + row.fit_time_s;
          row.loglik_ratio =
              likelihood_ratio(full_total, coreset_fit.params, expansion);
          row.param_l2 = param_l2(full_fit.params, coreset_fit.params);
          row.param_l2_sq = row.param_l2 * row.param_l2;
          row.lambda_err = lambda_err(full_fit.params, coreset_fit.params);
        } catch (const std::exception&) {
          row.failed = true;
        }
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

inline void compute_aggregates(ExperimentReport& report) {
  std::map<std::tuple<std::string, std::string, Eigen::Index>,
           std::map<std::string, std::vector<double>>>
      buckets;
  for (const MetricRow& row : report.rows) {
    if (row.failed) continue;
    auto& b = buckets[{row.dataset, row.method, row.k}];
    b["loglik_ratio"].push_back(row.loglik_ratio);
    b["param_l2"].push_back(row.param_l2);
    b["param_l2_sq"].push_back(row.param_l2_sq);
    b["lambda_err"].push_back(row.lambda_err);
    b["sample_time_s"].push_back(row.sample_time_s);
    b["fit_time_s"].push_back(row.fit_time_s);
    b["total_time_s"].push_back(row.total_time_s);
  }
  for (auto& [key, metrics] : buckets) {
    for (auto& [metric, values] : metrics) {
      MetricStats stats;
      stats.count = values.size();
      stats.mean = pairwise_sum(values) / static_cast<double>(values.size());
      double ss = 0.0;
      for (double v : values) ss += (v - stats.mean) * (v - stats.mean);
      stats.std_dev = values.size() > 1
                          ? std::sqrt(ss / static_cast<double>(values.size() - 1))
                          : 0.0;
      report.aggregates[key][metric] = stats;
    }
  }
}

// Simulation experiment across the configured DGPs. DGPs run concurrently;
// each worker owns its seed-derived RNG streams and the merge preserves
// DGP order, so output is independent of scheduling.
inline ExperimentReport run_experiment(const BenchConfig& config) {
  ExperimentReport report;
  report.config_echo = config.echo();
  std::vector<std::vector<MetricRow>> per_dgp(config.dgps.size());
  detail::parallel_for(config.dgps.size(), config.threads, [&](std::size_t t) {
    const DgpId id = config.dgps[t];
    const Dataset data = generate({id, config.n, config.seed});
    per_dgp[t] = run_dataset(to_string(id), data, config);
  });
  for (auto& rows : per_dgp)
    for (auto& row : rows) report.rows.push_back(std::move(row));
  compute_aggregates(report);
  return report;
}

// --- persistence ---------------------------------------------------------

inline std::string rows_to_csv(const std::vector<MetricRow>& rows,
                               bool zero_timings = false) {
  std::ostringstream out;
  out.precision(17);
  out << "dataset,method,k,rep,loglik_ratio,param_l2,param_l2_sq,lambda_err,"
         "sample_time_s,fit_time_s,total_time_s\n";
  for (const MetricRow& r : rows) {
    out << r.dataset << "," << r.method << "," << r.k << "," << r.rep << ","
        << r.loglik_ratio << "," << r.param_l2 << "," << r.param_l2_sq << ","
        << r.lambda_err << ",";
    if (zero_timings)
      out << "0,0,0\n";
    else
      out << r.sample_time_s << "," << r.fit_time_s << "," << r.total_time_s
          << "\n";
  }
  return out.str();
}

inline nlohmann::json aggregates_to_json(const ExperimentReport& report) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [key, metrics] : report.aggregates) {
    nlohmann::json entry;
    entry["dataset"] = std::get<0>(key);
    entry["method"] = std::get<1>(key);
    entry["k"] = std::get<2>(key);
    for (const auto& [metric, stats] : metrics)
      entry[metric] = {{"mean", stats.mean},
                       {"std", stats.std_dev},
                       {"count", stats.count}};
    out.push_back(std::move(entry));
  }
  return out;
}

inline void save_report(const ExperimentReport& report,
                        const std::string& out_dir, bool zero_timings = false) {
  {
    std::ofstream f(out_dir + "/rows.csv");
    if (!f) throw std::runtime_error("cannot write to " + out_dir);
    f << rows_to_csv(report.rows, zero_timings);
  }
  {
    std::ofstream f(out_dir + "/aggregates.json");
    f << aggregates_to_json(report).dump(2) << "\n";
  }
  {
    std::ofstream f(out_dir + "/config.json");
    f << report.config_echo.dump(2) << "\n";
  }
}

}  // namespace mctm
