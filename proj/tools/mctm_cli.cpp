// Command-line front end: simulation, expansion, scoring, coreset sampling,
// fitting and benchmark runs, all reproducible from a single master seed.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "mctm/bench.hpp"
#include "mctm/coreset.hpp"
#include "mctm/dataset.hpp"
#include "mctm/dgp.hpp"
#include "mctm/fit.hpp"
#include "mctm/hull.hpp"
#include "mctm/model.hpp"
#include "mctm/scores.hpp"

namespace {

struct CommonOpts {
  std::uint64_t seed = 7;
  int degree = 6;
  double epsilon = 0.01;
  double eta = -1.0;  // < 0 => 2 * epsilon
  double alpha = 0.8;
  std::string out = ".";
  int threads = 0;

  double resolved_eta() const { return eta < 0.0 ? 2.0 * epsilon : eta; }
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--seed", opts.seed, "master seed");
  cmd->add_option("--degree", opts.degree, "Bernstein degree M (basis dim M+1)");
  cmd->add_option("--epsilon", opts.epsilon, "hull tolerance epsilon");
  cmd->add_option("--eta", opts.eta, "log-argument floor (default 2*epsilon)");
  cmd->add_option("--alpha", opts.alpha, "hybrid sensitivity fraction");
  cmd->add_option("--out", opts.out, "output directory");
  cmd->add_option("--threads", opts.threads, "worker threads (0 = all cores)");
}

void check_out_dir(const std::string& out) {
  namespace fs = std::filesystem;
  const fs::path p(out);
  if (!fs::exists(p)) {
    const fs::path parent = p.has_parent_path() ? p.parent_path() : fs::path(".");
    if (!fs::exists(parent))
      throw CLI::ValidationError("--out parent directory does not exist: " +
                                 parent.string());
    fs::create_directory(p);
  }
}

void write_config_echo(const std::string& out_dir, const nlohmann::json& j) {
  std::ofstream f(out_dir + "/config.json");
  f << j.dump(2) << "\n";
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

// Column spec: comma-separated names, indices, or index ranges like "0-9".
std::vector<std::string> parse_columns(const std::string& spec) {
  std::vector<std::string> out;
  for (const auto& tok : split_commas(spec)) {
    const auto dash = tok.find('-');
    if (dash != std::string::npos && dash > 0 &&
        tok.find_first_not_of("0123456789-") == std::string::npos) {
      const int lo = std::stoi(tok.substr(0, dash));
      const int hi = std::stoi(tok.substr(dash + 1));
      for (int c = lo; c <= hi; ++c) out.push_back(std::to_string(c));
    } else {
      out.push_back(tok);
    }
  }
  return out;
}

std::vector<mctm::DgpId> parse_dgps(const std::string& spec) {
  std::vector<mctm::DgpId> out;
  if (spec == "all") {
    for (int id = 1; id <= 14; ++id) out.push_back(mctm::dgp_from_int(id));
    return out;
  }
  for (const auto& tok : split_commas(spec))
    out.push_back(mctm::dgp_from_int(std::stoi(tok)));
  return out;
}

mctm::Dataset load_input(const std::string& path, const std::string& columns,
                         std::size_t max_rows, std::uint64_t seed) {
  std::vector<std::string> cols;
  if (!columns.empty()) {
    cols = parse_columns(columns);
  } else {
    // All columns: read the header first.
    std::ifstream in(path);
    std::string header;
    if (!in || !std::getline(in, header))
      throw std::runtime_error("cannot read header of " + path);
    if (!header.empty() && header.back() == '\r') header.pop_back();
    std::stringstream ss(header);
    std::string tok;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
  }
  mctm::CsvLoadReport report;
  mctm::Dataset data = mctm::load_csv(path, cols, max_rows, seed, &report);
  if (report.rows_dropped_nonfinite > 0)
    std::cerr << "note: dropped " << report.rows_dropped_nonfinite
              << " rows with non-finite cells\n";
  return data;
}

int run(int argc, char** argv) {
  CLI::App app{"coreset-accelerated multivariate transformation model fitting"};
  app.require_subcommand(1);

  // --- simulate ---
  auto* simulate = app.add_subcommand("simulate", "generate a simulation dataset");
  CommonOpts sim_opts;
  int sim_dgp = 1;
  Eigen::Index sim_n = 10000;
  add_common(simulate, sim_opts);
  simulate->add_option("--dgp", sim_dgp, "process id 1..14")->required();
  simulate->add_option("--n", sim_n, "sample count");

  // --- expand ---
  auto* expand_cmd = app.add_subcommand("expand", "basis-expand a CSV dataset");
  CommonOpts exp_opts;
  std::string exp_input, exp_columns;
  add_common(expand_cmd, exp_opts);
  expand_cmd->add_option("--input", exp_input, "input CSV")->required();
  expand_cmd->add_option("--columns", exp_columns, "columns (names, indices or ranges)");

  // --- scores ---
  auto* scores_cmd = app.add_subcommand("scores", "leverage scores and probabilities");
  CommonOpts sc_opts;
  std::string sc_input, sc_columns, sc_variant = "exact";
  Eigen::Index sc_sketch_dim = 0;
  add_common(scores_cmd, sc_opts);
  scores_cmd->add_option("--input", sc_input, "input CSV")->required();
  scores_cmd->add_option("--columns", sc_columns, "columns");
  scores_cmd->add_option("--variant", sc_variant,
                         "exact | sketched | ridge | root (ridge/root are "
                         "non-canonical extras)");
  scores_cmd->add_option("--sketch-dim", sc_sketch_dim, "sketch rows (sketched)");

  // --- coreset ---
  auto* coreset_cmd = app.add_subcommand("coreset", "draw a weighted coreset");
  CommonOpts co_opts;
  std::string co_input, co_columns, co_method = "l2-hull";
  Eigen::Index co_k = 100;
  std::size_t co_max_rows = 0;
  add_common(coreset_cmd, co_opts);
  coreset_cmd->add_option("--input", co_input, "input CSV")->required();
  coreset_cmd->add_option("--columns", co_columns, "columns");
  coreset_cmd->add_option("--method", co_method, "uniform | l2-only | l2-hull");
  coreset_cmd->add_option("--k", co_k, "coreset size")->required();
  coreset_cmd->add_option("--max-rows", co_max_rows, "subsample input rows");

  // --- fit ---
  auto* fit_cmd = app.add_subcommand("fit", "fit model parameters");
  CommonOpts fit_opts;
  std::string fit_input, fit_columns, fit_coreset;
  int fit_max_iters = 2000;
  double fit_grad_tol = 1e-6;
  add_common(fit_cmd, fit_opts);
  fit_cmd->add_option("--input", fit_input, "input CSV")->required();
  fit_cmd->add_option("--columns", fit_columns, "columns");
  fit_cmd->add_option("--coreset", fit_coreset, "index/weight CSV (optional)");
  fit_cmd->add_option("--max-iters", fit_max_iters, "optimizer iterations");
  fit_cmd->add_option("--grad-tol", fit_grad_tol, "scaled gradient tolerance");

  // --- bench ---
  auto* bench_cmd = app.add_subcommand("bench", "simulation benchmark sweep");
  CommonOpts bench_opts;
  std::string bench_dgps = "all", bench_ks = "30,100", bench_methods =
      "uniform,l2-only,l2-hull";
  Eigen::Index bench_n = 10000;
  int bench_reps = 10;
  bool bench_zero_timings = false;
  add_common(bench_cmd, bench_opts);
  bench_cmd->add_option("--dgps", bench_dgps, "'all' or comma-separated ids");
  bench_cmd->add_option("--n", bench_n, "samples per DGP");
  bench_cmd->add_option("--k", bench_ks, "comma-separated coreset sizes");
  bench_cmd->add_option("--methods", bench_methods, "comma-separated methods");
  bench_cmd->add_option("--reps", bench_reps, "repetitions");
  bench_cmd->add_flag("--zero-timings", bench_zero_timings,
                      "write 0 for timing columns (byte-stable output)");

  // --- real ---
  auto* real_cmd = app.add_subcommand("real", "benchmark on a real CSV dataset");
  CommonOpts real_opts;
  std::string real_input, real_columns, real_ks = "50,100,200,300",
                          real_methods = "uniform,l2-only,l2-hull";
  std::size_t real_max_rows = 300000;
  int real_reps = 5;
  add_common(real_cmd, real_opts);
  real_cmd->add_option("--input", real_input, "input CSV")->required();
  real_cmd->add_option("--columns", real_columns, "columns");
  real_cmd->add_option("--k", real_ks, "comma-separated coreset sizes");
  real_cmd->add_option("--methods", real_methods, "comma-separated methods");
  real_cmd->add_option("--reps", real_reps, "repetitions");
  real_cmd->add_option("--max-rows", real_max_rows, "subsample input rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success) ? 0 : 1;
  }

  if (simulate->parsed()) {
    check_out_dir(sim_opts.out);
    const mctm::DgpId id = mctm::dgp_from_int(sim_dgp);
    const mctm::Dataset data = mctm::generate({id, sim_n, sim_opts.seed});
    const std::string path = sim_opts.out + "/" + mctm::to_string(id) + ".csv";
    mctm::save_csv(data, path);
    write_config_echo(sim_opts.out, {{"subcommand", "simulate"},
                                     {"dgp", sim_dgp},
                                     {"n", sim_n},
                                     {"seed", sim_opts.seed},
                                     {"output", path}});
    std::cerr << "wrote " << path << "\n";
    return 0;
  }

  if (expand_cmd->parsed()) {
    check_out_dir(exp_opts.out);
    const auto data = load_input(exp_input, exp_columns, 0, exp_opts.seed);
    const auto config = mctm::fit_bounds(data, exp_opts.degree);
    const auto expansion = mctm::expand(data, config);
    std::ofstream f(exp_opts.out + "/expansion.csv");
    f.precision(17);
    const Eigen::Index cols = expansion.A.cols();
    for (Eigen::Index c = 0; c < cols; ++c) f << (c ? "," : "") << "a" << c;
    for (Eigen::Index c = 0; c < cols; ++c) f << ",ap" << c;
    f << "\n";
    for (Eigen::Index i = 0; i < expansion.n(); ++i) {
      for (Eigen::Index c = 0; c < cols; ++c)
        f << (c ? "," : "") << expansion.A(i, c);
      for (Eigen::Index c = 0; c < cols; ++c) f << "," << expansion.Aprime(i, c);
      f << "\n";
    }
    write_config_echo(exp_opts.out, {{"subcommand", "expand"},
                                     {"input", exp_input},
                                     {"degree", exp_opts.degree},
                                     {"clip_count", expansion.clip_count}});
    std::cerr << "wrote " << exp_opts.out << "/expansion.csv\n";
    return 0;
  }

  if (scores_cmd->parsed()) {
    check_out_dir(sc_opts.out);
    const auto data = load_input(sc_input, sc_columns, 0, sc_opts.seed);
    const auto expansion = mctm::expand(data, mctm::fit_bounds(data, sc_opts.degree));
    Eigen::VectorXd u;
    if (sc_variant == "exact") {
      u = mctm::leverage_scores(expansion).u;
    } else if (sc_variant == "sketched") {
      const Eigen::Index dim =
          sc_sketch_dim > 0 ? sc_sketch_dim : 8 * expansion.A.cols();
      u = mctm::sketched_leverage(expansion, dim, sc_opts.seed).u;
    } else if (sc_variant == "ridge") {
      std::cerr << "warning: ridge leverage scores are a non-canonical extra\n";
      u = mctm::ridge_leverage_scores(expansion).u;
    } else if (sc_variant == "root") {
      std::cerr << "warning: root leverage scores are a non-canonical extra\n";
      u = mctm::root_leverage_scores(mctm::leverage_scores(expansion).u);
    } else {
      throw CLI::ValidationError("unknown scores variant: " + sc_variant);
    }
    const auto probs = mctm::sampling_probabilities(u);
    std::ofstream f(sc_opts.out + "/scores.csv");
    f.precision(17);
    f << "index,u,s,p\n";
    for (Eigen::Index i = 0; i < u.size(); ++i)
      f << i << "," << u(i) << "," << probs.s(i) << "," << probs.p(i) << "\n";
    write_config_echo(sc_opts.out, {{"subcommand", "scores"},
                                    {"input", sc_input},
                                    {"variant", sc_variant},
                                    {"degree", sc_opts.degree},
                                    {"seed", sc_opts.seed}});
    std::cerr << "wrote " << sc_opts.out << "/scores.csv\n";
    return 0;
  }

  if (coreset_cmd->parsed()) {
    check_out_dir(co_opts.out);
    const auto data = load_input(co_input, co_columns, co_max_rows, co_opts.seed);
    const auto expansion = mctm::expand(data, mctm::fit_bounds(data, co_opts.degree));
    const auto method = mctm::coreset_method_from_string(co_method);
    mctm::CoresetSample sample;
    switch (method) {
      case mctm::CoresetMethod::kUniform:
        sample = mctm::sample_uniform(expansion.n(), co_k, co_opts.seed);
        break;
      case mctm::CoresetMethod::kL2Only: {
        const auto probs =
            mctm::sampling_probabilities(mctm::leverage_scores(expansion).u);
        sample = mctm::sample_l2(probs, co_k, co_opts.seed);
        break;
      }
      case mctm::CoresetMethod::kL2Hull: {
        const auto probs =
            mctm::sampling_probabilities(mctm::leverage_scores(expansion).u);
        sample = mctm::sample_hybrid(expansion, probs, co_k, co_opts.alpha,
                                     co_opts.epsilon, co_opts.seed);
        break;
      }
    }
    mctm::save_coreset_csv(sample, co_opts.out + "/coreset.csv");
    nlohmann::json echo = mctm::coreset_metadata(sample);
    echo["subcommand"] = "coreset";
    echo["input"] = co_input;
    echo["degree"] = co_opts.degree;
    echo["epsilon"] = co_opts.epsilon;
    write_config_echo(co_opts.out, echo);
    std::cerr << "wrote " << co_opts.out << "/coreset.csv ("
              << sample.indices.size() << " observations)\n";
    return 0;
  }

  if (fit_cmd->parsed()) {
    check_out_dir(fit_opts.out);
    const auto data = load_input(fit_input, fit_columns, 0, fit_opts.seed);
    const auto basis_config = mctm::fit_bounds(data, fit_opts.degree);
    mctm::BasisExpansion expansion = mctm::expand(data, basis_config);
    Eigen::VectorXd weights;
    if (!fit_coreset.empty()) {
      const auto sample = mctm::load_coreset_csv(fit_coreset);
      expansion = expansion.subset(sample.indices);
      weights = sample.weights;
    }
    mctm::FitConfig config;
    config.max_iters = fit_max_iters;
    config.grad_tol = fit_grad_tol;
    config.eta = fit_opts.resolved_eta();
    config.seed = fit_opts.seed;
    const auto result = mctm::fit(expansion, weights, config);
    std::ofstream f(fit_opts.out + "/params.json");
    f << mctm::params_to_json(result.params, basis_config).dump(2) << "\n";
    write_config_echo(fit_opts.out,
                      {{"subcommand", "fit"},
                       {"input", fit_input},
                       {"coreset", fit_coreset},
                       {"degree", fit_opts.degree},
                       {"eta", config.eta},
                       {"seed", fit_opts.seed},
                       {"iterations", result.iterations},
                       {"converged", result.converged},
                       {"nll_total", result.loss.total},
                       {"fit_time_s", result.fit_time_s}});
    std::cerr << "fit: total=" << result.loss.total
              << " iterations=" << result.iterations
              << " converged=" << result.converged << "\n";
    return 0;
  }

  auto parse_ks = [](const std::string& s) {
    std::vector<Eigen::Index> ks;
    for (const auto& tok : split_commas(s)) ks.push_back(std::stoll(tok));
    return ks;
  };
  auto parse_methods = [](const std::string& s) {
    std::vector<mctm::CoresetMethod> ms;
    for (const auto& tok : split_commas(s))
      ms.push_back(mctm::coreset_method_from_string(tok));
    return ms;
  };

  if (bench_cmd->parsed()) {
    check_out_dir(bench_opts.out);
    mctm::BenchConfig config;
    config.dgps = parse_dgps(bench_dgps);
    config.n = bench_n;
    config.ks = parse_ks(bench_ks);
    config.methods = parse_methods(bench_methods);
    config.reps = bench_reps;
    config.seed = bench_opts.seed;
    config.degree = bench_opts.degree;
    config.alpha = bench_opts.alpha;
    config.epsilon = bench_opts.epsilon;
    config.eta = bench_opts.eta;
    config.threads = bench_opts.threads;
    config.zero_timings = bench_zero_timings;
    const auto report = mctm::run_experiment(config);
    mctm::save_report(report, bench_opts.out, config.zero_timings);
    std::cerr << "wrote " << report.rows.size() << " rows to " << bench_opts.out
              << "/rows.csv\n";
    return 0;
  }

  if (real_cmd->parsed()) {
    check_out_dir(real_opts.out);
    const auto data =
        load_input(real_input, real_columns, real_max_rows, real_opts.seed);
    mctm::BenchConfig config;
    config.ks = parse_ks(real_ks);
    config.methods = parse_methods(real_methods);
    config.reps = real_reps;
    config.seed = real_opts.seed;
    config.degree = real_opts.degree;
    config.alpha = real_opts.alpha;
    config.epsilon = real_opts.epsilon;
    config.eta = real_opts.eta;
    config.threads = real_opts.threads;
    const std::string name =
        std::filesystem::path(real_input).stem().string();
    mctm::ExperimentReport report;
    report.config_echo = config.echo();
    report.config_echo["input"] = real_input;
    report.rows = mctm::run_dataset(name, data, config);
    mctm::compute_aggregates(report);
    mctm::save_report(report, real_opts.out);
    std::cerr << "wrote " << report.rows.size() << " rows to " << real_opts.out
              << "/rows.csv\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CLI::Error& e) {
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
