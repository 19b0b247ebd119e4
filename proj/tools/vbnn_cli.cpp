// Command-line front end: simulate, fit, metrics, sweep, verify, report.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.

#include "vbnn/experiment.hpp"
#include "vbnn/lemmas.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace vbnn;
using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config (defaults apply when omitted)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", opts.seed, "Override the master seed");
}

SweepConfig load(const CommonOptions& opts) {
  SweepConfig config = opts.config_path.empty() ? SweepConfig{} : load_sweep_config(opts.config_path);
  if (opts.seed) config.master_seed = *opts.seed;
  return config;
}

// Writes to `path`, or stdout when it is empty or "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!(out << text)) throw ConfigError("cannot write " + path);
}

json record_json(const ExperimentRecord& r) {
  json tails = json::array();
  for (const auto& t : r.tail_mass)
    tails.push_back({{"eps", t.epsilon},
                     {"tail_mass", t.estimate},
                     {"tail_se", t.standard_error},
                     {"samples", t.samples}});
  return {{"n", r.n},
          {"seed", r.seed},
          {"k_n", r.k_n},
          {"elbo_final", r.elbo_final},
          {"tail_mass", tails},
          {"hellinger_avg", r.hellinger_avg},
          {"l2_error", r.l2_error},
          {"sigma_hat", r.sigma_hat},
          {"runtime_s", r.runtime_s},
          {"converged", r.converged},
          {"iterations", r.iterations},
          {"failed", r.failed},
          {"failure", r.failure}};
}

std::vector<LemmaReport> run_lemmas(std::uint64_t seed) {
  LemmaSuiteConfig lc;
  lc.seed = seed;
  return run_lemma_suite(lc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field variational inference for one-hidden-layer networks"};
  app.require_subcommand(1);

  CommonOptions sim_opts, fit_opts, met_opts, sweep_opts, ver_opts, rep_opts;
  int n = 0;
  std::uint64_t replicate = 0;
  std::string out_path, posterior_path, trace_path, in_dir;
  int threads = -1;
  bool strict = false;

  auto* sim = app.add_subcommand("simulate", "Write the dataset of one (n, replicate) cell as CSV");
  add_common(sim, sim_opts);
  sim->add_option("--n", n, "Sample size")->required()->check(CLI::PositiveNumber);
  sim->add_option("--replicate", replicate, "Replicate seed of the cell");
  sim->add_option("--out", out_path, "Output CSV (stdout when omitted)");

  auto* fit_cmd = app.add_subcommand("fit", "Fit one cell and write the posterior JSON");
  add_common(fit_cmd, fit_opts);
  fit_cmd->add_option("--n", n, "Sample size")->required()->check(CLI::PositiveNumber);
  fit_cmd->add_option("--replicate", replicate, "Replicate seed of the cell");
  fit_cmd->add_option("--out", out_path, "Posterior JSON (stdout when omitted)");
  fit_cmd->add_option("--trace", trace_path, "Optional TSV of the ELBO trace");

  auto* met = app.add_subcommand("metrics", "Evaluate a fitted posterior against the cell's truth");
  add_common(met, met_opts);
  met->add_option("--posterior", posterior_path, "Posterior JSON from `fit`")
      ->required()
      ->check(CLI::ExistingFile);
  met->add_option("--n", n, "Sample size the posterior was fitted at")
      ->required()
      ->check(CLI::PositiveNumber);
  met->add_option("--replicate", replicate, "Replicate seed of the cell");

  auto* sweep = app.add_subcommand("sweep", "Run every (n, seed) cell and write the report");
  add_common(sweep, sweep_opts);
  sweep->add_option("--out", out_path, "Output directory (overrides the config)");
  sweep->add_option("--threads", threads, "Worker threads (overrides the config)");

  auto* verify = app.add_subcommand("verify", "Run the lemma oracle suite");
  add_common(verify, ver_opts);
  verify->add_option("--out", out_path, "Write the reports JSON here");
  verify->add_flag("--strict", strict, "Exit 2 when any check fails");

  auto* report = app.add_subcommand("report", "Rebuild summary and plot data from records.csv");
  add_common(report, rep_opts);
  report->add_option("--in", in_dir, "Directory holding records.csv (defaults to output_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*sim) {
      const SweepConfig config = load(sim_opts);
      const RegressionDataset data = cell_dataset(config, n, replicate);
      std::string text;
      for (int h = 0; h < data.p(); ++h) text += "x" + std::to_string(h + 1) + ",";
      text += "y\n";
      char buf[32];
      for (Eigen::Index i = 0; i < data.size(); ++i) {
        for (int h = 0; h < data.p(); ++h) {
          std::snprintf(buf, sizeof buf, "%.17g,", data.xs(i, h));
          text += buf;
        }
        std::snprintf(buf, sizeof buf, "%.17g\n", data.ys[i]);
        text += buf;
      }
      emit(out_path, text);
    } else if (*fit_cmd) {
      const SweepConfig config = load(fit_opts);
      const FitResult result = fit(config.prior, cell_dataset(config, n, replicate),
                                   cell_dims(config, n), cell_train(config, n, replicate));
      emit(out_path, to_json(result.posterior).dump(2) + "\n");
      if (!trace_path.empty()) {
        std::string text = "iteration\telbo_smoothed\telbo\tgrad_norm\n";
        for (std::size_t i = 0; i < result.elbo_trace.size(); ++i)
          text += std::to_string(i) + '\t' + std::to_string(result.elbo_trace[i]) + '\t' +
                  std::to_string(result.raw_elbo_trace[i]) + '\t' +
                  std::to_string(result.grad_norm_trace[i]) + '\n';
        emit(trace_path, text);
      }
      std::cerr << "iterations " << result.iterations << ", converged "
                << (result.converged ? "yes" : "no") << ", final ELBO "
                << (result.elbo_trace.empty() ? 0.0 : result.elbo_trace.back()) << '\n';
    } else if (*met) {
      const SweepConfig config = load(met_opts);
      std::ifstream in(posterior_path);
      const MeanFieldPosterior q = posterior_from_json(json::parse(in));
      if (q.dims.p != config.p) throw ConfigError("posterior p does not match the config");
      const ExperimentRecord r =
          evaluate_posterior(q, config, n, replicate, config.quadrature.build(config.p));
      json doc = record_json(r);
      if (config.truth == "teacher" && config.teacher.k_star <= q.dims.k) {
        const Network teacher = make_teacher(config.teacher.k_star, config.p, config.teacher.scale, config.teacher.seed);
        doc["kl_to_analysis_q"] = kl_to_analysis_family(q, pad_hidden_nodes(teacher, q.dims.k).flatten(), 1.0, n);
      }
      std::cout << doc.dump(2) << '\n';
    } else if (*sweep) {
      SweepConfig config = load(sweep_opts);
      if (!out_path.empty()) config.output_dir = out_path;
      if (threads >= 0) config.threads = threads;
      config.validate();
      prepare_output_dir(config.output_dir);
      emit((fs::path(config.output_dir) / "config.json").string(), to_json(config).dump(2) + "\n");
      const SweepResult result = run_sweep(config);
      emit_report(result.records, result.estimates, config.output_dir);
      for (const auto& r : result.records)
        if (r.failed) std::cerr << "failed cell n=" << r.n << " seed=" << r.seed << ": " << r.failure << '\n';
      std::cerr << result.records.size() << " cells, " << result.failures << " failed; report in "
                << config.output_dir << '\n';
      if (result.failures > 0) return kExitNumerical;
    } else if (*verify) {
      const SweepConfig config = load(ver_opts);
      const auto reports = run_lemmas(config.master_seed);
      json doc = json::array();
      bool pass = true;
      for (const auto& r : reports) {
        doc.push_back(to_json(r));
        pass = pass && r.pass;
        std::cout << (r.pass ? "PASS " : "FAIL ") << r.lemma_id << "  max_violation "
                  << r.max_violation << "  " << r.details << '\n';
      }
      if (!out_path.empty()) emit(out_path, doc.dump(2) + "\n");
      if (strict && !pass) return kExitNumerical;
    } else if (*report) {
      const SweepConfig config = load(rep_opts);
      const fs::path dir = in_dir.empty() ? fs::path(config.output_dir) : fs::path(in_dir);
      std::ifstream in(dir / "records.csv");
      if (!in) throw ConfigError("cannot open " + (dir / "records.csv").string());
      const auto records = read_records_csv(in, config.tail_samples);
      std::vector<RateEstimate> estimates;
      if (!records.empty())
        for (const auto& t : records.front().tail_mass)
          estimates.push_back(estimate_delta(records, t.epsilon));
      std::optional<std::vector<LemmaReport>> lemmas;
      if (fs::exists(dir / "lemmas.json")) {
        std::ifstream lin(dir / "lemmas.json");
        std::vector<LemmaReport> parsed;
        for (const auto& j : json::parse(lin)) parsed.push_back(lemma_report_from_json(j));
        lemmas = std::move(parsed);
      }
      emit_report(records, estimates, dir, lemmas);
      std::cerr << "report rebuilt in " << dir.string() << '\n';
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure at iteration " << e.iteration() << " (" << e.parameter()
              << "): " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}
