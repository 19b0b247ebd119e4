#pragma once

#include "vbnn/divergence.hpp"
#include "vbnn/elbo.hpp"
#include "vbnn/lemmas.hpp"
#include "vbnn/priors.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vbnn {

/// Bad configuration or usage; the CLI maps it to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kConfigVersion = 1;

struct TeacherSpec {
  int k_star = 3;
  double scale = 5.0;
  std::uint64_t seed = 7;
};

struct QuadratureSettings {
  QuadratureRule::Kind kind = QuadratureRule::Kind::TensorGaussLegendre;
  /// Nodes per axis (tensor) or point count (Sobol); 0 selects default_for(p).
  int resolution = 0;

  QuadratureRule build(int p) const;
};

/// Optimizer settings used by the sweeps unless a config overrides them.
TrainConfig default_sweep_train();

struct SweepConfig {
  std::vector<int> n_grid = {200, 500, 1000, 2000, 5000};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::uint64_t master_seed = 20240;
  int p = 2;
  SieveSpec sieve{0.25, 0.8};
  PriorSpec prior = FixedGaussian{1.0};
  /// "teacher" or a named analytic truth ("zero", "sine", "product", "additive").
  std::string truth = "teacher";
  TeacherSpec teacher;
  double sigma0 = 1.0;
  TrainConfig train = default_sweep_train();
  std::vector<double> epsilons = {0.05, 0.1, 0.2, 0.5, 1.0};
  int tail_samples = 1000;
  QuadratureSettings quadrature;
  std::string output_dir = "vbnn_out";
  /// Worker threads for the sweep; 0 uses the hardware concurrency.
  int threads = 0;
  /// Write each fitted posterior under output_dir/checkpoints.
  bool save_checkpoints = false;

  /// Throws ConfigError.
  void validate() const;
  Truth make_truth() const;
};

/// Parses a versioned config document; unknown keys and a missing or wrong
/// `version` are ConfigErrors. Absent keys keep their defaults.
SweepConfig sweep_config_from_json(const nlohmann::json& doc);
SweepConfig load_sweep_config(const std::filesystem::path& path);
nlohmann::json to_json(const SweepConfig& config);

nlohmann::json to_json(const PriorSpec& prior);
PriorSpec prior_from_json(const nlohmann::json& doc);

struct ExperimentRecord {
  int n = 0;
  std::uint64_t seed = 0;
  int k_n = 0;
  std::string checkpoint_path;
  double elbo_final = 0.0;
  std::vector<TailMassEstimate> tail_mass;
  /// d_H between the plug-in VB density and the truth.
  double hellinger_avg = 0.0;
  double l2_error = 0.0;
  double sigma_hat = 0.0;
  double runtime_s = 0.0;
  bool converged = false;
  int iterations = 0;
  bool failed = false;
  std::string failure;
};

/// Seed of the (n, seed) cell; every stream of the cell derives from it.
std::uint64_t cell_seed(const SweepConfig& config, int n, std::uint64_t seed);

/// The dataset a cell fits, identical across simulate/fit/sweep.
RegressionDataset cell_dataset(const SweepConfig& config, int n, std::uint64_t seed);

/// Model dimensions of a cell: p from the config, k_n from the sieve.
ModelDims cell_dims(const SweepConfig& config, int n);

/// Training settings of a cell, with the cell's own optimizer seed.
TrainConfig cell_train(const SweepConfig& config, int n, std::uint64_t seed);

/// Evaluation of a fitted posterior at the cell's settings.
ExperimentRecord evaluate_posterior(const MeanFieldPosterior& q, const SweepConfig& config, int n,
                                    std::uint64_t seed, const QuadratureRule& rule);

/// simulate -> fit -> tail mass, L2 error, sigma-hat and plug-in Hellinger.
/// A NumericalError during training yields a failed record.
ExperimentRecord run_single(int n, std::uint64_t seed, const SweepConfig& config);
ExperimentRecord run_single(int n, std::uint64_t seed, const SweepConfig& config,
                            const QuadratureRule& rule);

struct RateEstimate {
  double epsilon = 0.0;
  /// -slope of log median tail mass against log n; absent when every median is zero.
  std::optional<double> delta_hat;
  double r_squared = 0.0;
  int n_min = 0;
  int n_max = 0;
  int points = 0;
  /// Medians of exactly zero, entered as 1/(2S).
  int censored = 0;
  bool consistent_beyond_resolution = false;
};

/// Median over seeds per n, then least squares on the log-log scale.
/// Needs at least 3 distinct n among successful records.
RateEstimate estimate_delta(const std::vector<ExperimentRecord>& records, double epsilon);

/// Per-n medians over successful records.
struct NSummary {
  int n = 0;
  int records = 0;
  int failed = 0;
  std::vector<double> tail_mass;  // one per epsilon
  double l2_error = 0.0;
  double sigma_hat = 0.0;
  double hellinger_avg = 0.0;
  double elbo_final = 0.0;
};
std::vector<NSummary> summarize_by_n(const std::vector<ExperimentRecord>& records,
                                     const std::vector<double>& epsilons);

struct SweepResult {
  std::vector<ExperimentRecord> records;  // sorted by (n, seed)
  std::vector<RateEstimate> estimates;    // one per epsilon
  std::vector<NSummary> by_n;
  int failures = 0;
};

/// Runs every (n, seed) cell on a work pool and aggregates.
SweepResult run_sweep(const SweepConfig& config);

/// Creates `outdir` if needed and checks it is writable. Throws ConfigError.
void prepare_output_dir(const std::filesystem::path& outdir);

inline constexpr const char* kRecordsCsvHeader =
    "n,seed,k_n,elbo_final,eps,tail_mass,tail_se,hellinger_avg,l2_error,sigma_hat,runtime_s";

/// One row per (record, epsilon); without epsilons the eps columns are dropped.
/// Failed records are not written.
void write_records_csv(std::ostream& out, const std::vector<ExperimentRecord>& records);
/// Inverse of write_records_csv. The CSV does not carry the draw count, so
/// `tail_samples` fills TailMassEstimate::samples.
std::vector<ExperimentRecord> read_records_csv(std::istream& in, int tail_samples = 0);

nlohmann::json summary_json(const std::vector<ExperimentRecord>& records,
                            const std::vector<RateEstimate>& estimates,
                            const std::vector<double>& epsilons,
                            const std::optional<std::vector<LemmaReport>>& lemmas = std::nullopt);

/// Empty when `doc` matches the summary schema, otherwise the first problem.
std::string validate_summary_json(const nlohmann::json& doc);

/// Writes records.csv, summary.json and the plot series (*.tsv) into outdir.
void emit_report(const std::vector<ExperimentRecord>& records,
                 const std::vector<RateEstimate>& estimates,
                 const std::filesystem::path& outdir,
                 const std::optional<std::vector<LemmaReport>>& lemmas = std::nullopt);

}  // namespace vbnn
