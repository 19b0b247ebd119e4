// Sweep configuration, single cells, rate estimation and the report files.

#include "vbnn/experiment.hpp"

#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace vbnn;
using doctest::Approx;
namespace fs = std::filesystem;

namespace {

ExperimentRecord synthetic(int n, std::uint64_t seed, const std::vector<std::pair<double, double>>& tails,
                           int samples = 1000) {
  ExperimentRecord r;
  r.n = n;
  r.seed = seed;
  r.k_n = 3;
  r.elbo_final = -1.5 * n;
  for (const auto& [eps, mass] : tails)
    r.tail_mass.push_back({eps, mass, std::sqrt(mass * (1 - mass) / samples), samples});
  r.hellinger_avg = 0.25 / n;
  r.l2_error = 1.0 / std::sqrt(n);
  r.sigma_hat = 1.0 + 1.0 / n;
  r.runtime_s = 0.125;
  return r;
}

SweepConfig small_config() {
  SweepConfig c;
  c.n_grid = {50, 100, 200};
  c.seeds = {0, 1};
  c.master_seed = 5;
  c.p = 1;
  c.prior = InverseGammaSigma{1.0, 2.0, 1.0};
  c.teacher = {2, 3.0, 7};
  c.sigma0 = 0.5;
  c.train.iters = 200;
  c.train.mc_samples = 4;
  c.train.convergence_window = 50;
  c.epsilons = {0.05, 0.2};
  c.tail_samples = 200;
  c.quadrature.resolution = 32;
  c.threads = 1;
  return c;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("vbnn_test_" + name);
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST_CASE("config parsing") {
  const SweepConfig defaults;
  CHECK_NOTHROW(defaults.validate());
  const SweepConfig back = sweep_config_from_json(to_json(defaults));
  CHECK(to_json(back) == to_json(defaults));
  const SweepConfig small = small_config();
  CHECK(to_json(sweep_config_from_json(to_json(small))) == to_json(small));

  nlohmann::json doc = to_json(defaults);
  doc["learning_rate"] = 0.1;
  CHECK_THROWS_AS(sweep_config_from_json(doc), ConfigError);
  doc = to_json(defaults);
  doc.erase("version");
  CHECK_THROWS_AS(sweep_config_from_json(doc), ConfigError);
  doc = to_json(defaults);
  doc["version"] = 2;
  CHECK_THROWS_AS(sweep_config_from_json(doc), ConfigError);
  doc = to_json(defaults);
  doc["n_grid"] = {100, 200};
  CHECK_THROWS_AS(sweep_config_from_json(doc), ConfigError);
  doc = to_json(defaults);
  doc["prior"] = {{"variant", "laplace"}};
  CHECK_THROWS_AS(sweep_config_from_json(doc), ConfigError);
  doc = to_json(defaults);
  doc["train"]["iters"] = 0;
  CHECK_THROWS_AS(sweep_config_from_json(doc), ConfigError);

  for (const PriorSpec& p : {PriorSpec(FixedGaussian{2.0}), PriorSpec(ScaledGaussian{0.5, 0.3}),
                             PriorSpec(InverseGammaSigma{1.0, 2.0, 3.0}), PriorSpec(RhoGaussian{1.5, 0.7})})
    CHECK(to_json(prior_from_json(to_json(p))) == to_json(p));
}

TEST_CASE("estimate_delta") {
  SUBCASE("exact power laws") {
    std::vector<ExperimentRecord> recs;
    for (int n : {100, 1000, 10000})
      for (std::uint64_t s : {0u, 1u, 2u}) recs.push_back(synthetic(n, s, {{0.5, 1.0 / n}, {1.0, 0.25}}));
    const RateEstimate one = estimate_delta(recs, 0.5);
    REQUIRE(one.delta_hat);
    CHECK(*one.delta_hat == Approx(1.0).epsilon(1e-12));
    CHECK(one.r_squared == Approx(1.0).epsilon(1e-12));
    CHECK(one.n_min == 100);
    CHECK(one.n_max == 10000);
    CHECK(one.points == 3);
    const RateEstimate flat = estimate_delta(recs, 1.0);
    CHECK(*flat.delta_hat == Approx(0.0).scale(1e-12));
  }
  SUBCASE("noisy power law") {
    Rng rng(3);
    std::vector<ExperimentRecord> recs;
    for (int n : {200, 500, 1000, 2000, 5000})
      for (std::uint64_t s = 0; s < 5; ++s)
        recs.push_back(synthetic(n, s, {{0.1, 5.0 * std::pow(n, -0.4) * (1.0 + 0.01 * rng.normal())}}));
    const double d = *estimate_delta(recs, 0.1).delta_hat;
    CHECK(d >= 0.35);
    CHECK(d <= 0.45);
  }
  SUBCASE("zero medians are censored at 1/(2S)") {
    std::vector<ExperimentRecord> recs;
    for (int n : {100, 1000, 10000}) recs.push_back(synthetic(n, 0, {{0.5, n == 10000 ? 0.0 : 10.0 / n}}, 500));
    const RateEstimate r = estimate_delta(recs, 0.5);
    CHECK(r.censored == 1);
    CHECK_FALSE(r.consistent_beyond_resolution);
    std::vector<ExperimentRecord> zeros;
    for (int n : {100, 1000, 10000}) zeros.push_back(synthetic(n, 0, {{0.5, 0.0}}, 500));
    const RateEstimate z = estimate_delta(zeros, 0.5);
    CHECK_FALSE(z.delta_hat);
    CHECK(z.consistent_beyond_resolution);
    CHECK(z.censored == 3);
  }
  SUBCASE("too few n and failed records") {
    std::vector<ExperimentRecord> recs = {synthetic(100, 0, {{0.5, 0.1}}), synthetic(200, 0, {{0.5, 0.05}})};
    CHECK_THROWS_AS(estimate_delta(recs, 0.5), std::invalid_argument);
    ExperimentRecord bad = synthetic(400, 0, {{0.5, 0.01}});
    bad.failed = true;
    recs.push_back(bad);
    CHECK_THROWS_AS(estimate_delta(recs, 0.5), std::invalid_argument);
  }
}

TEST_CASE("records CSV round trip") {
  std::vector<ExperimentRecord> recs = {synthetic(100, 0, {{0.05, 0.3}, {0.5, 0.0}}, 400),
                                        synthetic(200, 3, {{0.05, 0.1}, {0.5, 0.0}}, 400)};
  recs[0].elbo_final = -123.45678901234567;
  std::stringstream ss;
  write_records_csv(ss, recs);
  std::string header;
  std::getline(std::istringstream(ss.str()), header);
  CHECK(header == kRecordsCsvHeader);
  const std::vector<ExperimentRecord> back = read_records_csv(ss, 400);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].n == recs[i].n);
    CHECK(back[i].seed == recs[i].seed);
    CHECK(back[i].elbo_final == recs[i].elbo_final);
    CHECK(back[i].l2_error == recs[i].l2_error);
    REQUIRE(back[i].tail_mass.size() == 2);
    CHECK(back[i].tail_mass[0].estimate == recs[i].tail_mass[0].estimate);
    CHECK(back[i].tail_mass[1].samples == 400);
  }

  std::vector<ExperimentRecord> plain = {synthetic(100, 0, {})};
  std::stringstream ps;
  write_records_csv(ps, plain);
  CHECK(ps.str().rfind("n,seed,k_n,elbo_final,hellinger_avg,l2_error,sigma_hat,runtime_s\n", 0) == 0);
  CHECK(read_records_csv(ps).at(0).sigma_hat == plain[0].sigma_hat);

  ExperimentRecord failed = synthetic(300, 1, {{0.05, 0.2}, {0.5, 0.0}});
  failed.failed = true;
  recs.push_back(failed);
  std::stringstream fs_;
  write_records_csv(fs_, recs);
  CHECK(read_records_csv(fs_).size() == 2);
}

TEST_CASE("summary JSON") {
  std::vector<ExperimentRecord> recs;
  for (int n : {100, 1000, 10000})
    for (std::uint64_t s : {0u, 1u}) recs.push_back(synthetic(n, s, {{0.05, 10.0 / n}, {0.5, 0.0}}));
  ExperimentRecord failed = synthetic(1000, 9, {});
  failed.failed = true;
  failed.failure = "NumericalError at iteration 3 (mean[0])";
  recs.push_back(failed);
  const std::vector<double> eps = {0.05, 0.5};
  std::vector<RateEstimate> rates = {estimate_delta(recs, 0.05), estimate_delta(recs, 0.5)};
  const nlohmann::json doc = summary_json(recs, rates, eps);
  CHECK(validate_summary_json(doc).empty());
  CHECK(doc["records"] == 7);
  CHECK(doc["failures"].size() == 1);
  CHECK(doc["failures"][0]["reason"] == failed.failure);
  CHECK(doc["lemma_suite"].is_null());
  CHECK(doc["by_n"][0]["median_tail_mass"][1].is_string());
  CHECK(doc["by_n"][1]["failed"] == 1);
  CHECK(doc["rates"][1]["delta_hat"].is_null());

  LemmaReport lr;
  lr.lemma_id = "x";
  lr.finish();
  const nlohmann::json with_lemmas = summary_json(recs, rates, eps, std::vector<LemmaReport>{lr});
  CHECK(validate_summary_json(with_lemmas).empty());
  CHECK(with_lemmas["lemma_suite"]["pass"] == true);

  nlohmann::json broken = doc;
  broken["by_n"][0]["median_tail_mass"][1] = 0.0;
  CHECK_FALSE(validate_summary_json(broken).empty());
  broken = doc;
  broken.erase("rates");
  CHECK_FALSE(validate_summary_json(broken).empty());
}

TEST_CASE("output directory") {
  const fs::path d = scratch_dir("outdir") / "nested";
  CHECK_NOTHROW(prepare_output_dir(d));
  CHECK(fs::is_directory(d));
  const fs::path file = d / "plain_file";
  std::ofstream(file) << "x";
  CHECK_THROWS_AS(prepare_output_dir(file), ConfigError);

  std::vector<ExperimentRecord> recs;
  for (int n : {100, 1000, 10000}) recs.push_back(synthetic(n, 0, {{0.05, 10.0 / n}}));
  emit_report(recs, {estimate_delta(recs, 0.05)}, d);
  for (const char* f : {"records.csv", "summary.json", "tail_mass_eps_0.05.tsv", "median_l2_error.tsv",
                        "median_sigma_hat.tsv", "median_hellinger_avg.tsv"})
    CHECK(fs::exists(d / f));
  std::ifstream in(d / "summary.json");
  CHECK(validate_summary_json(nlohmann::json::parse(in)).empty());
  fs::remove_all(d.parent_path());
}

TEST_CASE("single cell") {
  const SweepConfig c = small_config();
  const ExperimentRecord a = run_single(100, 1, c);
  const ExperimentRecord b = run_single(100, 1, c);
  CHECK_FALSE(a.failed);
  CHECK(a.k_n == cell_dims(c, 100).k);
  CHECK(a.elbo_final == b.elbo_final);
  CHECK(a.l2_error == b.l2_error);
  CHECK(a.sigma_hat == b.sigma_hat);
  REQUIRE(a.tail_mass.size() == 2);
  CHECK(a.tail_mass[0].estimate == b.tail_mass[0].estimate);
  CHECK(a.tail_mass[1].estimate <= a.tail_mass[0].estimate);
  CHECK(run_single(100, 2, c).elbo_final != a.elbo_final);
  CHECK(cell_dataset(c, 100, 1).ys == cell_dataset(c, 100, 1).ys);
  CHECK(cell_seed(c, 100, 1) != cell_seed(c, 1, 100));

  SweepConfig wide = c;
  wide.epsilons = {2.0};
  CHECK(run_single(50, 0, wide).tail_mass[0].estimate == 0.0);
}

TEST_CASE("default-size cell finishes within a minute") {
  const SweepConfig c;
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentRecord r = run_single(200, 0, c);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK_FALSE(r.failed);
  CHECK(secs < 60.0);
  CHECK(r.sigma_hat == Approx(c.sigma0).epsilon(0.3));
}

TEST_CASE("sweep is independent of the thread count") {
  SweepConfig one = small_config();
  SweepConfig two = one;
  two.threads = 2;
  const SweepResult a = run_sweep(one);
  const SweepResult b = run_sweep(two);
  REQUIRE(a.records.size() == 6);
  REQUIRE(b.records.size() == 6);
  CHECK(a.failures == 0);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].n == b.records[i].n);
    CHECK(a.records[i].seed == b.records[i].seed);
    CHECK(a.records[i].elbo_final == b.records[i].elbo_final);
    CHECK(a.records[i].tail_mass[0].estimate == b.records[i].tail_mass[0].estimate);
  }
  CHECK(a.by_n.size() == 3);
  CHECK(a.estimates.size() == 2);
}
