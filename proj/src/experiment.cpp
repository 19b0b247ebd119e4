#include "vbnn/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace vbnn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Throws ConfigError for any key of `obj` outside `allowed`.
void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : obj.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* k) { return item.key() == k; });
    if (!known) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

double require(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
  double v = 0.0;
  read(obj, key, v, where);
  return v;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

double median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

const TailMassEstimate* find_eps(const ExperimentRecord& r, double eps) {
  for (const auto& t : r.tail_mass)
    if (std::abs(t.epsilon - eps) <= 1e-12 * std::max(1.0, std::abs(eps))) return &t;
  return nullptr;
}

// Smallest draw count among successful records at each n.
std::map<int, int> samples_by_n(const std::vector<ExperimentRecord>& records) {
  std::map<int, int> out;
  for (const auto& r : records) {
    if (r.failed || r.tail_mass.empty()) continue;
    const int s = r.tail_mass.front().samples;
    auto [it, inserted] = out.emplace(r.n, s);
    if (!inserted) it->second = std::min(it->second, s);
  }
  return out;
}

std::vector<double> record_epsilons(const std::vector<ExperimentRecord>& records) {
  for (const auto& r : records) {
    if (r.failed) continue;
    std::vector<double> eps;
    for (const auto& t : r.tail_mass) eps.push_back(t.epsilon);
    return eps;
  }
  return {};
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw std::runtime_error("records CSV: bad number '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size())
    throw std::runtime_error("records CSV: bad integer '" + s + "'");
  return v;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

QuadratureRule QuadratureSettings::build(int p) const {
  if (kind == QuadratureRule::Kind::Sobol)
    return QuadratureRule::sobol(p, resolution > 0 ? resolution : 1 << 16);
  if (resolution == 0) return QuadratureRule::default_for(p);
  return QuadratureRule::tensor_gauss_legendre(p, resolution);
}

TrainConfig default_sweep_train() {
  TrainConfig t;
  t.iters = 2000;
  t.mc_samples = 8;
  t.step_size = 0.05;
  t.step_size_final = 0.002;
  t.convergence_window = 200;
  t.convergence_tol = 1e-6;
  return t;
}

void SweepConfig::validate() const {
  if (n_grid.size() < 3) throw ConfigError("config: n_grid needs at least 3 values");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] < 1) throw ConfigError("config: n_grid values must be >= 1");
    if (i > 0 && n_grid[i] <= n_grid[i - 1])
      throw ConfigError("config: n_grid must be strictly increasing");
  }
  if (seeds.empty()) throw ConfigError("config: seeds must be non-empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ConfigError("config: seeds must be distinct");
  if (p < 1) throw ConfigError("config: p must be >= 1");
  if (!(sigma0 > 0.0)) throw ConfigError("config: sigma0 must be positive");
  if (tail_samples < 100) throw ConfigError("config: tail_samples must be >= 100");
  if (threads < 0) throw ConfigError("config: threads must be >= 0");
  for (double e : epsilons)
    if (!(e > 0.0)) throw ConfigError("config: epsilons must be positive");
  if (teacher.k_star < 1) throw ConfigError("config: teacher.k_star must be >= 1");
  if (!(teacher.scale >= 0.0)) throw ConfigError("config: teacher.scale must be >= 0");
  if (quadrature.resolution < 0) throw ConfigError("config: quadrature.resolution must be >= 0");
  if (quadrature.kind == QuadratureRule::Kind::TensorGaussLegendre && p > 3 &&
      quadrature.resolution > 0)
    throw ConfigError("config: the tensor rule supports p <= 3");
  try {
    vbnn::validate(prior);
    sieve.validate(scale_kind(prior));
    train.validate();
    (void)make_truth();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

Truth SweepConfig::make_truth() const {
  if (truth == "teacher") return Truth(make_teacher(teacher.k_star, p, teacher.scale, teacher.seed));
  return Truth::named(truth, p);
}

json to_json(const PriorSpec& prior) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, FixedGaussian>)
          return {{"variant", "fixed_gaussian"}, {"zeta", s.zeta}};
        else if constexpr (std::is_same_v<T, ScaledGaussian>)
          return {{"variant", "scaled_gaussian"}, {"zeta", s.zeta}, {"u", s.u}};
        else if constexpr (std::is_same_v<T, InverseGammaSigma>)
          return {{"variant", "inverse_gamma"}, {"zeta", s.zeta}, {"alpha", s.alpha},
                  {"lambda", s.lambda}};
        else
          return {{"variant", "rho_gaussian"}, {"zeta", s.zeta}, {"eta", s.eta}};
      },
      prior);
}

PriorSpec prior_from_json(const json& doc) {
  const std::string where = "prior";
  if (!doc.is_object() || !doc.contains("variant"))
    throw ConfigError("prior: expected an object with a 'variant'");
  std::string variant;
  read(doc, "variant", variant, where);
  PriorSpec out;
  if (variant == "fixed_gaussian") {
    reject_unknown(doc, {"variant", "zeta"}, where);
    out = FixedGaussian{require(doc, "zeta", where)};
  } else if (variant == "scaled_gaussian") {
    reject_unknown(doc, {"variant", "zeta", "u"}, where);
    out = ScaledGaussian{require(doc, "zeta", where), require(doc, "u", where)};
  } else if (variant == "inverse_gamma") {
    reject_unknown(doc, {"variant", "zeta", "alpha", "lambda"}, where);
    out = InverseGammaSigma{require(doc, "zeta", where), require(doc, "alpha", where),
                            require(doc, "lambda", where)};
  } else if (variant == "rho_gaussian") {
    reject_unknown(doc, {"variant", "zeta", "eta"}, where);
    out = RhoGaussian{require(doc, "zeta", where), require(doc, "eta", where)};
  } else {
    throw ConfigError("prior: unknown variant '" + variant + "'");
  }
  try {
    vbnn::validate(out);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return out;
}

SweepConfig sweep_config_from_json(const json& doc) {
  const std::string where = "config";
  reject_unknown(doc,
                 {"version", "n_grid", "seeds", "master_seed", "p", "sieve", "prior", "truth",
                  "teacher", "sigma0", "train", "epsilons", "tail_samples", "quadrature",
                  "output_dir", "threads", "save_checkpoints"},
                 where);
  if (!doc.contains("version")) throw ConfigError("config: missing 'version'");
  int version = 0;
  read(doc, "version", version, where);
  if (version != kConfigVersion)
    throw ConfigError("config: unsupported version " + std::to_string(version));

  SweepConfig c;
  read(doc, "n_grid", c.n_grid, where);
  read(doc, "seeds", c.seeds, where);
  read(doc, "master_seed", c.master_seed, where);
  read(doc, "p", c.p, where);
  read(doc, "truth", c.truth, where);
  read(doc, "sigma0", c.sigma0, where);
  read(doc, "epsilons", c.epsilons, where);
  read(doc, "tail_samples", c.tail_samples, where);
  read(doc, "output_dir", c.output_dir, where);
  read(doc, "threads", c.threads, where);
  read(doc, "save_checkpoints", c.save_checkpoints, where);
  if (doc.contains("sieve")) {
    const json& s = doc["sieve"];
    reject_unknown(s, {"a", "b"}, "sieve");
    read(s, "a", c.sieve.a, "sieve");
    read(s, "b", c.sieve.b, "sieve");
  }
  if (doc.contains("prior")) c.prior = prior_from_json(doc["prior"]);
  if (doc.contains("teacher")) {
    const json& t = doc["teacher"];
    reject_unknown(t, {"k_star", "scale", "seed"}, "teacher");
    read(t, "k_star", c.teacher.k_star, "teacher");
    read(t, "scale", c.teacher.scale, "teacher");
    read(t, "seed", c.teacher.seed, "teacher");
  }
  if (doc.contains("train")) {
    const json& t = doc["train"];
    const std::string tw = "train";
    reject_unknown(t,
                   {"iters", "mc_samples", "step_size", "step_size_final", "adam_beta1",
                    "adam_beta2", "adam_eps", "convergence_window", "convergence_tol",
                    "likelihood_weight", "batch_size"},
                   tw);
    read(t, "iters", c.train.iters, tw);
    read(t, "mc_samples", c.train.mc_samples, tw);
    read(t, "step_size", c.train.step_size, tw);
    read(t, "step_size_final", c.train.step_size_final, tw);
    read(t, "adam_beta1", c.train.adam_beta1, tw);
    read(t, "adam_beta2", c.train.adam_beta2, tw);
    read(t, "adam_eps", c.train.adam_eps, tw);
    read(t, "convergence_window", c.train.convergence_window, tw);
    read(t, "convergence_tol", c.train.convergence_tol, tw);
    read(t, "likelihood_weight", c.train.likelihood_weight, tw);
    read(t, "batch_size", c.train.batch_size, tw);
  }
  if (doc.contains("quadrature")) {
    const json& q = doc["quadrature"];
    reject_unknown(q, {"kind", "resolution"}, "quadrature");
    std::string kind = "tensor";
    read(q, "kind", kind, "quadrature");
    if (kind == "tensor")
      c.quadrature.kind = QuadratureRule::Kind::TensorGaussLegendre;
    else if (kind == "sobol")
      c.quadrature.kind = QuadratureRule::Kind::Sobol;
    else
      throw ConfigError("quadrature: kind must be 'tensor' or 'sobol'");
    read(q, "resolution", c.quadrature.resolution, "quadrature");
  }
  c.validate();
  return c;
}

SweepConfig load_sweep_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return sweep_config_from_json(doc);
}

json to_json(const SweepConfig& c) {
  const TrainConfig& t = c.train;
  return {
      {"version", kConfigVersion},
      {"n_grid", c.n_grid},
      {"seeds", c.seeds},
      {"master_seed", c.master_seed},
      {"p", c.p},
      {"sieve", {{"a", c.sieve.a}, {"b", c.sieve.b}}},
      {"prior", to_json(c.prior)},
      {"truth", c.truth},
      {"teacher",
       {{"k_star", c.teacher.k_star}, {"scale", c.teacher.scale}, {"seed", c.teacher.seed}}},
      {"sigma0", c.sigma0},
      {"train",
       {{"iters", t.iters},
        {"mc_samples", t.mc_samples},
        {"step_size", t.step_size},
        {"step_size_final", t.step_size_final},
        {"adam_beta1", t.adam_beta1},
        {"adam_beta2", t.adam_beta2},
        {"adam_eps", t.adam_eps},
        {"convergence_window", t.convergence_window},
        {"convergence_tol", t.convergence_tol},
        {"likelihood_weight", t.likelihood_weight},
        {"batch_size", t.batch_size}}},
      {"epsilons", c.epsilons},
      {"tail_samples", c.tail_samples},
      {"quadrature",
       {{"kind", c.quadrature.kind == QuadratureRule::Kind::Sobol ? "sobol" : "tensor"},
        {"resolution", c.quadrature.resolution}}},
      {"output_dir", c.output_dir},
      {"threads", c.threads},
      {"save_checkpoints", c.save_checkpoints},
  };
}

// ---------------------------------------------------------------------------
// Single cell

std::uint64_t cell_seed(const SweepConfig& config, int n, std::uint64_t seed) {
  return derive_seed(config.master_seed, Stream::Sweep, {static_cast<std::uint64_t>(n), seed});
}

RegressionDataset cell_dataset(const SweepConfig& config, int n, std::uint64_t seed) {
  return simulate_dataset(config.make_truth(), config.sigma0, n, config.p,
                          derive_seed(cell_seed(config, n, seed), Stream::Data));
}

ModelDims cell_dims(const SweepConfig& config, int n) {
  return ModelDims(config.p, sieve_bounds(config.sieve, n).k_n);
}

TrainConfig cell_train(const SweepConfig& config, int n, std::uint64_t seed) {
  TrainConfig train = config.train;
  train.seed = derive_seed(cell_seed(config, n, seed), Stream::Train);
  return train;
}

ExperimentRecord evaluate_posterior(const MeanFieldPosterior& q, const SweepConfig& config, int n,
                                    std::uint64_t seed, const QuadratureRule& rule) {
  const Truth truth = config.make_truth();
  ExperimentRecord r;
  r.n = n;
  r.seed = seed;
  r.k_n = q.dims.k;
  r.elbo_final = kNaN;
  const Eigen::VectorXd distances = hellinger_draws(q, truth, config.sigma0, config.tail_samples,
                                                    cell_seed(config, n, seed), rule);
  r.tail_mass = tail_mass_from_draws(distances, config.epsilons);
  r.l2_error = predictor_l2_error(q, truth, rule);
  r.hellinger_avg = hellinger_vb_average(q, truth, config.sigma0, rule);
  if (const auto* known = std::get_if<KnownScale>(&q.scale)) {
    r.sigma_hat = known->sigma;
  } else {
    const PointSummaries ps = posterior_point_summaries(q);
    r.sigma_hat = ps.sigma2_mean ? std::sqrt(*ps.sigma2_mean) : kNaN;
  }
  return r;
}

ExperimentRecord run_single(int n, std::uint64_t seed, const SweepConfig& config) {
  return run_single(n, seed, config, config.quadrature.build(config.p));
}

ExperimentRecord run_single(int n, std::uint64_t seed, const SweepConfig& config,
                            const QuadratureRule& rule) {
  const auto start = std::chrono::steady_clock::now();
  const RegressionDataset data = cell_dataset(config, n, seed);
  const ModelDims dims = cell_dims(config, n);
  ExperimentRecord r;
  try {
    const FitResult fitted = fit(config.prior, data, dims, cell_train(config, n, seed));
    r = evaluate_posterior(fitted.posterior, config, n, seed, rule);
    r.elbo_final = fitted.elbo_trace.empty() ? kNaN : fitted.elbo_trace.back();
    r.converged = fitted.converged;
    r.iterations = fitted.iterations;
    if (config.save_checkpoints) {
      const fs::path dir = fs::path(config.output_dir) / "checkpoints";
      fs::create_directories(dir);
      const fs::path file = dir / ("n" + std::to_string(n) + "_seed" + std::to_string(seed) + ".json");
      write_file(file, to_json(fitted.posterior).dump(2));
      r.checkpoint_path = file.string();
    }
  } catch (const NumericalError& e) {
    r = ExperimentRecord{};
    r.n = n;
    r.seed = seed;
    r.k_n = dims.k;
    r.failed = true;
    r.iterations = e.iteration();
    r.failure = "numerical failure at iteration " + std::to_string(e.iteration()) + " (" +
                e.parameter() + "): " + e.what();
  }
  r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

// ---------------------------------------------------------------------------
// Aggregation

RateEstimate estimate_delta(const std::vector<ExperimentRecord>& records, double epsilon) {
  std::map<int, std::vector<double>> by_n;
  std::map<int, int> samples;
  for (const auto& r : records) {
    if (r.failed) continue;
    const TailMassEstimate* t = find_eps(r, epsilon);
    if (!t) continue;
    by_n[r.n].push_back(t->estimate);
    auto [it, inserted] = samples.emplace(r.n, t->samples);
    if (!inserted) it->second = std::min(it->second, t->samples);
  }
  if (by_n.size() < 3)
    throw std::invalid_argument("estimate_delta: need at least 3 distinct n with tail mass at eps " +
                                fmt_short(epsilon));

  RateEstimate out;
  out.epsilon = epsilon;
  out.n_min = by_n.begin()->first;
  out.n_max = by_n.rbegin()->first;
  out.points = static_cast<int>(by_n.size());

  std::vector<double> xs, ys;
  bool all_zero = true;
  for (const auto& [n, values] : by_n) {
    double m = median(values);
    if (m > 0.0) {
      all_zero = false;
    } else {
      if (samples[n] < 1)
        throw std::invalid_argument("estimate_delta: a zero median needs the draw count");
      m = 1.0 / (2.0 * samples[n]);
      ++out.censored;
    }
    xs.push_back(std::log(static_cast<double>(n)));
    ys.push_back(std::log(m));
  }
  if (all_zero) {
    out.consistent_beyond_resolution = true;
    return out;
  }

  const auto m = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= m;
  my /= m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  const double slope = sxy / sxx;
  out.delta_hat = -slope;
  out.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return out;
}

std::vector<NSummary> summarize_by_n(const std::vector<ExperimentRecord>& records,
                                     const std::vector<double>& epsilons) {
  std::map<int, std::vector<const ExperimentRecord*>> groups;
  std::map<int, int> failed;
  for (const auto& r : records) {
    if (r.failed)
      ++failed[r.n];
    else
      groups[r.n].push_back(&r);
    groups.try_emplace(r.n);
  }
  std::vector<NSummary> out;
  for (const auto& [n, rs] : groups) {
    NSummary s;
    s.n = n;
    s.records = static_cast<int>(rs.size());
    s.failed = failed[n];
    auto med = [&](auto field) {
      std::vector<double> v;
      for (const auto* r : rs) v.push_back(field(*r));
      return median(std::move(v));
    };
    for (double eps : epsilons)
      s.tail_mass.push_back(med([eps](const ExperimentRecord& r) {
        const auto* t = find_eps(r, eps);
        return t ? t->estimate : kNaN;
      }));
    s.l2_error = med([](const ExperimentRecord& r) { return r.l2_error; });
    s.sigma_hat = med([](const ExperimentRecord& r) { return r.sigma_hat; });
    s.hellinger_avg = med([](const ExperimentRecord& r) { return r.hellinger_avg; });
    s.elbo_final = med([](const ExperimentRecord& r) { return r.elbo_final; });
    out.push_back(std::move(s));
  }
  return out;
}

SweepResult run_sweep(const SweepConfig& config) {
  config.validate();
  const QuadratureRule rule = config.quadrature.build(config.p);

  std::vector<std::pair<int, std::uint64_t>> cells;
  for (int n : config.n_grid)
    for (std::uint64_t s : config.seeds) cells.emplace_back(n, s);
  std::sort(cells.begin(), cells.end());

  std::vector<ExperimentRecord> records(cells.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        records[i] = run_single(cells[i].first, cells[i].second, config, rule);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  unsigned threads = config.threads > 0 ? static_cast<unsigned>(config.threads)
                                        : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(cells.size()));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }
  if (error) std::rethrow_exception(error);

  SweepResult out;
  out.records = std::move(records);
  for (const auto& r : out.records) out.failures += r.failed ? 1 : 0;
  for (double eps : config.epsilons) {
    try {
      out.estimates.push_back(estimate_delta(out.records, eps));
    } catch (const std::invalid_argument&) {
      // Too many failed cells for a fit; keep the epsilon with no estimate.
      RateEstimate e;
      e.epsilon = eps;
      out.estimates.push_back(e);
    }
  }
  out.by_n = summarize_by_n(out.records, config.epsilons);
  return out;
}

// ---------------------------------------------------------------------------
// Output

void prepare_output_dir(const fs::path& outdir) {
  std::error_code ec;
  fs::create_directories(outdir, ec);
  if (ec) throw ConfigError("cannot create output directory " + outdir.string() + ": " + ec.message());
  const fs::path probe = outdir / ".vbnn_write_probe";
  {
    std::ofstream out(probe);
    if (!out || !(out << "ok")) throw ConfigError("output directory not writable: " + outdir.string());
  }
  fs::remove(probe, ec);
}

void write_records_csv(std::ostream& out, const std::vector<ExperimentRecord>& records) {
  const std::vector<double> eps = record_epsilons(records);
  const bool with_eps = !eps.empty();
  out << (with_eps ? kRecordsCsvHeader
                   : "n,seed,k_n,elbo_final,hellinger_avg,l2_error,sigma_hat,runtime_s")
      << '\n';
  for (const auto& r : records) {
    if (r.failed) continue;
    const std::string head =
        std::to_string(r.n) + ',' + std::to_string(r.seed) + ',' + std::to_string(r.k_n) + ',' +
        fmt_double(r.elbo_final) + ',';
    const std::string tail = fmt_double(r.hellinger_avg) + ',' + fmt_double(r.l2_error) + ',' +
                             fmt_double(r.sigma_hat) + ',' + fmt_double(r.runtime_s) + '\n';
    if (!with_eps) {
      out << head << tail;
      continue;
    }
    if (r.tail_mass.size() != eps.size())
      throw std::invalid_argument("write_records_csv: records disagree on the epsilon grid");
    for (const auto& t : r.tail_mass)
      out << head << fmt_double(t.epsilon) << ',' << fmt_double(t.estimate) << ','
          << fmt_double(t.standard_error) << ',' << tail;
  }
}

std::vector<ExperimentRecord> read_records_csv(std::istream& in, int tail_samples) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("records CSV: empty input");
  const auto header = split_csv(line);
  const bool with_eps = header.size() == 11;
  if (line != kRecordsCsvHeader &&
      line != "n,seed,k_n,elbo_final,hellinger_avg,l2_error,sigma_hat,runtime_s")
    throw std::runtime_error("records CSV: unexpected header '" + line + "'");

  std::vector<ExperimentRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size())
      throw std::runtime_error("records CSV: wrong field count in '" + line + "'");
    const int n = static_cast<int>(parse_u64(f[0]));
    const std::uint64_t seed = parse_u64(f[1]);
    const std::size_t base = with_eps ? 7 : 4;
    if (out.empty() || out.back().n != n || out.back().seed != seed || !with_eps) {
      ExperimentRecord r;
      r.n = n;
      r.seed = seed;
      r.k_n = static_cast<int>(parse_u64(f[2]));
      r.elbo_final = parse_double(f[3]);
      r.hellinger_avg = parse_double(f[base]);
      r.l2_error = parse_double(f[base + 1]);
      r.sigma_hat = parse_double(f[base + 2]);
      r.runtime_s = parse_double(f[base + 3]);
      out.push_back(std::move(r));
    }
    if (with_eps)
      out.back().tail_mass.push_back(
          {parse_double(f[4]), parse_double(f[5]), parse_double(f[6]), tail_samples});
  }
  return out;
}

json summary_json(const std::vector<ExperimentRecord>& records,
                  const std::vector<RateEstimate>& estimates, const std::vector<double>& epsilons,
                  const std::optional<std::vector<LemmaReport>>& lemmas) {
  const auto samples = samples_by_n(records);
  json by_n = json::array();
  for (const NSummary& s : summarize_by_n(records, epsilons)) {
    json tails = json::array();
    for (double t : s.tail_mass) {
      const auto it = samples.find(s.n);
      if (t == 0.0 && it != samples.end() && it->second > 0)
        tails.push_back("< " + fmt_short(1.0 / (2.0 * it->second)));
      else
        tails.push_back(number_or_null(t));
    }
    by_n.push_back({{"n", s.n},
                    {"records", s.records},
                    {"failed", s.failed},
                    {"median_tail_mass", tails},
                    {"median_l2_error", number_or_null(s.l2_error)},
                    {"median_sigma_hat", number_or_null(s.sigma_hat)},
                    {"median_hellinger_avg", number_or_null(s.hellinger_avg)},
                    {"median_elbo_final", number_or_null(s.elbo_final)}});
  }
  json rates = json::array();
  for (const auto& e : estimates)
    rates.push_back({{"epsilon", e.epsilon},
                     {"delta_hat", e.delta_hat ? json(*e.delta_hat) : json(nullptr)},
                     {"r_squared", e.r_squared},
                     {"n_min", e.n_min},
                     {"n_max", e.n_max},
                     {"points", e.points},
                     {"censored", e.censored},
                     {"consistent_beyond_resolution", e.consistent_beyond_resolution}});
  json failures = json::array();
  for (const auto& r : records)
    if (r.failed) failures.push_back({{"n", r.n}, {"seed", r.seed}, {"reason", r.failure}});

  json doc = {{"format", "vbnn.summary"},
              {"version", 1},
              {"epsilons", epsilons},
              {"records", records.size()},
              {"failures", failures},
              {"by_n", by_n},
              {"rates", rates},
              {"lemma_suite", nullptr}};
  if (lemmas) {
    json reports = json::array();
    bool pass = true;
    for (const auto& r : *lemmas) {
      reports.push_back(to_json(r));
      pass = pass && r.pass;
    }
    doc["lemma_suite"] = {{"pass", pass}, {"reports", reports}};
  }
  return doc;
}

std::string validate_summary_json(const json& doc) {
  auto number_or_null_ok = [](const json& v) { return v.is_number() || v.is_null(); };
  if (!doc.is_object()) return "summary: not an object";
  if (doc.value("format", "") != "vbnn.summary") return "summary: format must be 'vbnn.summary'";
  if (!doc.contains("version") || !doc["version"].is_number_integer() || doc["version"] != 1)
    return "summary: version must be 1";
  for (const char* key : {"epsilons", "failures", "by_n", "rates"})
    if (!doc.contains(key) || !doc[key].is_array()) return std::string("summary: '") + key + "' must be an array";
  if (!doc.contains("records") || !doc["records"].is_number_unsigned())
    return "summary: 'records' must be a count";
  const std::size_t n_eps = doc["epsilons"].size();
  for (const auto& e : doc["epsilons"])
    if (!e.is_number()) return "summary: epsilons must be numbers";
  for (const auto& f : doc["failures"])
    if (!f.is_object() || !f.contains("n") || !f.contains("seed") || !f.contains("reason") ||
        !f["reason"].is_string())
      return "summary: malformed failure entry";
  for (const auto& b : doc["by_n"]) {
    if (!b.is_object()) return "summary: by_n entries must be objects";
    for (const char* key : {"n", "records", "failed"})
      if (!b.contains(key) || !b[key].is_number_integer()) return std::string("summary: by_n.") + key;
    for (const char* key : {"median_l2_error", "median_sigma_hat", "median_hellinger_avg",
                            "median_elbo_final"})
      if (!b.contains(key) || !number_or_null_ok(b[key])) return std::string("summary: by_n.") + key;
    if (!b.contains("median_tail_mass") || !b["median_tail_mass"].is_array() ||
        b["median_tail_mass"].size() != n_eps)
      return "summary: by_n.median_tail_mass must have one entry per epsilon";
    for (const auto& t : b["median_tail_mass"]) {
      const bool censored = t.is_string() && t.get<std::string>().rfind("< ", 0) == 0;
      if (!censored && !number_or_null_ok(t)) return "summary: bad median_tail_mass entry";
      if (t.is_number() && t.get<double>() == 0.0) return "summary: zero tail mass must be censored";
    }
  }
  for (const auto& r : doc["rates"]) {
    if (!r.is_object()) return "summary: rates entries must be objects";
    if (!r.contains("epsilon") || !r["epsilon"].is_number()) return "summary: rates.epsilon";
    if (!r.contains("delta_hat") || !number_or_null_ok(r["delta_hat"])) return "summary: rates.delta_hat";
    if (!r.contains("r_squared") || !r["r_squared"].is_number()) return "summary: rates.r_squared";
    for (const char* key : {"n_min", "n_max", "points", "censored"})
      if (!r.contains(key) || !r[key].is_number_integer()) return std::string("summary: rates.") + key;
    if (!r.contains("consistent_beyond_resolution") || !r["consistent_beyond_resolution"].is_boolean())
      return "summary: rates.consistent_beyond_resolution";
  }
  if (!doc.contains("lemma_suite")) return "summary: missing 'lemma_suite'";
  const json& ls = doc["lemma_suite"];
  if (!ls.is_null() &&
      (!ls.is_object() || !ls.contains("pass") || !ls["pass"].is_boolean() ||
       !ls.contains("reports") || !ls["reports"].is_array()))
    return "summary: malformed lemma_suite";
  return {};
}

void emit_report(const std::vector<ExperimentRecord>& records,
                 const std::vector<RateEstimate>& estimates, const fs::path& outdir,
                 const std::optional<std::vector<LemmaReport>>& lemmas) {
  if (records.empty()) throw std::invalid_argument("emit_report: no records");
  prepare_output_dir(outdir);
  const std::vector<double> epsilons = record_epsilons(records);

  std::ostringstream csv;
  write_records_csv(csv, records);
  write_file(outdir / "records.csv", csv.str());
  write_file(outdir / "summary.json", summary_json(records, estimates, epsilons, lemmas).dump(2) + "\n");

  const auto samples = samples_by_n(records);
  const auto by_n = summarize_by_n(records, epsilons);
  for (std::size_t e = 0; e < epsilons.size(); ++e) {
    std::ostringstream tsv;
    tsv << "n\tmedian_tail_mass\tcensored\n";
    for (const auto& s : by_n) {
      const double t = s.tail_mass[e];
      const auto it = samples.find(s.n);
      const bool censored = t == 0.0 && it != samples.end() && it->second > 0;
      tsv << s.n << '\t' << fmt_double(censored ? 1.0 / (2.0 * it->second) : t) << '\t'
          << (censored ? 1 : 0) << '\n';
    }
    write_file(outdir / ("tail_mass_eps_" + fmt_short(epsilons[e]) + ".tsv"), tsv.str());
  }
  auto series = [&](const char* name, double NSummary::*field) {
    std::ostringstream tsv;
    tsv << "n\t" << name << '\n';
    for (const auto& s : by_n) tsv << s.n << '\t' << fmt_double(s.*field) << '\n';
    write_file(outdir / (std::string(name) + ".tsv"), tsv.str());
  };
  series("median_l2_error", &NSummary::l2_error);
  series("median_sigma_hat", &NSummary::sigma_hat);
  series("median_hellinger_avg", &NSummary::hellinger_avg);
}

}  // namespace vbnn
