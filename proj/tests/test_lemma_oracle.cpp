// Numerical checks of the analytic bounds and their reports.

#include "vbnn/lemmas.hpp"
#include "vbnn/special.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <doctest.h>

#include <cmath>

using namespace vbnn;
using doctest::Approx;

namespace {

double h1_of_ratio(double x) { return std::log(x) - 0.5 * (1.0 - 1.0 / (x * x)); }

const LemmaCheck* find_check(const LemmaReport& r, const std::string& prefix) {
  for (const auto& c : r.checks)
    if (c.name.rfind(prefix, 0) == 0) return &c;
  return nullptr;
}

}  // namespace

TEST_CASE("report bookkeeping") {
  LemmaReport r;
  r.lemma_id = "demo";
  r.tolerance = 1e-9;
  r.check_le("upper", 1.0, 2.0);
  r.check_ge("lower", 1.0, 0.5);
  r.finish();
  CHECK(r.pass);
  CHECK(r.max_violation == -0.5);
  CHECK(r.checks[0].excess == -1.0);
  CHECK(r.checks[1].excess == -0.5);
  r.check_ge("lower2", 1.0, 1.5);
  r.finish();
  CHECK_FALSE(r.pass);
  CHECK(r.max_violation == 0.5);
  CHECK(r.details.find("lower2") != std::string::npos);

  const LemmaReport back = lemma_report_from_json(to_json(r));
  CHECK(back.lemma_id == r.lemma_id);
  CHECK(back.max_violation == r.max_violation);
  CHECK(back.pass == r.pass);
  CHECK(back.checks.size() == r.checks.size());
  CHECK(back.checks[2].name == "lower2");

  LemmaReport empty;
  empty.finish();
  CHECK(lemma_report_from_json(to_json(empty)).max_violation == -INFINITY);
}

TEST_CASE("log_log_slope") {
  std::vector<double> xs, ys;
  for (double x : {10.0, 100.0, 1000.0, 1e4}) {
    xs.push_back(x);
    ys.push_back(3.0 * std::pow(x, -0.7));
  }
  CHECK(log_log_slope(xs, ys) == Approx(-0.7).epsilon(1e-12));
  CHECK_THROWS(log_log_slope({1.0}, {1.0}));
}

TEST_CASE("modified KL bound") {
  // N(0,1) against N(3,1): E|log p/q| by quadrature sits under KL + 2/e.
  const auto integrand = [](double x) { return normal_pdf(x) * std::abs(4.5 - 3.0 * x); };
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double lhs = GK::integrate(integrand, -40.0, 1.5, 15, 1e-14) + GK::integrate(integrand, 1.5, 40.0, 15, 1e-14);
  CHECK(lhs == Approx(4.67584076257562777).epsilon(1e-12));
  CHECK(lhs <= 4.5 + 2.0 / std::exp(1.0));
  const LemmaReport r = verify_mod_kl(300, 5);
  CHECK(r.pass);
  CHECK(r.instances_checked >= 300);
  CHECK(r.max_violation <= 0.0);
}

TEST_CASE("parameter perturbation bound") {
  const LemmaReport r = verify_theta_bound(100, ModelDims(2, 3), {1e-3, 1e-2, 0.1, 0.3});
  CHECK(r.pass);
  CHECK(r.instances_checked == 100);
  CHECK(verify_theta_bound(50, ModelDims(1, 1), {0.2}).pass);
}

TEST_CASE("scale bounds: h1 exceeds delta^2 just below sigma0") {
  CHECK(h1_of_ratio(1.5) == Approx(0.127687330330386604).epsilon(1e-14));
  CHECK(h1_of_ratio(1.5) <= 0.25);
  // On the lower side of the band the allowance is broken for every delta.
  for (double delta : {0.1, 0.3, 0.5, 0.9}) CHECK(h1_of_ratio(1.0 - delta) > delta * delta);

  const LemmaReport r = verify_sig_rho_bounds({0.5});
  CHECK_FALSE(r.pass);
  const LemmaCheck* c = find_check(r, "sigma h1, delta 0.5");
  REQUIRE(c != nullptr);
  CHECK(c->limit == Approx(0.25));
  CHECK(c->measured > h1_of_ratio(0.51));
  CHECK(c->measured < h1_of_ratio(0.5));
  const LemmaCheck* h2 = find_check(r, "sigma h2, delta 0.5");
  REQUIRE(h2 != nullptr);
  CHECK(h2->excess <= 0.0);
}

TEST_CASE("inverse-gamma expectation identities") {
  CHECK(0.5 * (std::log(2.0) - boost::math::digamma(2.0)) == Approx(0.135181422730739085).epsilon(1e-14));
  const LemmaReport r = verify_ig_expectation_identities({2, 10, 100, 1000}, 1.5);
  CHECK(r.pass);
  CHECK(r.lemma_id == "ig_expectations");
}

TEST_CASE("rho expectation identities") {
  const LemmaReport r = verify_rho_expectation_identities({100, 1000, 10000, 100000}, {-0.5, 0.541324854612918, 2.0}, 1.0);
  CHECK(r.pass);
}

TEST_CASE("Mills ratio") {
  const double a = 1.0;
  CHECK(std::exp(log_normal_sf(a)) * a / normal_pdf(a) == Approx(0.655679542418798472).epsilon(1e-13));
  CHECK(verify_mills_ratio({1, 2, 3, 5, 10, 30}).pass);
}

TEST_CASE("predictor error decay under the analysis family") {
  const Network teacher = make_teacher(2, 1, 2.0, 3);
  const FBoundResult r = verify_f_bound_decay(teacher, {100, 1000, 10000}, 1.0, 200, 4, SieveSpec{0.05, 0.5},
                                              QuadratureRule::tensor_gauss_legendre(1, 32));
  CHECK(r.report.pass);
  REQUIRE(r.estimates.size() == 3);
  CHECK(r.estimates[2] < r.estimates[0]);
}

TEST_CASE("prior tail bound") {
  const LemmaReport fixed =
      verify_prior_tail_bound(FixedGaussian{1.0}, SieveSpec{0.25, 0.5}, 1, {1, 2}, {10, 100, 1000}, 20000, 6);
  CHECK(fixed.pass);
  const LemmaReport rho = verify_prior_tail_bound(RhoGaussian{1.0, 0.7071067811865476}, SieveSpec{0.25, 0.8}, 2,
                                                  {1, 2}, {200, 1000, 5000}, 20000, 6, 1.0, 1.0);
  CHECK(rho.pass);
}

TEST_CASE("reports with non-finite entries survive a JSON round trip") {
  LemmaReport r;
  r.lemma_id = "inf";
  r.check_le("unbounded", 1.0, INFINITY);
  r.finish();
  const LemmaReport back = lemma_report_from_json(nlohmann::json::parse(to_json(r).dump()));
  CHECK(back.pass);
  CHECK(back.checks.size() == 1);
  CHECK(std::isnan(back.checks[0].limit));
  for (const auto& rep : run_lemma_suite())
    CHECK_NOTHROW(lemma_report_from_json(nlohmann::json::parse(to_json(rep).dump())));
}
