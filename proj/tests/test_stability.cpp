#include <cmath>
#include <random>

#include "doctest.h"
#include "test_util.hpp"
#include "tsdde/presets.hpp"
#include "tsdde/stability.hpp"

using namespace tsdde;

namespace {

DelayEquation real_const_lag(double a, double tau, double horizon, double h = 1e-2) {
  auto ts = TimeScale::reals(-tau - 0.5, horizon);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "t - %.17g", tau);
  return make_delay_equation(ts, expr_number(a), parse_expr(buf), 0.0, h);
}

}  // namespace

TEST_CASE("delay direction checks") {
  auto zi = TimeScale::integers(-2.0, 30.0);
  DelayEquation lag = make_delay_equation(zi, parse_expr("0.3"), parse_expr("t - 1"), 0.0, 1.0);
  CHECK(check_A1(lag).satisfied);
  CHECK(check_A2(lag).satisfied);  // alpha(sigma(t)) = t on the integers

  DelayEquation none = make_delay_equation(zi, parse_expr("0.3"), parse_expr("t"), 0.0, 1.0);
  CHECK(check_A1(none).satisfied);
  CHECK(!check_A2(none).satisfied);  // alpha(sigma(t)) = t + 1 > t

  // alpha ahead of t at every scattered point
  DelayEquation ahead =
      make_delay_equation(zi, parse_expr("0.3"), parse_expr("t + mu(t)"), 0.0, 1.0);
  ConditionReport a1 = check_A1(ahead);
  CHECK(!a1.satisfied);
  CHECK(a1.value == doctest::Approx(1.0));
}

TEST_CASE("K0 and H0 on the constant-lag real line") {
  DelayEquation eq = real_const_lag(0.4, 0.5, 40.0);
  ConditionReport k0 = compute_K0(eq);
  CHECK(k0.satisfied);
  CHECK(k0.value == doctest::Approx(0.4 * 0.5).epsilon(1e-9));
  ConditionReport h0 = compute_H0(eq);
  CHECK(h0.satisfied);
  CHECK(h0.value == doctest::Approx(0.5).epsilon(1e-9));

  DelayEquation zero = real_const_lag(0.0, 0.5, 40.0);
  CHECK(compute_K0(zero).value == 0.0);
}

TEST_CASE("K0 window pattern on the two-letter periodic coefficient") {
  RunConfig cfg = preset_config("example_5_3", {{"a", 0.7}, {"b", 0.1}});
  DelayEquation eq = equation_from_config(cfg);
  // Period-3 enumeration: every window integral over [s, alpha_inv(s)]
  // covers one a-step of gap 1 and one b-step of gap 2 in some order.
  double expected = 0.7 * 1.0 + 0.1 * 2.0;
  ConditionReport k0 = compute_K0(eq);
  CHECK(k0.satisfied);
  CHECK(k0.value == doctest::Approx(expected).epsilon(1e-12));
  ConditionReport h0 = compute_H0(eq);
  CHECK(h0.satisfied);
  CHECK(h0.value == 3.0);  // sigma^2 distance
}

TEST_CASE("proportional delay blows up H0 but not K0") {
  auto ts = TimeScale::reals(0.5, 120.0);
  DelayEquation eq =
      make_delay_equation(ts, parse_expr("0.6 / t"), parse_expr("0.5 * t"), 1.0, 0.02);
  ConditionReport h0 = compute_H0(eq);
  CHECK(!h0.satisfied);  // alpha_inv(s) - s = s grows with s
  ConditionReport k0 = compute_K0(eq);
  CHECK(k0.satisfied);
  CHECK(k0.value == doctest::Approx(0.6 * std::log(2.0)).epsilon(1e-4));
}

TEST_CASE("indicator integrals") {
  DelayEquation eq = real_const_lag(0.4, 0.5, 40.0);
  auto [chi_k, chi_h] = check_chi_conditions(eq, 1.0);
  CHECK(chi_k.satisfied);
  CHECK(chi_k.value == doctest::Approx(0.4 * 0.5).epsilon(1e-6));
  CHECK(chi_h.satisfied);

  // the flip-delay equation keeps pumping mass from before s forever
  RunConfig cfg = preset_config("example_2_1");
  cfg.h_max = 0.02;
  DelayEquation flip = equation_from_config(cfg);
  auto [bad_k, bad_h] = check_chi_conditions(flip, 1.0);
  CHECK(!bad_k.satisfied);
  CHECK(!bad_h.satisfied);
}

TEST_CASE("window conditions on the constant-lag real line") {
  DelayEquation eq = real_const_lag(0.9, 1.0, 40.0);
  ConditionReport strict = strict_condition_A1(eq);
  CHECK(strict.value == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(strict.satisfied);
  ConditionReport weak = weak_condition_A1(eq);
  CHECK(weak.value == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(weak.satisfied);

  DelayEquation tight = real_const_lag(1.2, 1.0, 40.0);
  CHECK(!strict_condition_A1(tight).satisfied);
  CHECK(!weak_condition_A1(tight).satisfied);

  // margin pushes a passing value into failure
  CHECK(!strict_condition_A1(eq, 0.2).satisfied);
}

TEST_CASE("divergence of the coefficient integral") {
  CHECK(check_divergence(real_const_lag(0.4, 0.5, 40.0)).satisfied);
  CHECK(!check_divergence(real_const_lag(0.0, 0.5, 40.0)).satisfied);

  // logarithmic growth still counts as divergent
  auto ts = TimeScale::reals(0.5, 200.0);
  DelayEquation slow =
      make_delay_equation(ts, parse_expr("0.5 / t"), parse_expr("t - 0.25"), 1.0, 0.02);
  CHECK(check_divergence(slow).satisfied);
}

TEST_CASE("nu0 selection") {
  CHECK(select_nu0(0.9) == doctest::Approx(0.95));
  CHECK(select_nu0(0.0) == doctest::Approx(0.5));
  CHECK(select_nu0(0.875) == doctest::Approx(0.9375));
  CHECK_THROWS_AS(select_nu0(1.0), Error);
}

TEST_CASE("lambda0 roots") {
  // small nu0 pushes the root toward 1
  CHECK(find_lambda0_A1(0.01) > 0.9);

  std::mt19937 rng(13);
  std::uniform_real_distribution<double> unit(0.01, 0.99);
  for (int k = 0; k < 100; ++k) {
    double nu0 = unit(rng);
    double l1 = find_lambda0_A1(nu0);
    double phi1 = (1.0 - l1) / (1.0 + l1 * nu0) - nu0 * std::exp(2.0 * l1 * nu0);
    CHECK(l1 > 0.0);
    CHECK(l1 < 1.0);
    CHECK(std::abs(phi1) <= 1e-12);

    double l2 = find_lambda0_A2(nu0);
    double phi2 = (1.0 - l2) - nu0 * std::exp(3.0 * l2 * nu0 / (1.0 - nu0));
    CHECK(l2 > 0.0);
    CHECK(l2 < 1.0 - nu0);
    CHECK(std::abs(phi2) <= 1e-12);
  }

  // independent bisection at nu0 = 0.5
  auto phi = [](double l) { return (1.0 - l) / (1.0 + 0.5 * l) - 0.5 * std::exp(l); };
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 80; ++it) {
    double mid = 0.5 * (lo + hi);
    (phi(mid) > 0.0 ? lo : hi) = mid;
  }
  CHECK(find_lambda0_A1(0.5) == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-10));
}

TEST_CASE("M0 construction") {
  DelayEquation zero = real_const_lag(0.0, 0.5, 20.0);
  CHECK(compute_M0(zero, 0.5, ConditionRoute::A1, 0.5) == 1.0);
  CHECK(compute_M0(zero, 0.5, ConditionRoute::A2, 0.5) == 1.0);

  DelayEquation eq = real_const_lag(0.4, 0.5, 20.0);
  double k0 = compute_K0(eq).value;
  CHECK(compute_M0(eq, 0.5, ConditionRoute::A1, 0.9) ==
        doctest::Approx(std::exp(0.5 * k0)).epsilon(1e-12));
  CHECK(compute_M0(eq, 0.5, ConditionRoute::A2, 0.5) ==
        doctest::Approx(std::exp(0.5 * k0 / (1.0 - 0.25))).epsilon(1e-12));
}

TEST_CASE("constructed-rate window inequality realized on a strict instance") {
  DelayEquation eq = real_const_lag(0.5, 0.8, 30.0);  // strict value 0.4
  ConditionReport strict = strict_condition_A1(eq);
  REQUIRE(strict.satisfied);
  double nu0 = select_nu0(strict.value);
  double l0 = find_lambda0_A1(nu0);
  // left side: integral over [alpha_*(t), sigma(t)] of e_{l0 A}(t, alpha_*(eta)) A(eta)
  const Grid& g = *eq.grid;
  std::vector<double> f_dense(eq.a_dense.values()), f_point(eq.a_point);
  for (double& v : f_dense) v *= l0;
  for (double& v : f_point) v *= l0;
  ExpCumulative cum(eq.ts, GridFunction(eq.grid, std::move(f_dense)), f_point);
  for (std::size_t i = eq.i0; i < g.size(); i += 37) {
    double t = g.t(i);
    double lo = std::max(eq.alpha_star_v[i], eq.ts->t_min());
    double hi = g.scattered(i) ? g.t(i + 1) : t;
    if (hi <= lo) continue;
    // trapezoid over nodes: plenty for a strict inequality with margin
    double acc = 0.0;
    std::size_t ja = g.index_ge(lo), jb = g.index_le(hi);
    for (std::size_t j = ja; j < jb; ++j) {
      double ga = cum.value(t, std::max(eq.alpha_star_v[j], eq.ts->t_min())) * eq.a_point[j];
      double gb =
          cum.value(t, std::max(eq.alpha_star_v[j + 1], eq.ts->t_min())) * eq.a_point[j + 1];
      acc += 0.5 * (ga + gb) * (g.t(j + 1) - g.t(j));
    }
    double mu = g.scattered(i) ? g.mu_at(i) : 0.0;
    double rhs = (1.0 - l0) / (1.0 + l0 * eq.a_point[i] * mu);
    CHECK(acc < rhs);
  }
}

TEST_CASE("classification is monotone under coefficient scaling") {
  auto rank = [](Verdict v) {
    switch (v) {
      case Verdict::Inconclusive: return 0;
      case Verdict::UniformlyStable: return 1;
      case Verdict::GloballyAsymptoticallyStable: return 2;
      case Verdict::UniformlyExponentiallyStable: return 3;
    }
    return 0;
  };
  ClassifyOptions opts;
  opts.workers = 2;

  // the two-letter periodic family: a + 2b = 1 is the uniform-stability edge
  RunConfig at_edge = preset_config("example_5_3", {{"a", 0.5}, {"b", 0.25}});
  StabilityCertificate edge = classify(equation_from_config(at_edge), opts);
  CHECK(edge.verdict == Verdict::UniformlyStable);

  RunConfig scaled = preset_config("example_5_3", {{"a", 0.45}, {"b", 0.225}});
  StabilityCertificate inside = classify(equation_from_config(scaled), opts);
  CHECK(rank(inside.verdict) >= rank(edge.verdict));
  CHECK(inside.verdict == Verdict::UniformlyExponentiallyStable);

  // constant-lag family on the reals
  StabilityCertificate c1 = classify(real_const_lag(1.0, 1.0, 40.0), opts);
  StabilityCertificate c2 = classify(real_const_lag(0.5, 1.0, 40.0), opts);
  CHECK(c1.verdict == Verdict::UniformlyStable);
  CHECK(c2.verdict == Verdict::UniformlyExponentiallyStable);
  CHECK(rank(c2.verdict) >= rank(c1.verdict));
}

TEST_CASE("bounded verdicts come with bounded fields") {
  ClassifyOptions opts;
  opts.workers = 2;
  StabilityCertificate cert = classify(real_const_lag(0.9, 1.0, 40.0), opts);
  CHECK(cert.verdict != Verdict::Inconclusive);
  CHECK(cert.numeric.field_columns > 0);
  CHECK(cert.numeric.weak_bound_checked);
  CHECK(cert.numeric.weak_bound_ok);
  CHECK(cert.numeric.sup_abs_X <= 1.0 + 1e-6);
  if (cert.verdict == Verdict::UniformlyExponentiallyStable) {
    CHECK(cert.numeric.envelope_checked);
    CHECK(cert.numeric.envelope_ok);
  }
}

TEST_CASE("certificate serialization has a stable shape") {
  ClassifyOptions opts;
  StabilityCertificate cert = classify(real_const_lag(0.5, 0.5, 20.0), opts);
  std::string doc = serialize_certificate(cert);
  CHECK(doc.find("verdict = ") == 0);
  CHECK(doc.find("route = ") != std::string::npos);
  CHECK(doc.find("report.A1.satisfied") != std::string::npos);
  CHECK(doc.find("report.K0_finite.value") != std::string::npos);
  CHECK(doc.find("numeric.sup_abs_X") != std::string::npos);
  // key order is fixed: verdict before route before nu0
  CHECK(doc.find("verdict") < doc.find("route"));
  CHECK(doc.find("route =") < doc.find("nu0 ="));
}

TEST_CASE("pantograph substitution") {
  ExprPtr a_over_t = parse_expr("0.8 / t");
  DelayEquation eq = pantograph_transform(a_over_t, 0.5, 100.0, 1e-3);
  // transformed coefficient is the constant a, delay is ln 2
  const Grid& g = *eq.grid;
  for (std::size_t i = eq.i0; i < g.size(); i += 97)
    CHECK(eq.a_point[i] == doctest::Approx(0.8).epsilon(1e-12));
  double ln2 = std::log(2.0);
  int i_mid = g.index_of(eq.ts->snap(0.0));
  REQUIRE(i_mid >= 0);
  CHECK(eq.alpha_point[static_cast<std::size_t>(i_mid)] ==
        doctest::Approx(-ln2).epsilon(1e-12));
  ConditionReport strict = strict_condition_A1(eq);
  CHECK(strict.value == doctest::Approx(0.8 * ln2).epsilon(1e-6));

  CHECK_THROWS_AS(pantograph_transform(a_over_t, 1.5, 100.0, 1e-3), Error);
  CHECK_THROWS_AS(pantograph_transform(a_over_t, 0.0, 100.0, 1e-3), Error);
}

TEST_CASE("two-term reduction") {
  // A == 0 leaves the delay coefficient untouched
  TwoTermEquation plain;
  plain.ts = TimeScale::reals(-2.0, 10.0);
  plain.a = parse_expr("0");
  plain.b = parse_expr("0.7");
  plain.beta = parse_expr("t - 1");
  plain.t0 = 0.0;
  plain.h_max = 0.01;
  TwoTermReduction identity = two_term_reduction(plain, true);
  const Grid& g = *identity.eq.grid;
  for (std::size_t i = identity.eq.i0; i < g.size(); i += 53)
    CHECK(identity.eq.a_point[i] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(identity.back_map(5.0) == doctest::Approx(1.0).epsilon(1e-12));

  // constant A on the reals: coefficient b e^{c tau}
  TwoTermEquation shifted = plain;
  shifted.a = parse_expr("0.3");
  TwoTermReduction red = two_term_reduction(shifted, true);
  double expect = 0.7 * std::exp(0.3 * 1.0);
  for (std::size_t i = red.eq.i0 + 200; i < red.eq.grid->size(); i += 101)
    CHECK(red.eq.a_point[i] == doctest::Approx(expect).epsilon(1e-9));

  // the plain variant requires -A positively regressive
  TwoTermEquation bad;
  bad.ts = TimeScale::integers(-2.0, 10.0);
  bad.a = parse_expr("1");  // 1 - mu A = 0
  bad.b = parse_expr("0.1");
  bad.beta = parse_expr("t - 1");
  bad.t0 = 0.0;
  bad.h_max = 1.0;
  CHECK_THROWS_AS(two_term_reduction(bad, false), Error);
}

TEST_CASE("two-term reduction solves the original equation") {
  // sigma variant on the integers: x(t+1)(1 + A) = x(t) - B x(t-1)
  for (bool sigma_variant : {true, false}) {
    TwoTermEquation two;
    two.ts = TimeScale::integers(-1.0, 40.0);
    two.a = parse_expr("0.2");
    two.b = parse_expr("0.3");
    two.beta = parse_expr("t - 1");
    two.t0 = 0.0;
    two.h_max = 1.0;
    TwoTermReduction red = two_term_reduction(two, sigma_variant);

    double x0 = 1.0, phi_val = 0.5;
    History h = make_history(red.eq, 0.0, x0,
                             [&](double t) { return (t < 0.0 ? phi_val : x0) / red.back_map(t); });
    Solution y = solve_ivp(red.eq, 0.0, h);

    // direct recurrence oracle for the two-term equation
    double prev = phi_val, cur = x0;
    const Grid& g = *red.eq.grid;
    for (std::size_t i = red.eq.i0 + 1; i < g.size(); ++i) {
      double next = sigma_variant ? (cur - 0.3 * prev) / (1.0 + 0.2)
                                  : cur * (1.0 - 0.2) - 0.3 * prev;
      prev = cur;
      cur = next;
      double mapped = red.back_map(g.t(i)) * y.x.values()[i];
      CHECK(mapped == doctest::Approx(cur).epsilon(1e-8));
    }
  }
}

TEST_CASE("companion-matrix sharpness") {
  EigenSharpness quarter = eigen_sharpness(0.25);
  CHECK(quarter.modulus == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(quarter.stable);

  EigenSharpness unit = eigen_sharpness(1.0);
  CHECK(unit.modulus == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(unit.stable);

  EigenSharpness beyond = eigen_sharpness(1.21);
  CHECK(beyond.modulus == doctest::Approx(1.1).epsilon(1e-12));
  CHECK(!beyond.stable);

  CHECK(eigen_sharpness(0.1).modulus ==
        doctest::Approx(0.5 * (1.0 + std::sqrt(0.6))).epsilon(1e-14));

  CHECK(two_step_recurrence_max(0.5, 2000, 1.0, 1.0) <= 2.0);
  CHECK(two_step_recurrence_max(1.02, 2000, 1.0, 1.0) > 1e3);
}
