#include "tsdde/presets.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>

#include "tsdde/stability.hpp"

namespace tsdde {

namespace {

const double kE = std::exp(1.0);
const double kLn2 = std::log(2.0);

std::string fmt(double v) { return format_double(v); }

double param(const std::map<std::string, double>& p, const std::string& key, double dflt) {
  auto it = p.find(key);
  return it == p.end() ? dflt : it->second;
}

RunConfig cfg_example_2_1(const std::map<std::string, double>& p) {
  RunConfig cfg;
  cfg.preset = "example_2_1";
  cfg.scale_text = "generator p11 from -2 upto $T";
  cfg.horizon = param(p, "horizon", 61.0);
  cfg.h_max = 1e-3;
  cfg.t0 = 0.0;
  cfg.a_src = "1";
  cfg.alpha_src = "if scattered(t) then -1 else t";
  cfg.x0 = 0.0;
  cfg.phi_src = "-1";
  cfg.params = p;
  return cfg;
}

RunConfig cfg_example_5_1(const std::map<std::string, double>& p) {
  double a = param(p, "a", 0.5);
  RunConfig cfg;
  cfg.preset = "example_5_1";
  cfg.scale_text = "generator p11 from 0 upto $T";
  cfg.horizon = param(p, "horizon", 40.0);
  cfg.h_max = 1e-2;
  cfg.t0 = 1.0;
  cfg.a_src = "if scattered(t) then " + fmt(a) + " else " + fmt(a) + " * 4^floor(t)";
  cfg.alpha_src = "t - (frac(t)*(1 - frac(t)))^floor(t)";
  cfg.x0 = 1.0;
  cfg.phi_src = "1";
  cfg.params = p;
  return cfg;
}

RunConfig cfg_example_5_2(const std::map<std::string, double>& p) {
  double a = param(p, "a", 0.5);
  RunConfig cfg;
  cfg.preset = "example_5_2";
  cfg.scale_text = "generator sinhcosh from 1 upto $T";
  cfg.horizon = param(p, "horizon", 202.0);  // through segment n = 6
  cfg.h_max = 1e-4;
  cfg.t0 = std::sinh(1.0);
  // The segment index n is recovered from t: n = floor(asinh(t) + eps).
  std::string n = "floor(ln(t + sqrt(t*t + 1)) + 1e-9)";
  cfg.a_src = "if scattered(t) then " + fmt(a) + " / mu(t) else " + fmt(a);
  cfg.alpha_src = "t - (cosh(" + n + ") - t) * (t - sinh(" + n + ")) / (cosh(" + n +
                  ") - sinh(" + n + "))";
  cfg.x0 = 1.0;
  cfg.phi_src = "1";
  cfg.params = p;
  return cfg;
}

RunConfig cfg_example_5_3(const std::map<std::string, double>& p) {
  double a = param(p, "a", 0.375);
  double b = param(p, "b", 0.25);
  RunConfig cfg;
  cfg.preset = "example_5_3";
  cfg.scale_text = "generator z_mod3 from -2 upto $T";
  cfg.horizon = param(p, "horizon", 101.0);
  cfg.h_max = 1.0;  // purely isolated scale
  cfg.t0 = 1.0;
  cfg.a_src = "if t - 3*floor(t/3) < 1.5 then " + fmt(a) + " else " + fmt(b);
  cfg.alpha_src = "rho2(t)";
  cfg.x0 = 1.0;
  cfg.phi_src = "1";
  cfg.params = p;
  return cfg;
}

RunConfig cfg_pantograph(const std::map<std::string, double>& p) {
  double theta = param(p, "theta", 0.5);
  double a = param(p, "a", 0.6 / kLn2);  // a * ln(1/theta) = 0.6 by default
  double horizon = param(p, "horizon", 120.0);
  if (!(theta > 0.0 && theta < 1.0))
    throw Error(ErrorCode::BadTheta, "pantograph preset needs theta in (0,1)");
  // Same composition the transform produces, in source form.
  ExprPtr a_of_t = expr_binary(BinOp::div, expr_number(a), expr_var());
  ExprPtr exp_t = expr_call(Fn::exp_fn, {expr_var()});
  ExprPtr coeff = expr_binary(BinOp::mul, exp_t, substitute_var(a_of_t, exp_t));
  double delay = std::log(1.0 / theta);
  RunConfig cfg;
  cfg.preset = "pantograph";
  cfg.scale_text = "interval " + fmt(-delay) + " $T";
  cfg.horizon = std::log(horizon);  // the u = ln t clock
  cfg.h_max = 1e-3;
  cfg.t0 = 0.0;
  cfg.a_src = print_expr(*coeff);
  cfg.alpha_src = "t - " + fmt(delay);
  cfg.x0 = 1.0;
  cfg.phi_src = "1";
  cfg.params = p;
  return cfg;
}

RunConfig cfg_eigen(const std::map<std::string, double>& p) {
  double a = param(p, "a", 1.0);
  RunConfig cfg;
  cfg.preset = "eigen_sharpness";
  cfg.scale_text = "generator integers from 0 upto $T";
  cfg.horizon = param(p, "horizon", 200.0);
  cfg.h_max = 1.0;
  cfg.t0 = 1.0;
  cfg.a_src = fmt(a) + " / mu(t)";
  cfg.alpha_src = "rho(t)";
  cfg.x0 = 1.0;
  cfg.phi_src = "1";
  cfg.params = p;
  return cfg;
}

RunConfig cfg_r_const(const std::map<std::string, double>& p) {
  double a = param(p, "a", 0.3);
  double tau = param(p, "tau", 3.0);
  RunConfig cfg;
  cfg.preset = "r_const";
  cfg.scale_text = "interval " + fmt(-tau) + " $T";
  cfg.horizon = param(p, "horizon", 30.0);
  cfg.h_max = 1e-2;
  cfg.t0 = 0.0;
  cfg.a_src = fmt(a);
  cfg.alpha_src = "t - " + fmt(tau);
  cfg.x0 = 1.0;
  cfg.phi_src = "1";
  cfg.params = p;
  return cfg;
}

using Builder = RunConfig (*)(const std::map<std::string, double>&);

const std::vector<std::pair<std::string, Builder>>& registry() {
  static const std::vector<std::pair<std::string, Builder>> reg = {
      {"example_2_1", cfg_example_2_1}, {"example_5_1", cfg_example_5_1},
      {"example_5_2", cfg_example_5_2}, {"example_5_3", cfg_example_5_3},
      {"pantograph", cfg_pantograph},   {"eigen_sharpness", cfg_eigen},
      {"r_const", cfg_r_const},
  };
  return reg;
}

}  // namespace

std::vector<std::string> list_examples() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : registry()) names.push_back(name);
  return names;
}

bool is_example(const std::string& name) {
  for (const auto& [n, fn] : registry())
    if (n == name) return true;
  return false;
}

RunConfig preset_config(const std::string& name,
                        const std::map<std::string, double>& overrides) {
  for (const auto& [n, fn] : registry())
    if (n == name) return fn(overrides);
  throw Error(ErrorCode::UnknownExample, "no preset named '" + name + "'");
}

// ---------------------------------------------------------------------------
// verify_example
// ---------------------------------------------------------------------------

namespace {

class CheckRunner {
 public:
  explicit CheckRunner(ExampleReport& report) : report_(report) {}

  void run(const std::string& name, const std::function<std::pair<bool, std::string>()>& fn) {
    ExampleCheck c;
    c.name = name;
    auto start = std::chrono::steady_clock::now();
    try {
      auto [pass, detail] = fn();
      c.pass = pass;
      c.detail = detail;
    } catch (const std::exception& e) {
      c.pass = false;
      c.detail = std::string("exception: ") + e.what();
    }
    c.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report_.all_pass = report_.all_pass && c.pass;
    report_.checks.push_back(std::move(c));
  }

 private:
  ExampleReport& report_;
};

std::pair<bool, std::string> pass_if(bool ok, const std::string& detail) {
  return {ok, detail};
}

void verify_example_2_1(CheckRunner& r) {
  r.run("closed_form_x_2k", [] {
    RunConfig cfg = preset_config("example_2_1");
    DelayEquation eq = equation_from_config(cfg);
    History h = history_from_config(eq, cfg);
    Solution sol = solve_ivp(eq, eq.t0, h);
    double worst = 0.0;
    for (int k : {10, 20, 30}) {
      double expected = kE / (kE - 1.0) * (1.0 - std::exp(-static_cast<double>(k)));
      double got = sol.value(2.0 * k);
      worst = std::max(worst, std::abs(got - expected));
    }
    return pass_if(worst <= 1e-9, "max closed-form deviation " + fmt(worst));
  });

  r.run("chi_divergent_and_inconclusive", [] {
    RunConfig cfg = preset_config("example_2_1");
    cfg.h_max = 1e-2;  // classification tolerates a coarser grid
    DelayEquation eq = equation_from_config(cfg);
    ClassifyOptions opts;
    opts.workers = 2;
    StabilityCertificate cert = classify(eq, opts);
    const ConditionReport* chi = cert.find("chi_K");
    bool ok = chi && !chi->satisfied && cert.verdict == Verdict::Inconclusive;
    return pass_if(ok, std::string("verdict ") + verdict_name(cert.verdict) +
                           ", chi_K satisfied " + (chi && chi->satisfied ? "true" : "false"));
  });

  r.run("field_decays_under_envelope", [] {
    RunConfig cfg = preset_config("example_2_1");
    cfg.h_max = 1e-2;
    DelayEquation eq = equation_from_config(cfg);
    FundamentalField field = fundamental_solution(eq, default_s_samples(eq, 32), 2);
    const Grid& g = *eq.grid;
    double worst_ratio = 0.0;
    double tail_max = 0.0;
    for (std::size_t j = 0; j < field.columns(); ++j) {
      const Solution& col = field.column(j);
      for (std::size_t i = col.start_index; i < g.size(); ++i) {
        double x = col.x.values()[i];
        double envelope = kE * std::exp(-0.5 * (g.t(i) - col.s));
        if (x < -1e-12) return pass_if(false, "field went negative");
        worst_ratio = std::max(worst_ratio, x / envelope);
        if (g.t(i) - col.s >= 20.0) tail_max = std::max(tail_max, std::abs(x));
      }
    }
    bool ok = worst_ratio <= 1.0 + 1e-6 && tail_max <= 1e-3;
    return pass_if(ok, "sup X/envelope = " + fmt(worst_ratio) +
                           ", max |X| beyond 20 time units = " + fmt(tail_max));
  });
}

void verify_example_5_1(CheckRunner& r) {
  r.run("strict_condition_sup_equals_a", [] {
    RunConfig cfg = preset_config("example_5_1", {{"a", 0.5}});
    DelayEquation eq = equation_from_config(cfg);
    ConditionReport strict = strict_condition_A1(eq);
    double dev = std::abs(strict.value - 0.5);
    return pass_if(dev <= 1e-6, "sup = " + fmt(strict.value) + " attained at t = " +
                                    fmt(strict.attained_at));
  });

  r.run("a2_fails_a1_holds", [] {
    RunConfig cfg = preset_config("example_5_1", {{"a", 0.5}});
    DelayEquation eq = equation_from_config(cfg);
    ConditionReport a1 = check_A1(eq);
    ConditionReport a2 = check_A2(eq);
    return pass_if(a1.satisfied && !a2.satisfied,
                   std::string("A1 ") + (a1.satisfied ? "holds" : "fails") + ", A2 " +
                       (a2.satisfied ? "holds" : "fails"));
  });

  r.run("classify_a_0.5_exponential", [] {
    RunConfig cfg = preset_config("example_5_1", {{"a", 0.5}});
    DelayEquation eq = equation_from_config(cfg);
    ClassifyOptions opts;
    opts.workers = 2;
    StabilityCertificate cert = classify(eq, opts);
    bool ok = cert.verdict == Verdict::UniformlyExponentiallyStable;
    return pass_if(ok, std::string("verdict ") + verdict_name(cert.verdict) + " via " +
                           route_name(cert.route));
  });

  r.run("classify_a_1.0_uniform", [] {
    RunConfig cfg = preset_config("example_5_1", {{"a", 1.0}});
    DelayEquation eq = equation_from_config(cfg);
    ClassifyOptions opts;
    opts.workers = 2;
    StabilityCertificate cert = classify(eq, opts);
    bool ok = cert.verdict == Verdict::UniformlyStable;
    return pass_if(ok, std::string("verdict ") + verdict_name(cert.verdict));
  });
}

void verify_example_5_2(CheckRunner& r) {
  r.run("segment_delay_maxima", [] {
    RunConfig cfg = preset_config("example_5_2", {{"a", 0.5}});
    DelayEquation eq = equation_from_config(cfg);
    const Grid& g = *eq.grid;
    double worst = 0.0;
    for (int n = 1; n <= 5; ++n) {
      double lo = std::sinh(static_cast<double>(n)), hi = std::cosh(static_cast<double>(n));
      double seg_max = 0.0;
      for (std::size_t i = g.index_ge(lo); i < g.size() && g.t(i) <= hi; ++i)
        seg_max = std::max(seg_max, g.t(i) - eq.alpha_point[i]);
      double expected = 0.25 * std::exp(-static_cast<double>(n));
      worst = std::max(worst, std::abs(seg_max - expected));
    }
    return pass_if(worst <= 1e-8, "max deviation from (4e^n)^-1: " + fmt(worst));
  });

  r.run("classify_a_0.5_asymptotic_not_exponential", [] {
    RunConfig cfg = preset_config("example_5_2", {{"a", 0.5}});
    DelayEquation eq = equation_from_config(cfg);
    ClassifyOptions opts;
    opts.workers = 2;
    StabilityCertificate cert = classify(eq, opts);
    bool ok = cert.verdict == Verdict::GloballyAsymptoticallyStable;
    return pass_if(ok, std::string("verdict ") + verdict_name(cert.verdict));
  });
}

void verify_example_5_3(CheckRunner& r) {
  r.run("window_integral_exact", [] {
    RunConfig cfg = preset_config("example_5_3", {{"a", 0.375}, {"b", 0.25}});
    DelayEquation eq = equation_from_config(cfg);
    const Grid& g = *eq.grid;
    double target = 0.375 + 2.0 * 0.25;
    for (std::size_t i = eq.i0; i < g.size(); ++i) {
      double v = coeff_window_integral(eq, eq.alpha_point[i], g.t(i));
      if (v != target)
        return pass_if(false, "window at t = " + fmt(g.t(i)) + " gave " + fmt(v));
    }
    return pass_if(true, "all windows equal a + 2b = " + fmt(target) + " exactly");
  });

  r.run("classify_exponential", [] {
    RunConfig cfg = preset_config("example_5_3", {{"a", 0.375}, {"b", 0.25}});
    DelayEquation eq = equation_from_config(cfg);
    ClassifyOptions opts;
    opts.workers = 2;
    StabilityCertificate cert = classify(eq, opts);
    bool ok = cert.verdict == Verdict::UniformlyExponentiallyStable &&
              cert.route == Route::C4_1;
    return pass_if(ok, std::string("verdict ") + verdict_name(cert.verdict) + " via " +
                           route_name(cert.route));
  });

  r.run("column_envelope_to_t_100", [] {
    RunConfig cfg = preset_config("example_5_3", {{"a", 0.375}, {"b", 0.25}});
    DelayEquation eq = equation_from_config(cfg);
    ClassifyOptions opts;
    opts.workers = 2;
    StabilityCertificate cert = classify(eq, opts);
    if (cert.verdict != Verdict::UniformlyExponentiallyStable)
      return pass_if(false, "expected an exponential certificate first");
    History unit;
    Solution col = solve_ivp(eq, 1.0, unit);
    std::vector<double> f_vals(eq.a_point);
    for (double& v : f_vals) v *= -cert.lambda0;
    GridFunction f(eq.grid, std::vector<double>(f_vals), Interp::cubic_hermite);
    ExpCumulative env(eq.ts, f, f_vals);
    const Grid& g = *eq.grid;
    double worst = 0.0;
    for (std::size_t i = col.start_index; i < g.size() && g.t(i) <= 100.0; ++i) {
      double bound = cert.M0 * env.value(g.t(i), 1.0);
      worst = std::max(worst, std::abs(col.x.values()[i]) / bound);
    }
    return pass_if(worst <= 1.0 + 1e-9, "worst |X|/envelope = " + fmt(worst));
  });
}

void verify_pantograph(CheckRunner& r) {
  r.run("strict_value_a_ln2", [] {
    RunConfig cfg = preset_config("pantograph");
    DelayEquation eq = equation_from_config(cfg);
    ConditionReport strict = strict_condition_A1(eq);
    double dev = std::abs(strict.value - 0.6);
    return pass_if(dev <= 1e-6, "strict window sup = " + fmt(strict.value));
  });

  r.run("classify_exponential", [] {
    RunConfig cfg = preset_config("pantograph");
    DelayEquation eq = equation_from_config(cfg);
    ClassifyOptions opts;
    opts.workers = 2;
    StabilityCertificate cert = classify(eq, opts);
    bool ok = cert.verdict == Verdict::UniformlyExponentiallyStable && cert.lambda1 &&
              *cert.lambda1 > 0.0;
    return pass_if(ok, std::string("verdict ") + verdict_name(cert.verdict) +
                           ", lambda1 = " + (cert.lambda1 ? fmt(*cert.lambda1) : "none"));
  });

  r.run("pullback_power_law", [] {
    RunConfig cfg = preset_config("pantograph");
    DelayEquation eq = equation_from_config(cfg);
    ClassifyOptions opts;
    opts.workers = 2;
    StabilityCertificate cert = classify(eq, opts);
    if (!cert.lambda1) return pass_if(false, "no fitted decay rate");
    double lam = *cert.lambda1, M = cert.M0 * cert.M1;
    FundamentalField field = fundamental_solution(eq, default_s_samples(eq, 48), 2);
    const Grid& g = *eq.grid;
    double worst = 0.0;
    for (std::size_t j = 0; j < field.columns(); ++j) {
      const Solution& col = field.column(j);
      if (col.s < 0.0) continue;  // u = ln t with t >= 1
      for (std::size_t i = col.start_index; i < g.size(); ++i) {
        double du = g.t(i) - col.s;           // = ln(t/s)
        if (du > std::log(100.0)) break;      // t/s <= 100
        double bound = M * std::exp(-lam * du);  // = M (t/s)^(-lambda)
        worst = std::max(worst, std::abs(col.x.values()[i]) / bound);
      }
    }
    return pass_if(worst <= 1.0 + 1e-6,
                   "worst |X| / (M (t/s)^-lambda) = " + fmt(worst) + " with lambda = " +
                       fmt(lam) + ", M = " + fmt(M));
  });
}

void verify_eigen(CheckRunner& r) {
  r.run("modulus_triple", [] {
    struct Case {
      double a, modulus;
      bool stable;
    };
    const Case cases[] = {{0.99, std::sqrt(0.99), true},
                          {1.0, 1.0, true},
                          {1.05, std::sqrt(1.05), false}};
    for (const Case& c : cases) {
      EigenSharpness e = eigen_sharpness(c.a);
      if (e.stable != c.stable || std::abs(e.modulus - c.modulus) > 1e-12)
        return pass_if(false, "a = " + fmt(c.a) + " gave modulus " + fmt(e.modulus));
    }
    return pass_if(true, "moduli sqrt(a) on the complex branch, boundary at a = 1");
  });

  r.run("recurrence_boundary", [] {
    double bounded = two_step_recurrence_max(1.0, 10000, 1.0, 1.0);
    double unstable = two_step_recurrence_max(1.05, 10000, 1.0, 1.0);
    bool ok = bounded <= 10.0 && unstable > 1e3;
    return pass_if(ok, "max at a=1.0: " + fmt(bounded) + "; max at a=1.05: " + fmt(unstable));
  });

  r.run("solver_matches_recurrence", [] {
    RunConfig cfg = preset_config("eigen_sharpness", {{"a", 0.9}, {"horizon", 120.0}});
    DelayEquation eq = equation_from_config(cfg);
    History h = history_from_config(eq, cfg);  // x(1) = 1, history 1
    Solution sol = solve_ivp(eq, 1.0, h);
    double prev = 1.0, cur = 1.0;
    const Grid& g = *eq.grid;
    for (std::size_t i = sol.start_index + 1; i < g.size(); ++i) {
      double next = cur - 0.9 * prev;
      prev = cur;
      cur = next;
      if (sol.x.values()[i] != cur)
        return pass_if(false, "first mismatch at t = " + fmt(g.t(i)));
    }
    return pass_if(true, "nodal values match the recurrence bit for bit");
  });
}

}  // namespace

ExampleReport verify_example(const std::string& name) {
  if (!is_example(name))
    throw Error(ErrorCode::UnknownExample, "no example named '" + name + "'");
  ExampleReport report;
  report.example = name;
  CheckRunner r(report);
  if (name == "example_2_1") verify_example_2_1(r);
  else if (name == "example_5_1") verify_example_5_1(r);
  else if (name == "example_5_2") verify_example_5_2(r);
  else if (name == "example_5_3") verify_example_5_3(r);
  else if (name == "pantograph") verify_pantograph(r);
  else if (name == "eigen_sharpness") verify_eigen(r);
  else if (name == "r_const") {
    r.run("field_bounded_by_one", [] {
      RunConfig cfg = preset_config("r_const", {{"a", 0.3}, {"tau", 3.0}});
      DelayEquation eq = equation_from_config(cfg);
      FundamentalField field = fundamental_solution(eq, default_s_samples(eq, 32), 2);
      double sup = 0.0;
      const Grid& g = *eq.grid;
      for (std::size_t j = 0; j < field.columns(); ++j) {
        const Solution& col = field.column(j);
        for (std::size_t i = col.start_index; i < g.size(); ++i)
          sup = std::max(sup, std::abs(col.x.values()[i]));
      }
      return pass_if(sup <= 1.0 + 1e-6, "sup |X| = " + fmt(sup) + " with a*tau = 0.9");
    });
    r.run("classify_exponential", [] {
      RunConfig cfg = preset_config("r_const");
      DelayEquation eq = equation_from_config(cfg);
      StabilityCertificate cert = classify(eq);
      return pass_if(cert.verdict == Verdict::UniformlyExponentiallyStable,
                     std::string("verdict ") + verdict_name(cert.verdict));
    });
  }
  return report;
}

}  // namespace tsdde
