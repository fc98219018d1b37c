// Acceptance suite: re-derives the library's published numbers end to end
// and prints one pass/fail line per criterion. Exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tsdde/presets.hpp"
#include "tsdde/stability.hpp"

using namespace tsdde;

namespace {

int g_failures = 0;

void criterion(int number, const std::string& name, const std::function<bool(std::string&)>& fn) {
  std::string detail;
  bool ok = false;
  auto start = std::chrono::steady_clock::now();
  try {
    ok = fn(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%s criterion %2d: %s — %s (%.2f s)\n", ok ? "PASS" : "FAIL", number,
              name.c_str(), detail.c_str(), elapsed);
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

const ExampleCheck* find_check(const ExampleReport& r, const std::string& name) {
  for (const auto& c : r.checks)
    if (c.name == name) return &c;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Randomized instance helpers
// ---------------------------------------------------------------------------

// All geometry on the lattice q*Z with dyadic steps: breaking points of the
// delay land on exact grid nodes, which the fixed-step solver and the
// representation formula rely on.
constexpr double kLattice = 0.25;
constexpr double kStep = 0.25 / 32.0;

TimeScalePtr lattice_scale(std::mt19937& rng, int kind, double start, double length) {
  std::uniform_int_distribution<int> seg(2, 6);
  std::uniform_int_distribution<int> gap(1, 4);
  std::vector<Segment> segs;
  double t = start;
  double t_end = start + length;
  if (kind == 0) return TimeScale::create({Segment::interval(start, start + length)});
  while (t < t_end) {
    if (kind == 1 || seg(rng) % 2 == 0) {
      segs.push_back(Segment::point(t));
    } else {
      double len = kLattice * seg(rng);
      segs.push_back(Segment::interval(t, t + len));
      t += len;
    }
    t += kLattice * gap(rng);
  }
  return TimeScale::create(std::move(segs));
}

std::function<double(double)> smooth_coeff(std::mt19937& rng, double base_lo, double base_hi) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double base = base_lo + (base_hi - base_lo) * unit(rng);
  double amp = 0.4 * base * unit(rng);
  double freq = 0.3 + 1.5 * unit(rng);
  double phase = 6.0 * unit(rng);
  return [=](double t) { return base + amp * std::tanh(std::sin(freq * t + phase)); };
}

std::function<double(double)> random_poly(std::mt19937& rng) {
  std::uniform_real_distribution<double> c(-1.0, 1.0);
  double c0 = c(rng), c1 = c(rng), c2 = c(rng);
  return [=](double t) { return c0 + 0.3 * c1 * t + 0.05 * c2 * t * t; };
}

struct RandomEq {
  DelayEquation eq;
  bool a2_route = false;
};

// Random equation rescaled so the requested window condition hits `target`.
RandomEq random_equation(std::mt19937& rng, int kind, bool strict_a2, double target) {
  std::uniform_int_distribution<int> delay_pick(2, 6);
  TimeScalePtr ts = lattice_scale(rng, kind, -2.0, 9.0);
  ExprPtr alpha;
  bool rho_delay = kind == 1;  // isolated scales use the backward jump
  if (rho_delay)
    alpha = parse_expr(strict_a2 ? "rho2(t)" : "rho(t)");
  else {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "t - %.17g", kLattice * delay_pick(rng));
    alpha = parse_expr(buf);
  }
  auto probe = build_grid(ts, kStep);
  double t0 = probe->t(probe->index_ge(ts->t_min() + 2.0));
  auto base = smooth_coeff(rng, 0.2, 0.8);
  DelayEquation trial = make_delay_equation(ts, base, alpha, t0, kStep);
  ConditionReport window = strict_a2 ? strict_condition_A2(trial) : strict_condition_A1(trial);
  double scale = window.value > 0.0 ? target / window.value : 1.0;
  auto scaled = [base, scale](double t) { return scale * base(t); };
  RandomEq out{make_delay_equation(ts, scaled, alpha, t0, kStep), strict_a2};
  return out;
}

double sup_abs_field(const DelayEquation& eq, int workers) {
  FundamentalField field = fundamental_solution(eq, default_s_samples(eq, 48), workers);
  const Grid& g = *eq.grid;
  double sup = 0.0;
  for (std::size_t j = 0; j < field.columns(); ++j) {
    const Solution& col = field.column(j);
    for (std::size_t i = col.start_index; i < g.size(); ++i)
      sup = std::max(sup, std::abs(col.x.values()[i]));
  }
  return sup;
}

// Trapezoid of w(alpha_star(eta)) * A(eta) over [lo, hi] on grid nodes with
// clipped partial end cells; ample accuracy for strict inequalities.
double weighted_window_integral(const DelayEquation& eq, const ExpCumulative& cum, double target,
                             double lo, double hi) {
  const Grid& g = *eq.grid;
  if (hi <= lo) return 0.0;
  auto integrand = [&](std::size_t j) {
    double as = std::max(eq.alpha_star_v[j], eq.ts->t_min());
    return cum.value(target, as) * eq.a_point[j];
  };
  std::size_t ja = g.index_ge(lo), jb = g.index_le(hi);
  double acc = 0.0;
  if (ja > 0 && g.t(ja) > lo && g.dense_link(ja - 1))
    acc += (g.t(ja) - lo) * integrand(ja);  // clipped left sliver
  for (std::size_t j = ja; j < jb; ++j) {
    if (g.scattered(j))
      acc += g.mu_at(j) * integrand(j);
    else
      acc += 0.5 * (integrand(j) + integrand(j + 1)) * (g.t(j + 1) - g.t(j));
  }
  if (g.t(jb) < hi && g.dense_link(jb)) acc += (hi - g.t(jb)) * integrand(jb);
  return acc;
}

}  // namespace

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

int main() {
  criterion(1, "alternating-scale closed form at fine step under 5 s", [](std::string& d) {
    ExampleReport r = verify_example("example_2_1");
    const ExampleCheck* c = find_check(r, "closed_form_x_2k");
    if (!c) return false;
    d = c->detail + ", " + format_double(c->elapsed_seconds) + " s";
    return c->pass && c->elapsed_seconds < 5.0;
  });

  criterion(2, "unbounded-coefficient example: strict sup and verdicts under 10 s",
            [](std::string& d) {
              ExampleReport r = verify_example("example_5_1");
              const ExampleCheck* sup = find_check(r, "strict_condition_sup_equals_a");
              const ExampleCheck* ues = find_check(r, "classify_a_0.5_exponential");
              const ExampleCheck* us = find_check(r, "classify_a_1.0_uniform");
              if (!sup || !ues || !us) return false;
              double classify_time = ues->elapsed_seconds + us->elapsed_seconds;
              d = sup->detail + "; " + ues->detail + "; " + us->detail + "; classify " +
                  format_double(classify_time) + " s";
              return sup->pass && ues->pass && us->pass && classify_time < 10.0;
            });

  criterion(3, "unbounded-graininess example: segment maxima and asymptotic verdict",
            [](std::string& d) {
              ExampleReport r = verify_example("example_5_2");
              const ExampleCheck* seg = find_check(r, "segment_delay_maxima");
              const ExampleCheck* gas = find_check(r, "classify_a_0.5_asymptotic_not_exponential");
              if (!seg || !gas) return false;
              d = seg->detail + "; " + gas->detail;
              return seg->pass && gas->pass;
            });

  criterion(4, "two-letter periodic example: exact windows, verdict, envelope",
            [](std::string& d) {
              ExampleReport r = verify_example("example_5_3");
              bool all = r.all_pass;
              d.clear();
              for (const auto& c : r.checks) d += c.detail + "; ";
              return all;
            });

  criterion(5, "two-step recurrence boundary over ten thousand steps", [](std::string& d) {
    double bounded = two_step_recurrence_max(1.0, 10000, 1.0, 1.0);
    double unstable = two_step_recurrence_max(1.05, 10000, 1.0, 1.0);
    d = "max|x| at a=1.0: " + format_double(bounded) +
        "; at a=1.05: " + format_double(unstable);
    return bounded <= 10.0 && unstable > 1e3;
  });

  criterion(6, "exponential conformance and algebra over 1000 random cases", [](std::string& d) {
    // closed products on uniform-difference and quantum scales
    double worst_closed = 0.0;
    std::mt19937 rng(611);
    std::uniform_real_distribution<double> fdist(-0.4, 1.5);
    for (double h : {0.5, 1.0, 2.0}) {
      auto hz = TimeScale::h_integers(h, 0.0, 20.0 * h);
      auto gh = build_grid(hz, h);
      for (int rep = 0; rep < 20; ++rep) {
        double fv = fdist(rng);
        if (std::abs(1.0 + h * fv) < 1e-3) continue;
        GridFunction f = GridFunction::constant(gh, fv);
        for (int n : {3, 7, 15}) {
          double expect = 1.0;
          for (int k = 0; k < n; ++k) expect *= 1.0 + h * fv;
          double got = exp_fn(*hz, f, 0.0, n * h);
          worst_closed = std::max(worst_closed, std::abs(got - expect) / std::abs(expect));
        }
      }
    }
    auto q2 = TimeScale::q_scale(2.0, 1.0, 1024.0);
    auto gq = build_grid(q2, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
      double c = fdist(rng);
      GridFunction f = GridFunction::sample(gq, [c](double t) { return c / t; });
      double expect = 1.0;
      bool fine = true;
      for (double t = 1.0; t < 256.0 - 1e-9; t *= 2.0) {
        double factor = 1.0 + (2.0 - 1.0) * t * (c / t);
        if (std::abs(factor) < 1e-3) fine = false;
        expect *= factor;
      }
      if (!fine) continue;
      double got = exp_fn(*q2, f, 1.0, 256.0);
      worst_closed = std::max(worst_closed, std::abs(got - expect) / std::abs(expect));
    }
    if (worst_closed > 1e-12) {
      d = "closed-form deviation " + format_double(worst_closed);
      return false;
    }

    // semigroup and circle-plus product over 1000 randomized cases
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> kindpick(0, 2);
    double worst_semi = 0.0, worst_prod = 0.0;
    for (int scale_case = 0; scale_case < 100; ++scale_case) {
      auto ts = lattice_scale(rng, kindpick(rng), 0.0, 8.0);
      auto g = build_grid(ts, 0.05);
      auto f_fn = smooth_coeff(rng, 0.2, 0.9);
      auto g_fn = smooth_coeff(rng, 0.2, 0.9);
      GridFunction f = GridFunction::sample(g, f_fn);
      GridFunction gg = GridFunction::sample(g, g_fn);
      std::vector<double> sum_dense(g->size()), sum_point(g->size());
      for (std::size_t i = 0; i < g->size(); ++i) {
        double mu = g->scattered(i) ? g->mu_at(i) : 0.0;
        sum_dense[i] = f.values()[i] + gg.values()[i];
        sum_point[i] = circle_plus(f.values()[i], gg.values()[i], mu);
      }
      ExpCumulative e_f(ts, f);
      ExpCumulative e_g(ts, gg);
      ExpCumulative e_fog(ts, GridFunction(g, std::move(sum_dense)), sum_point);
      for (int c = 0; c < 10; ++c) {
        auto node = [&]() { return g->t(static_cast<std::size_t>(unit(rng) * (g->size() - 1))); };
        double a = node(), b = node(), e = node();
        double r = std::min({a, b, e}), t = std::max({a, b, e});
        double s = a + b + e - r - t;
        double semi = std::abs(e_f.value(t, s) * e_f.value(s, r) - e_f.value(t, r));
        worst_semi = std::max(worst_semi, semi / std::abs(e_f.value(t, r)));
        double prod = std::abs(e_f.value(t, r) * e_g.value(t, r) - e_fog.value(t, r));
        worst_prod = std::max(worst_prod, prod / std::abs(e_fog.value(t, r)));
      }
    }
    d = "closed " + format_double(worst_closed) + ", semigroup " + format_double(worst_semi) +
        ", product " + format_double(worst_prod);
    return worst_semi <= 1e-10 && worst_prod <= 1e-10;
  });

  criterion(7, "representation formula matches integration on 50 random instances",
            [](std::string& d) {
              std::mt19937 rng(707);
              double worst_rel = 0.0;
              for (int inst = 0; inst < 50; ++inst) {
                int kind = inst % 3;  // interval, isolated, alternating unit intervals
                TimeScalePtr ts;
                ExprPtr alpha;
                std::uniform_int_distribution<int> delay_pick(2, 6);
                char buf[64];
                std::snprintf(buf, sizeof(buf), "t - %.17g", kLattice * delay_pick(rng));
                if (kind == 2) {
                  ts = TimeScale::p11(-2.0, 9.0);
                  alpha = parse_expr(buf);
                } else {
                  ts = lattice_scale(rng, kind, -2.0, 8.0);
                  alpha = kind == 1 ? parse_expr("rho(t)") : parse_expr(buf);
                }
                auto probe = build_grid(ts, kStep);
                double t0 = probe->t(probe->index_ge(ts->t_min() + 2.0));
                auto a_fn = smooth_coeff(rng, 0.2, 0.7);
                DelayEquation eq = make_delay_equation(ts, a_fn, alpha, t0, kStep);
                const Grid& g = *eq.grid;
                History h = make_history(eq, t0, 0.5 + 0.8 * (inst % 5) / 4.0,
                                         random_poly(rng));
                GridFunction forcing = GridFunction::sample(eq.grid, random_poly(rng));
                Solution direct = solve_ivp(eq, t0, h, &forcing);
                std::vector<double> nodes;
                for (std::size_t i = eq.i0; i < g.size(); ++i) nodes.push_back(g.t(i));
                FundamentalField field = fundamental_solution(eq, nodes, 2);
                double max_abs = 0.0;
                for (std::size_t i = direct.start_index; i < g.size(); ++i)
                  max_abs = std::max(max_abs, std::abs(direct.x.values()[i]));
                std::size_t stride = std::max<std::size_t>(1, (g.size() - eq.i0) / 12);
                for (std::size_t i = eq.i0; i < g.size(); i += stride) {
                  double rep = representation_value(eq, t0, h, &forcing, field, g.t(i));
                  double rel =
                      std::abs(rep - direct.x.values()[i]) / (1.0 + max_abs);
                  worst_rel = std::max(worst_rel, rel);
                }
              }
              d = "worst |rep - direct| / (1 + max|x|) = " + format_double(worst_rel);
              return worst_rel <= 1e-8;
            });

  criterion(8, "constructed-rate window inequalities hold pointwise on 25+25 strict instances",
            [](std::string& d) {
              std::mt19937 rng(808);
              std::uniform_real_distribution<double> tdist(0.3, 0.9);
              double worst_margin = 1e300, worst_resid = 0.0;
              for (int inst = 0; inst < 50; ++inst) {
                bool a2 = inst >= 25;
                int kind = a2 ? (inst % 2 ? 1 : 0) : inst % 3;
                RandomEq re = random_equation(rng, kind, a2, tdist(rng));
                const DelayEquation& eq = re.eq;
                ConditionReport strict =
                    a2 ? strict_condition_A2(eq) : strict_condition_A1(eq);
                if (!strict.satisfied) return false;
                double nu0 = select_nu0(strict.value);
                double l0 = a2 ? find_lambda0_A2(nu0) : find_lambda0_A1(nu0);
                double resid =
                    a2 ? std::abs((1.0 - l0) - nu0 * std::exp(3.0 * l0 * nu0 / (1.0 - nu0)))
                       : std::abs((1.0 - l0) / (1.0 + l0 * nu0) -
                                  nu0 * std::exp(2.0 * l0 * nu0));
                worst_resid = std::max(worst_resid, resid);
                if (resid > 1e-12) return false;

                // exponent: lambda0 A (A1) or lambda0 ominus(-A) (A2)
                const Grid& g = *eq.grid;
                std::vector<double> dense(eq.a_dense.values()), point(g.size());
                for (double& v : dense) v *= l0;
                for (std::size_t i = 0; i < g.size(); ++i) {
                  double mu = g.scattered(i) ? g.mu_at(i) : 0.0;
                  double a_val = eq.a_point[i];
                  point[i] = a2 && mu > 0.0 ? l0 * a_val / (1.0 - a_val * mu) : l0 * a_val;
                  if (std::isnan(point[i])) point[i] = 0.0;
                }
                ExpCumulative cum(eq.ts, GridFunction(eq.grid, std::move(dense)), point);

                for (std::size_t i = eq.i0; i < g.size(); ++i) {
                  double t = g.t(i);
                  double lo = std::max(eq.alpha_star_v[i], eq.ts->t_min());
                  double mu = g.scattered(i) ? g.mu_at(i) : 0.0;
                  double hi, target, rhs;
                  if (a2) {
                    hi = t;
                    target = g.scattered(i) ? g.t(i + 1) : t;
                    rhs = 1.0 - l0;
                  } else {
                    hi = g.scattered(i) ? g.t(i + 1) : t;
                    target = t;
                    rhs = (1.0 - l0) / (1.0 + l0 * eq.a_point[i] * mu);
                  }
                  double lhs = weighted_window_integral(eq, cum, target, lo, hi);
                  worst_margin = std::min(worst_margin, rhs - lhs);
                  if (!(lhs < rhs)) {
                    d = "inequality failed at t = " + format_double(t);
                    return false;
                  }
                }
              }
              d = "worst margin " + format_double(worst_margin) + ", worst phi-residual " +
                  format_double(worst_resid);
              return true;
            });

  criterion(9, "unit bound on the field for 50 weak-condition instances", [](std::string& d) {
    std::mt19937 rng(909);
    std::uniform_real_distribution<double> tdist(0.4, 1.0);
    double worst = 0.0;
    for (int inst = 0; inst < 50; ++inst) {
      int kind = inst % 3;
      bool rho_delay = kind == 1;
      double target = tdist(rng);
      // rescale against the window the applicable bound uses
      TimeScalePtr ts = lattice_scale(rng, kind, -2.0, 9.0);
      ExprPtr alpha;
      char buf[64];
      std::uniform_int_distribution<int> delay_pick(2, 6);
      std::snprintf(buf, sizeof(buf), "t - %.17g", kLattice * delay_pick(rng));
      alpha = rho_delay ? parse_expr("rho2(t)") : parse_expr(buf);
      auto probe = build_grid(ts, kStep);
      double t0 = probe->t(probe->index_ge(ts->t_min() + 2.0));
      auto base = smooth_coeff(rng, 0.2, 0.8);
      DelayEquation trial = make_delay_equation(ts, base, alpha, t0, kStep);
      ConditionReport window =
          rho_delay ? weak_condition_A2(trial) : weak_condition_A1(trial);
      double scale = window.value > 0.0 ? target / window.value : 1.0;
      auto scaled = [base, scale](double t) { return scale * base(t); };
      DelayEquation eq = make_delay_equation(ts, scaled, alpha, t0, kStep);
      worst = std::max(worst, sup_abs_field(eq, 2));
    }
    d = "sup |X| over all instances = " + format_double(worst);
    return worst <= 1.0 + 1e-6;
  });

  criterion(10, "pantograph pull-back obeys the fitted power law", [](std::string& d) {
    ExampleReport r = verify_example("pantograph");
    bool all = r.all_pass;
    d.clear();
    for (const auto& c : r.checks) d += c.detail + "; ";
    return all;
  });

  criterion(11, "integrator shows fourth-order error decay", [](std::string& d) {
    auto solve_at = [](double h) {
      auto ts = TimeScale::reals(-3.0, 30.0);
      DelayEquation eq = make_delay_equation(ts, expr_number(0.3), parse_expr("t - 3"), 0.0, h);
      History hist = make_history(eq, 0.0, 1.0, [](double) { return 1.0; });
      return std::make_pair(solve_ivp(eq, 0.0, hist), eq);
    };
    auto [ref, eq_ref] = solve_at(0.05 / 8.0);
    auto err = [&](double h) {
      auto [sol, eq] = solve_at(h);
      double worst = 0.0;
      for (double t = 1.0; t <= 30.0; t += 1.0)
        worst = std::max(worst, std::abs(sol.value(t) - ref.value(t)));
      return worst;
    };
    double e1 = err(0.1), e2 = err(0.05);
    double ratio = e1 / e2;
    d = "errors " + format_double(e1) + " vs " + format_double(e2) + ", ratio " +
        format_double(ratio);
    return ratio >= 8.0 && ratio <= 32.0;
  });

  criterion(12, "decaying field without summable delayed mass stays Inconclusive",
            [](std::string& d) {
              ExampleReport r = verify_example("example_2_1");
              const ExampleCheck* chi = find_check(r, "chi_divergent_and_inconclusive");
              const ExampleCheck* decay = find_check(r, "field_decays_under_envelope");
              if (!chi || !decay) return false;
              d = chi->detail + "; " + decay->detail;
              return chi->pass && decay->pass;
            });

  if (g_failures == 0) {
    std::printf("all criteria passed\n");
    return 0;
  }
  std::printf("%d criterion(s) failed\n", g_failures);
  return 1;
}
