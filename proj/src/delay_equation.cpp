#include "tsdde/delay_equation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace tsdde {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

// Cubic Hermite polynomial of one integration step, used for dense output
// and for delayed lookups that land inside the step being computed.
struct StepPoly {
  double t0 = 0.0, t1 = 0.0;
  double a = 0.0, b = 0.0, c = 0.0, d = 0.0;  // in u = (t - t0)/(t1 - t0)

  StepPoly() = default;
  StepPoly(double t0_, double t1_, double x0, double d0, double x1, double d1)
      : t0(t0_), t1(t1_) {
    double h = t1 - t0;
    a = x0;
    b = d0 * h;
    c = 3.0 * (x1 - x0) - h * (2.0 * d0 + d1);
    d = 2.0 * (x0 - x1) + h * (d0 + d1);
  }

  double eval(double t) const {
    double u = (t - t0) / (t1 - t0);
    return a + u * (b + u * (c + u * d));
  }
};

}  // namespace

double DelayEquation::alpha_value(double t) const {
  double raw = eval_expr(*alpha_expr, t, ts.get());
  if (ts->contains(raw)) return ts->snap(raw);
  return ts->project_down(raw);
}

namespace {

DelayEquation build_equation(TimeScalePtr ts, ExprPtr a_expr,
                             std::function<double(double)> a_fn, ExprPtr alpha, double t0,
                             double h_max) {
  DelayEquation eq;
  eq.ts = ts;
  eq.grid = build_grid(ts, h_max, {ts->snap(t0)});
  eq.alpha_expr = std::move(alpha);
  eq.a_expr = std::move(a_expr);
  eq.a_fn = std::move(a_fn);
  eq.t0 = ts->snap(t0);
  int i0 = eq.grid->index_of(eq.t0);
  if (i0 < 0)
    throw Error(ErrorCode::NotInScale, "start time t0 = " + num(t0) + " is not a grid node");
  eq.i0 = static_cast<std::size_t>(i0);

  const Grid& g = *eq.grid;
  std::size_t n = g.size();
  eq.a_point.assign(n, kNaN);
  eq.alpha_point.assign(n, kNaN);
  eq.alpha_end.assign(n, kNaN);
  eq.a_end.assign(n, kNaN);
  eq.alpha_star_v.assign(n, kNaN);

  // The coefficient is sampled over the whole grid: condition windows with
  // lower limit alpha_star(t) reach below t0 into the history range.
  for (std::size_t i = 0; i < n; ++i) {
    double t = g.t(i);
    bool ok = true;
    try {
      eq.a_point[i] = eq.a_fn(t);
    } catch (const Error& err) {
      // The horizon node has no forward jump; a coefficient written in terms
      // of mu(t) cannot be evaluated there and is never used there either.
      if (i + 1 == n && err.code() == ErrorCode::HorizonExceeded) {
        eq.a_point[i] = 0.0;
      } else if (i < eq.i0) {
        ok = false;
      } else {
        throw;
      }
    } catch (...) {
      if (i >= eq.i0) throw;
      ok = false;
    }
    if (!ok) eq.a_point[i] = kNaN;  // extended below after the scan
    if (i >= eq.i0 && !(eq.a_point[i] >= 0.0))
      throw Error(ErrorCode::BadConfig, "coefficient A(" + num(t) + ") = " +
                                            num(eq.a_point[i]) + " is negative");
    eq.a_end[i] = eq.a_point[i];
    if (i >= eq.i0) {
      double raw;
      try {
        raw = eval_expr(*eq.alpha_expr, t, ts.get());
      } catch (const Error& err) {
        // A delay written via mu/sigma cannot be evaluated at the horizon
        // node; no step ever starts there.
        if (i + 1 == n && err.code() == ErrorCode::HorizonExceeded)
          raw = t;
        else
          throw;
      }
      if (ts->contains(raw)) {
        eq.alpha_point[i] = ts->snap(raw);
      } else {
        eq.alpha_point[i] = ts->project_down(raw);
        ++eq.projection_warnings;
      }
      eq.alpha_end[i] = eq.alpha_point[i];
    }
  }
  // Constant extension where A was not evaluable below t0.
  for (std::size_t k = eq.i0; k-- > 0;) {
    if (std::isnan(eq.a_point[k])) {
      eq.a_point[k] = eq.a_point[k + 1];
      eq.a_end[k] = eq.a_end[k + 1];
    }
  }

  // Dense-side limits wherever a dense cell ends: rd-continuity lets the
  // point value differ from the limit at run ends, and the projected delay
  // can switch branches at interior nodes too; the limits feed the dense
  // quadrature and the continuous stepping, the point values feed jumps.
  for (std::size_t i = 1; i < n; ++i) {
    if (!g.dense_link(i - 1)) continue;
    double h_cell = g.t(i) - g.t(i - 1);
    double t_eps = g.t(i) - 1e-5 * h_cell;
    try {
      eq.a_end[i] = eq.a_fn(t_eps);
    } catch (...) {
      if (i >= eq.i0) throw;
    }
    if (i > eq.i0) {
      double raw = eval_expr(*eq.alpha_expr, t_eps, ts.get());
      eq.alpha_end[i] = ts->contains(raw) ? ts->snap(raw) : ts->project_down(raw);
    }
  }

  std::vector<double> a_dense_vals(eq.a_end);
  eq.a_dense = GridFunction(eq.grid, std::move(a_dense_vals), Interp::cubic_hermite);

  // Suffix minimum of the delayed argument over grid nodes; constant
  // extension below t0 (window integrands may evaluate it there).
  double running = std::numeric_limits<double>::infinity();
  for (std::size_t k = n; k-- > eq.i0;) {
    running = std::min(running, eq.alpha_point[k]);
    eq.alpha_star_v[k] = running;
  }
  for (std::size_t k = eq.i0; k-- > 0;) eq.alpha_star_v[k] = running;
  return eq;
}

}  // namespace

DelayEquation make_delay_equation(TimeScalePtr ts, ExprPtr a, ExprPtr alpha, double t0,
                                  double h_max) {
  const TimeScale* raw = ts.get();
  ExprPtr a_copy = a;
  auto fn = [a_copy, raw](double t) { return eval_expr(*a_copy, t, raw); };
  return build_equation(std::move(ts), std::move(a), fn, std::move(alpha), t0, h_max);
}

DelayEquation make_delay_equation(TimeScalePtr ts, std::function<double(double)> a_fn,
                                  ExprPtr alpha, double t0, double h_max) {
  return build_equation(std::move(ts), nullptr, std::move(a_fn), std::move(alpha), t0, h_max);
}

double alpha_star(const DelayEquation& eq, double t) {
  const Grid& g = *eq.grid;
  std::size_t i = g.index_ge(t);  // throws HorizonExceeded above the last node
  if (i < eq.i0) i = eq.i0;
  return eq.alpha_star_v[i];
}

AlphaInv alpha_inv(const DelayEquation& eq, double t) {
  const Grid& g = *eq.grid;
  double tol = eq.ts->membership_tol();
  std::size_t lo = eq.i0, hi = g.size();
  // alpha_star_v is nondecreasing on [i0, n): find last index <= t + tol.
  auto begin = eq.alpha_star_v.begin() + static_cast<std::ptrdiff_t>(lo);
  auto end = eq.alpha_star_v.begin() + static_cast<std::ptrdiff_t>(hi);
  auto it = std::upper_bound(begin, end, t + tol);
  if (it == begin) return AlphaInv{g.t(lo), false};  // empty set; clamp at t0
  std::size_t j = static_cast<std::size_t>(it - eq.alpha_star_v.begin()) - 1;
  if (j + 1 == g.size()) return AlphaInv{g.t(j), true};
  return AlphaInv{g.t(j), false};
}

History make_history(const DelayEquation& eq, double s, double x0,
                     const std::function<double(double)>& phi) {
  const Grid& g = *eq.grid;
  s = eq.ts->snap(s);
  History h;
  h.x0 = x0;
  h.left = std::max(alpha_star(eq, s), eq.ts->t_min());
  std::vector<double> vals(g.size(), 0.0);
  int si = g.index_of(s);
  if (si < 0) throw Error(ErrorCode::NotInScale, "history start " + num(s) + " off the grid");
  // Sample the whole grid so interpolation stays clean at the domain edges;
  // nodes where phi cannot be evaluated reuse the neighboring sample.
  for (std::size_t k = static_cast<std::size_t>(si) + 1; k-- > 0;) {
    try {
      vals[k] = phi(g.t(k));
    } catch (...) {
      vals[k] = (k + 1 <= static_cast<std::size_t>(si)) ? vals[k + 1] : 0.0;
    }
  }
  for (std::size_t k = static_cast<std::size_t>(si) + 1; k < g.size(); ++k) {
    try {
      vals[k] = phi(g.t(k));
    } catch (...) {
      vals[k] = vals[k - 1];
    }
  }
  h.phi = GridFunction(eq.grid, std::move(vals), Interp::cubic_hermite);
  return h;
}

double Solution::value(double t) const {
  if (t < s - x.grid()->scale()->membership_tol())
    throw Error(ErrorCode::NotInScale,
                "solution queried at " + num(t) + " before its start " + num(s));
  return x.value_at(x.grid()->scale()->snap(t));
}

// ---------------------------------------------------------------------------
// solve_ivp
// ---------------------------------------------------------------------------

namespace {

class Stepper {
 public:
  Stepper(const DelayEquation& eq, double s, const History& h, const GridFunction* forcing)
      : eq_(eq), g_(*eq.grid), hist_(h), forcing_(forcing), s_(s) {
    mtol_ = eq.ts->membership_tol();
    n_ = g_.size();
    values_.assign(n_, 0.0);
    derivs_.assign(n_, 0.0);
    derivs_left_.assign(n_, 0.0);
  }

  Solution run() {
    int si = g_.index_of(s_);
    if (si < 0)
      throw Error(ErrorCode::NotInScale, "start point " + num(s_) + " is not a grid node");
    if (s_ < eq_.t0 - mtol_)
      throw Error(ErrorCode::BadConfig, "start point " + num(s_) + " is before t0");
    si_ = static_cast<std::size_t>(si);
    values_[si_] = hist_.x0;

    for (std::size_t i = si_; i + 1 < n_; ++i) {
      if (g_.scattered(i))
        jump_step(i);
      else
        dense_step(i);
    }
    Solution sol;
    sol.x = GridFunction(eq_.grid, std::move(values_), std::move(derivs_),
                         std::move(derivs_left_), Interp::cubic_hermite);
    sol.start_index = si_;
    sol.s = s_;
    return sol;
  }

 private:
  double forcing_at(double t) const { return forcing_ ? forcing_->value_at(t) : 0.0; }

  double history_value(double v) const {
    if (hist_.phi.empty()) return 0.0;
    if (v >= hist_.left - mtol_) return hist_.phi.value_at(std::max(v, hist_.left));
    throw Error(ErrorCode::LookupBeforeHistory,
                "delayed argument " + num(v) + " is below the history domain start " +
                    num(hist_.left));
  }

  double past_value(double v) const {
    if (v >= s_ - mtol_) {
      int j = g_.index_of(v);
      if (j >= 0) return values_[static_cast<std::size_t>(j)];
      std::size_t jc = g_.index_le(v);
      if (!g_.dense_link(jc))
        throw Error(ErrorCode::NotInScale, "delayed lookup at " + num(v) + " inside a gap");
      StepPoly p(g_.t(jc), g_.t(jc + 1), values_[jc], derivs_[jc], values_[jc + 1],
                 derivs_left_[jc + 1]);
      return p.eval(v);
    }
    return history_value(v);
  }

  double lookup(double v, double tau, double x_stage, std::size_t i, const StepPoly* cur,
                double fallback_slope, bool& overlap, double stage_slack = 0.0,
                bool seam_history = false) const {
    double vtol = std::max(eq_.vanish_tol * (1.0 + std::abs(tau)), stage_slack);
    if (v > tau + vtol)
      throw Error(ErrorCode::DelayAheadError,
                  "alpha(" + num(tau) + ") = " + num(v) + " is ahead of t");
    if (std::abs(v - tau) <= vtol) return x_stage;  // vanishing delay
    // Left-limit stage at the breaking point alpha = s: the delayed value
    // jumps from the history to x0 there, and this stage wants the history
    // side.
    if (seam_history && std::abs(v - s_) <= mtol_) return history_value(s_);
    if (v <= g_.t(i) + mtol_) return past_value(v);
    // Delayed argument inside the step being computed.
    overlap = true;
    if (cur) return cur->eval(v);
    if (prev_valid_) return prev_poly_.eval(v);
    return values_[i] + (v - g_.t(i)) * fallback_slope;
  }

  void jump_step(std::size_t i) {
    double t = g_.t(i);
    double v = eq_.alpha_point[i];
    bool overlap = false;
    double xd = lookup(v, t, values_[i], i, nullptr, 0.0, overlap);
    double f = -eq_.a_point[i] * xd + forcing_at(t);
    derivs_[i] = f;  // the Delta-derivative; interpolation never uses it
    values_[i + 1] = values_[i] + g_.mu_at(i) * f;
    prev_valid_ = false;
  }

  struct StageData {
    double a;
    double alpha;
    double f;
    bool seam_history = false;
  };

  StageData left_stage(std::size_t i) const {
    return {eq_.a_point[i], eq_.alpha_point[i], forcing_at(g_.t(i)), false};
  }

  // The cell's right-end stage integrates left limits. The nudged
  // evaluations stored in a_end/alpha_end detect branch switches; when
  // nothing switched, the exact point values avoid the nudge bias. A
  // transversal crossing of the start point resolves to the history side.
  StageData right_stage(std::size_t i) const {
    double h_cell = g_.t(i + 1) - g_.t(i);
    double nudge = 1e-5 * h_cell;
    double vp = eq_.alpha_point[i + 1], vl = eq_.alpha_end[i + 1];
    double ap = eq_.a_point[i + 1], al = eq_.a_end[i + 1];
    StageData sd;
    sd.f = forcing_at(g_.t(i + 1));
    sd.a = std::abs(al - ap) <= 1e-2 * (std::abs(ap) + std::abs(al)) ? ap : al;
    if (std::abs(vl - vp) <= 1e-2 * h_cell) {
      sd.alpha = vp;
      sd.seam_history = std::abs(vp - s_) <= mtol_ && vl < vp - 0.25 * nudge;
    } else {
      sd.alpha = vl;
    }
    return sd;
  }

  StageData mid_stage(std::size_t i) const {
    double tau = 0.5 * (g_.t(i) + g_.t(i + 1));
    double raw = eval_expr(*eq_.alpha_expr, tau, eq_.ts.get());
    double al = eq_.ts->contains(raw) ? eq_.ts->snap(raw) : eq_.ts->project_down(raw);
    return {eq_.a_fn(tau), al, forcing_at(tau)};
  }

  void dense_step(std::size_t i) {
    double t0 = g_.t(i), t1 = g_.t(i + 1);
    double h = t1 - t0;
    double tm = 0.5 * (t0 + t1);
    StageData pl = left_stage(i);
    StageData pm = mid_stage(i);
    StageData pr = right_stage(i);

    double x0 = values_[i];
    double k1 = 0.0, x1 = 0.0, f1 = 0.0;
    StepPoly cur;
    bool have_cur = false;
    // The right-end stages integrate the left limit of the right-hand side;
    // pr carries evaluations of A and alpha nudged inside the cell, so a
    // delayed argument that crosses the start point lands on the history
    // side by itself. The slack keeps a nudged vanishing delay on the
    // vanishing branch.
    double slack = 2e-5 * h;
    for (int pass = 0; pass < 2; ++pass) {
      bool overlap = false;
      const StepPoly* cp = have_cur ? &cur : nullptr;
      k1 = -pl.a * lookup(pl.alpha, t0, x0, i, cp, 0.0, overlap) + pl.f;
      double k2 =
          -pm.a * lookup(pm.alpha, tm, x0 + 0.5 * h * k1, i, cp, k1, overlap) + pm.f;
      double k3 =
          -pm.a * lookup(pm.alpha, tm, x0 + 0.5 * h * k2, i, cp, k1, overlap) + pm.f;
      double k4 = -pr.a * lookup(pr.alpha, t1, x0 + h * k3, i, cp, k1, overlap, slack,
                                 pr.seam_history) +
                  pr.f;
      x1 = x0 + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      f1 = -pr.a * lookup(pr.alpha, t1, x1, i, cp, k1, overlap, slack, pr.seam_history) + pr.f;
      if (!overlap || have_cur) break;
      cur = StepPoly(t0, t1, x0, k1, x1, f1);
      have_cur = true;
    }
    values_[i + 1] = x1;
    derivs_[i] = k1;           // right-limit slope at the cell's left end
    derivs_left_[i + 1] = f1;  // left-limit slope at the cell's right end
    derivs_[i + 1] = f1;       // provisional; the next step's k1 replaces it
    prev_poly_ = StepPoly(t0, t1, x0, k1, x1, f1);
    prev_valid_ = true;
  }

  const DelayEquation& eq_;
  const Grid& g_;
  const History& hist_;
  const GridFunction* forcing_;
  double s_;
  double mtol_;
  std::size_t n_ = 0, si_ = 0;
  std::vector<double> values_, derivs_, derivs_left_;
  StepPoly prev_poly_;
  bool prev_valid_ = false;
};

}  // namespace

Solution solve_ivp(const DelayEquation& eq, double s, const History& h,
                   const GridFunction* forcing) {
  return Stepper(eq, eq.ts->snap(s), h, forcing).run();
}

// ---------------------------------------------------------------------------
// Fundamental field
// ---------------------------------------------------------------------------

FundamentalField::FundamentalField(const DelayEquation* eq, std::vector<double> s_values,
                                   std::vector<Solution> columns)
    : eq_(eq), s_values_(std::move(s_values)), columns_(std::move(columns)) {}

int FundamentalField::column_index(double s) const {
  double tol = eq_->ts->membership_tol();
  auto it = std::lower_bound(s_values_.begin(), s_values_.end(), s - tol);
  if (it != s_values_.end() && std::abs(*it - s) <= tol)
    return static_cast<int>(it - s_values_.begin());
  return -1;
}

double FundamentalField::value(double t, double s) const {
  int j = column_index(s);
  if (j < 0)
    throw Error(ErrorCode::MissingFieldSample,
                "no fundamental-solution column at s = " + num(s));
  if (t < s - eq_->ts->membership_tol()) return 0.0;
  return columns_[static_cast<std::size_t>(j)].value(t);
}

std::vector<double> default_s_samples(const DelayEquation& eq, std::size_t max_dense) {
  const Grid& g = *eq.grid;
  std::vector<double> out;
  std::vector<std::size_t> dense_pool;
  out.push_back(g.t(eq.i0));
  for (std::size_t i = eq.i0; i < g.size(); ++i) {
    if (g.scattered(i))
      out.push_back(g.t(i));
    else
      dense_pool.push_back(i);
  }
  if (!dense_pool.empty() && max_dense > 0) {
    std::size_t stride = std::max<std::size_t>(1, dense_pool.size() / max_dense);
    for (std::size_t k = 0; k < dense_pool.size(); k += stride)
      out.push_back(g.t(dense_pool[k]));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

FundamentalField fundamental_solution(const DelayEquation& eq, std::vector<double> s_samples,
                                      int workers) {
  std::sort(s_samples.begin(), s_samples.end());
  s_samples.erase(std::unique(s_samples.begin(), s_samples.end()), s_samples.end());
  std::vector<Solution> cols(s_samples.size());
  History empty;
  empty.x0 = 1.0;

  auto solve_one = [&](std::size_t j) { cols[j] = solve_ivp(eq, s_samples[j], empty); };

  int hw = static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, hw > 0 ? hw : 1));
  if (workers <= 1 || s_samples.size() < 2) {
    for (std::size_t j = 0; j < s_samples.size(); ++j) solve_one(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
      for (;;) {
        std::size_t j = next.fetch_add(1);
        if (j >= s_samples.size()) return;
        try {
          solve_one(j);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }
  return FundamentalField(&eq, std::move(s_samples), std::move(cols));
}

// ---------------------------------------------------------------------------
// Solution representation (variation of parameters)
// ---------------------------------------------------------------------------

namespace {

// 4-point Gauss-Legendre on [0, 1].
constexpr double kGaussU[4] = {0.069431844202973712, 0.33000947820757187,
                               0.66999052179242813, 0.93056815579702629};
constexpr double kGaussW[4] = {0.17392742256872693, 0.32607257743127307,
                               0.32607257743127307, 0.17392742256872693};

double forcing_value(const GridFunction* f, double t) { return f ? f->value_at(t) : 0.0; }

}  // namespace

double representation_value(const DelayEquation& eq, double s, const History& h,
                            const GridFunction* forcing, const FundamentalField& field,
                            double t) {
  const Grid& g = *eq.grid;
  double mtol = eq.ts->membership_tol();
  s = eq.ts->snap(s);
  t = eq.ts->snap(t);
  int si_raw = g.index_of(s), ti_raw = g.index_of(t);
  if (si_raw < 0 || ti_raw < 0)
    throw Error(ErrorCode::NotInScale, "representation bounds must be grid nodes");
  std::size_t si = static_cast<std::size_t>(si_raw), ti = static_cast<std::size_t>(ti_raw);

  double acc = field.value(t, s) * h.x0;
  if (ti <= si) return acc;

  // X(t, eta) per node; continuous in eta, so interpolation across dense
  // cells is sound. Scattered jump terms use the sigma-shifted column.
  std::vector<double> w_vals(g.size(), 0.0);
  for (std::size_t j = si; j <= ti; ++j) w_vals[j] = field.value(t, g.t(j));

  // X(t, .) has slope kinks at the iterated delay images of t (each column
  // carries the unit jump of its own data, and those seams reach back to
  // eta = alpha^k(t)). Slope estimation must not difference across them,
  // nor across the range edges where the array is zero-filled.
  // The kernel jumps just above any interior node that is the delayed image
  // of a scattered point: the jump term there probes a column exactly at its
  // unit start. Cells to the right of such a node integrate the other
  // branch, extrapolated from beyond the jump.
  std::vector<char> is_jump(g.size(), 0);
  for (std::size_t j = si; j <= ti; ++j) {
    if (!g.scattered(j)) continue;
    int bi = g.index_of(eq.alpha_point[j]);
    if (bi >= static_cast<int>(si) && bi < static_cast<int>(ti) &&
        g.dense_link(static_cast<std::size_t>(bi)))
      is_jump[static_cast<std::size_t>(bi)] = 1;
  }

  std::vector<char> is_kink(is_jump);
  {
    double v = t;
    for (int k = 0; k < 64; ++k) {
      double next = eq.alpha_value(v);
      if (next >= v - mtol) break;  // delay vanished; no further seams
      v = next;
      if (v <= s + mtol) break;
      int bi = g.index_of(v);
      if (bi > static_cast<int>(si) && bi < static_cast<int>(ti))
        is_kink[static_cast<std::size_t>(bi)] = 1;
    }
    // Projected delays branch the seam chains (a plateau maps an interval
    // of columns onto one activation time), so also mark any node whose
    // second difference spikes against its neighbors two cells away.
    for (std::size_t j = si + 2; j + 2 <= ti; ++j) {
      if (!(g.dense_link(j - 2) && g.dense_link(j - 1) && g.dense_link(j) &&
            g.dense_link(j + 1)))
        continue;
      auto d2 = [&](std::size_t k) {
        return std::abs(w_vals[k - 1] - 2.0 * w_vals[k] + w_vals[k + 1]);
      };
      double floor_scale = 1e-13 * (1.0 + std::abs(w_vals[j]));
      if (d2(j) > 6.0 * std::max(d2(j - 1), d2(j + 1)) + floor_scale)
        is_kink[j] = 1;
    }
  }
  std::vector<double> w_dr(g.size(), 0.0), w_dl(g.size(), 0.0);
  {
    std::size_t chain_start = si;
    for (std::size_t j = si; j <= ti; ++j) {
      // A value jump ends the chain like a gap does: samples beyond it
      // belong to the other branch and must not enter these slopes.
      bool gap = (!g.dense_link(j) && j < ti) || is_jump[j];
      bool chain_end = (j == ti) || gap || (is_kink[j] && j > chain_start);
      if (!chain_end) continue;
      std::size_t lo = chain_start, hi = j;
      if (hi > lo) {
        for (std::size_t k = lo + 1; k < hi; ++k) {
          double c = (w_vals[k + 1] - w_vals[k - 1]) / (g.t(k + 1) - g.t(k - 1));
          w_dr[k] = c;
          w_dl[k] = c;
        }
        double h_lo = g.t(lo + 1) - g.t(lo);
        w_dr[lo] = (hi - lo >= 2) ? (-3.0 * w_vals[lo] + 4.0 * w_vals[lo + 1] -
                                     w_vals[lo + 2]) /
                                        (2.0 * h_lo)
                                  : (w_vals[lo + 1] - w_vals[lo]) / h_lo;
        double h_hi = g.t(hi) - g.t(hi - 1);
        w_dl[hi] = (hi - lo >= 2)
                       ? (3.0 * w_vals[hi] - 4.0 * w_vals[hi - 1] + w_vals[hi - 2]) /
                             (2.0 * h_hi)
                       : (w_vals[hi] - w_vals[hi - 1]) / h_hi;
      }
      // A kink node both ends this chain and starts the next; a gap or the
      // range edge starts the next chain beyond it.
      chain_start = (!gap && j < ti && is_kink[j]) ? j : j + 1;
    }
  }
  GridFunction w(eq.grid, std::move(w_vals), std::move(w_dr), std::move(w_dl),
                 Interp::cubic_hermite);

  auto phi_at = [&](double v) -> double {
    if (h.phi.empty()) return 0.0;
    if (v >= s - mtol) return 0.0;  // phi vanishes outside its domain
    if (v < h.left - mtol) return 0.0;
    return h.phi.value_at(std::max(v, h.left));
  };

  for (std::size_t j = si; j < ti; ++j) {
    if (g.scattered(j)) {
      double phi_term = phi_at(eq.alpha_point[j]);
      double integrand = forcing_value(forcing, g.t(j)) - eq.a_point[j] * phi_term;
      acc += g.mu_at(j) * field.value(t, g.t(j + 1)) * integrand;
      continue;
    }
    double l = g.t(j), r = g.t(j + 1);
    double al = eq.alpha_point[j];
    double ar = g.scattered(j + 1) ? eq.alpha_end[j + 1] : eq.alpha_point[j + 1];
    bool hist_l = al < s - mtol, hist_r = ar < s - mtol;

    // Quadratic extrapolation of the right branch across a jump cell.
    bool jump_cell = is_jump[j] != 0;
    auto w_right = [&](double x) {
      std::size_t k = j + 1;
      const auto& wv = w.values();
      if (k + 2 <= ti && g.dense_link(k) && g.dense_link(k + 1)) {
        double x0 = g.t(k), x1 = g.t(k + 1), x2 = g.t(k + 2);
        double y0 = wv[k], y1 = wv[k + 1], y2 = wv[k + 2];
        return y0 * (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2)) +
               y1 * (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2)) +
               y2 * (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1));
      }
      if (k + 1 <= ti && g.dense_link(k)) {
        double x0 = g.t(k), x1 = g.t(k + 1);
        return wv[k] + (wv[k + 1] - wv[k]) * (x - x0) / (x1 - x0);
      }
      return wv[k];
    };

    auto cell_part = [&](double x0, double x1, bool with_history) {
      double len = x1 - x0;
      if (len <= 0.0) return;
      double sum = 0.0;
      for (int q = 0; q < 4; ++q) {
        double x = x0 + len * kGaussU[q];
        double integrand = forcing_value(forcing, x);
        if (with_history) {
          double v = eq.alpha_value(x);
          integrand -= eq.a_dense.value_at(x) * phi_at(v);
        }
        double wx = jump_cell ? w_right(x) : w.value_at(x);
        sum += kGaussW[q] * wx * integrand;
      }
      acc += len * sum;
    };

    if (hist_l == hist_r) {
      cell_part(l, r, hist_l);
    } else {
      // The history integrand cuts off where alpha crosses s; split there.
      double lo = l, hi = r;
      for (int it = 0; it < 80 && hi - lo > 1e-15 * (1.0 + std::abs(l)); ++it) {
        double mid = 0.5 * (lo + hi);
        bool mid_hist = eq.alpha_value(mid) < s - mtol;
        if (mid_hist == hist_l)
          lo = mid;
        else
          hi = mid;
      }
      double cut = 0.5 * (lo + hi);
      cell_part(l, cut, hist_l);
      cell_part(cut, r, hist_r);
    }
  }
  return acc;
}

Solution variation_of_parameters(const DelayEquation& eq, double s, const History& h,
                                 const GridFunction* forcing, const FundamentalField& field) {
  const Grid& g = *eq.grid;
  s = eq.ts->snap(s);
  int si = g.index_of(s);
  if (si < 0) throw Error(ErrorCode::NotInScale, "start point off the grid");
  std::vector<double> vals(g.size(), 0.0);
  for (std::size_t j = static_cast<std::size_t>(si); j < g.size(); ++j)
    vals[j] = representation_value(eq, s, h, forcing, field, g.t(j));
  Solution sol;
  sol.x = GridFunction(eq.grid, std::move(vals), Interp::cubic_hermite);
  sol.start_index = static_cast<std::size_t>(si);
  sol.s = s;
  return sol;
}

}  // namespace tsdde
