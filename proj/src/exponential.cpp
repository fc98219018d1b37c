#include "tsdde/exponential.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace tsdde {

namespace {

std::string num(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace

double circle_minus(double f_val, double mu_val) {
  double denom = 1.0 + mu_val * f_val;
  if (denom == 0.0)
    throw Error(ErrorCode::NotRegressive,
                "circle_minus: 1 + mu*f = 0 for f = " + num(f_val) + ", mu = " + num(mu_val));
  return -f_val / denom;
}

RegressivityReport check_regressive(const TimeScale& ts, const GridFunction& f,
                                    RegressivitySign sign) {
  RegressivityReport report;
  const Grid& g = *f.grid();
  for (std::size_t i = 0; i < g.size(); ++i) {
    double mu = g.scattered(i) ? g.mu_at(i) : 0.0;
    double factor = 1.0 + mu * f.values()[i];
    if (factor == 0.0) {
      report.is_regressive = false;
      report.is_positively_regressive = false;
      report.witness = RegressivityWitness{g.t(i), factor};
      return report;
    }
    if (factor < 0.0 && report.is_positively_regressive) {
      report.is_positively_regressive = false;
      report.witness = RegressivityWitness{g.t(i), factor};
      if (sign == RegressivitySign::positive) return report;
    }
  }
  (void)ts;
  return report;
}

// ---------------------------------------------------------------------------
// ExpCumulative
// ---------------------------------------------------------------------------

ExpCumulative::ExpCumulative(TimeScalePtr ts, const GridFunction& f)
    : ts_(std::move(ts)), f_(f) {
  build(f, nullptr);
}

ExpCumulative::ExpCumulative(TimeScalePtr ts, GridPtr grid,
                             const std::function<double(double)>& f)
    : ts_(std::move(ts)), f_(GridFunction::sample(std::move(grid), f)) {
  build(f_, nullptr);
}

ExpCumulative::ExpCumulative(TimeScalePtr ts, const GridFunction& f,
                             const std::vector<double>& scattered_values)
    : ts_(std::move(ts)), f_(f) {
  build(f, &scattered_values);
}

namespace {

// Knuth two-sum; exact error term of a + b.
inline void two_sum(double a, double b, double& s, double& e) {
  s = a + b;
  double bb = s - a;
  e = (a - (s - bb)) + (b - bb);
}

}  // namespace

void ExpCumulative::build(const GridFunction& f, const std::vector<double>* scattered_values) {
  const Grid& g = *f.grid();
  std::size_t n = g.size();
  log_hi_.assign(n, 0.0);
  log_lo_.assign(n, 0.0);
  flip_prefix_.assign(n, 0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    double dlog;
    std::size_t dflip = 0;
    if (g.scattered(i)) {
      double fi = scattered_values ? (*scattered_values)[i] : f.values()[i];
      double factor = 1.0 + g.mu_at(i) * fi;
      if (factor == 0.0) {
        if (!violation_) violation_ = RegressivityWitness{g.t(i), factor};
        dlog = -std::numeric_limits<double>::infinity();
      } else {
        dlog = std::log(std::abs(factor));
        if (factor < 0.0) dflip = 1;
      }
    } else {
      dlog = f.cell_integral(i, g.t(i), g.t(i + 1));
    }
    double s, e;
    two_sum(log_hi_[i], dlog, s, e);
    double lo = log_lo_[i] + e;
    double s2, e2;
    two_sum(s, lo, s2, e2);
    log_hi_[i + 1] = s2;
    log_lo_[i + 1] = e2;
    flip_prefix_[i + 1] = flip_prefix_[i] + dflip;
  }
}

ExpCumulative::DD ExpCumulative::log_at(double x) const {
  const Grid& g = *f_.grid();
  int exact = g.index_of(x);
  if (exact >= 0) {
    std::size_t i = static_cast<std::size_t>(exact);
    return {log_hi_[i], log_lo_[i]};
  }
  std::size_t i = g.index_le(x);
  if (!g.dense_link(i))
    throw Error(ErrorCode::NotInScale, "exponential bound " + num(x) + " inside a gap");
  double s, e;
  two_sum(log_hi_[i], f_.cell_integral(i, g.t(i), x), s, e);
  return {s, log_lo_[i] + e};
}

std::size_t ExpCumulative::flips_at(double x) const {
  const Grid& g = *f_.grid();
  int exact = g.index_of(x);
  std::size_t i = exact >= 0 ? static_cast<std::size_t>(exact) : g.index_le(x);
  return flip_prefix_[i];
}

int ExpCumulative::sign_between(double t, double s) const {
  return ((flips_at(t) - flips_at(s)) % 2 == 0) ? 1 : -1;
}

double ExpCumulative::log_magnitude(double t, double s) const {
  DD a = log_at(t), b = log_at(s);
  return (a.hi - b.hi) + (a.lo - b.lo);
}

double ExpCumulative::value(double t, double s) const {
  if (violation_) {
    double lo = std::min(s, t), hi = std::max(s, t);
    if (violation_->t >= lo - ts_->membership_tol() && violation_->t < hi)
      throw Error(ErrorCode::NotRegressive,
                  "1 + mu*f vanishes at t = " + num(violation_->t));
  }
  if (t >= s) return sign_between(t, s) * std::exp(log_magnitude(t, s));
  return 1.0 / value(s, t);
}

double exp_fn(const TimeScale& ts, const GridFunction& f, double s, double t) {
  if (!ts.contains(s) || !ts.contains(t))
    throw Error(ErrorCode::NotInScale, "exp_fn bounds must be scale points");
  ExpCumulative cum(f.grid()->scale(), f);
  return cum.value(ts.snap(t), ts.snap(s));
}

double exp_ominus(const TimeScale& ts, GridPtr grid, double lambda, double s, double t) {
  if (!(lambda > 0.0))
    throw Error(ErrorCode::BadConfig, "exp_ominus needs lambda > 0");
  ExpCumulative cum(grid->scale(), grid, [lambda](double) { return lambda; });
  (void)ts;
  return 1.0 / cum.value(t, s);
}

}  // namespace tsdde
