#ifndef TSDDE_EXPONENTIAL_HPP
#define TSDDE_EXPONENTIAL_HPP

#include <cstddef>
#include <functional>
#include <optional>

#include "tsdde/time_scale.hpp"

namespace tsdde {

/// Circle plus: f + g + mu*f*g.
inline double circle_plus(double f_val, double g_val, double mu_val) {
  return f_val + g_val + mu_val * f_val * g_val;
}

/// Circle minus: -f / (1 + mu*f). Involution: applying it twice returns f.
double circle_minus(double f_val, double mu_val);

struct RegressivityWitness {
  double t;
  double value;  // 1 + mu(t) f(t) at the violating point
};

struct RegressivityReport {
  bool is_regressive = true;
  bool is_positively_regressive = true;
  std::optional<RegressivityWitness> witness;
};

enum class RegressivitySign { any, positive };

/// Scans 1 + mu*f over the grid; only scattered nodes can violate, dense
/// nodes are a free sanity pass.
RegressivityReport check_regressive(const TimeScale& ts, const GridFunction& f,
                                    RegressivitySign sign = RegressivitySign::any);

/// Prefix representation of the generalized exponential e_f(t, s) over a
/// grid, in log-magnitude + sign form so that unbounded coefficients cannot
/// overflow and sign alternation of negatively regressive f is kept exact.
///
/// e_f(t,s) = sign * exp(L(t) - L(s)) where L accumulates ln|1 + mu f| at
/// scattered nodes and the plain integral of f over dense parts.
class ExpCumulative {
 public:
  ExpCumulative(TimeScalePtr ts, const GridFunction& f);
  ExpCumulative(TimeScalePtr ts, GridPtr grid, const std::function<double(double)>& f);
  /// `scattered_values` overrides f's nodal samples at scattered nodes: used
  /// for rd-continuous coefficients whose point value at a run-end node
  /// differs from the dense-side limit stored in f.
  ExpCumulative(TimeScalePtr ts, const GridFunction& f,
                const std::vector<double>& scattered_values);

  /// e_f(t, s). Either orientation: e_f(t,s) = 1/e_f(s,t).
  double value(double t, double s) const;

  /// ln|e_f(t,s)| for s <= t (throws on a sign-degenerate range).
  double log_magnitude(double t, double s) const;

  /// Sign of e_f(t,s), s <= t: +1 or -1.
  int sign_between(double t, double s) const;

  bool regressive() const { return !violation_.has_value(); }
  const std::optional<RegressivityWitness>& violation() const { return violation_; }

 private:
  // Compensated (double-double) accumulation: the prefix can reach 1e20+ for
  // unbounded coefficients while window differences of order 1 must survive.
  struct DD {
    double hi = 0.0;
    double lo = 0.0;
  };

  void build(const GridFunction& f, const std::vector<double>* scattered_values);
  DD log_at(double x) const;
  std::size_t flips_at(double x) const;

  TimeScalePtr ts_;
  GridFunction f_;                 // retained for partial-cell integrals
  std::vector<double> log_hi_;     // L at each grid node, leading part
  std::vector<double> log_lo_;     // compensation part
  std::vector<std::size_t> flip_prefix_;  // negative factors before each node
  std::optional<RegressivityWitness> violation_;
};

/// Generalized exponential e_f(t, s) for a sampled regressive f.
/// Matches the classical closed forms on the standard scales: exp of the
/// integral on dense intervals, products of (1 + mu f) across gaps.
double exp_fn(const TimeScale& ts, const GridFunction& f, double s, double t);

/// e_{ominus lambda}(t, s) = 1 / e_lambda(t, s) for constant lambda > 0:
/// the decay envelope used by the uniform-exponential-stability estimates.
double exp_ominus(const TimeScale& ts, GridPtr grid, double lambda, double s, double t);

}  // namespace tsdde

#endif  // TSDDE_EXPONENTIAL_HPP
