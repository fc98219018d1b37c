#ifndef TSDDE_DELAY_EQUATION_HPP
#define TSDDE_DELAY_EQUATION_HPP

#include <functional>
#include <optional>
#include <vector>

#include "tsdde/expr.hpp"
#include "tsdde/time_scale.hpp"

namespace tsdde {

/// The linear delay dynamic equation  x^Delta(t) + A(t) x(alpha(t)) = 0 on a
/// finite-horizon time scale, with everything the solvers and the stability
/// checks need precomputed on a working grid:
///   - A sampled pointwise and, separately, with dense-side limits at
///     run-end nodes (rd-continuous coefficients may jump there; the point
///     value feeds mu*A jump terms, the limit feeds dense quadrature and
///     the continuous stepping),
///   - the delay alpha evaluated and projected onto the scale per node,
///   - the running infimum alpha_star of the delayed argument.
struct DelayEquation {
  TimeScalePtr ts;
  GridPtr grid;
  ExprPtr alpha_expr;
  ExprPtr a_expr;  // null when the coefficient was given as a callable
  std::function<double(double)> a_fn;
  double t0 = 0.0;
  std::size_t i0 = 0;  // grid index of t0

  std::vector<double> a_point;       // A at each node (NaN below i0)
  GridFunction a_dense;              // A with dense-limit values at run ends
  std::vector<double> alpha_point;   // projected alpha at each node
  std::vector<double> alpha_end;     // dense-side limit of alpha at run ends
  std::vector<double> a_end;         // dense-side limit of A at run ends
  std::vector<double> alpha_star_v;  // suffix minimum of alpha_point from i0

  int projection_warnings = 0;  // alpha values that had to be projected down
  bool assert_a1 = true;
  double vanish_tol = 1e-12;  // |alpha(t)-t| below this counts as no delay

  double a_at(std::size_t i) const { return a_point[i]; }
  double alpha_at(std::size_t i) const { return alpha_point[i]; }

  /// Evaluate alpha at an arbitrary scale point (projected onto the scale).
  double alpha_value(double t) const;
};

DelayEquation make_delay_equation(TimeScalePtr ts, ExprPtr a, ExprPtr alpha, double t0,
                                  double h_max);
DelayEquation make_delay_equation(TimeScalePtr ts, std::function<double(double)> a_fn,
                                  ExprPtr alpha, double t0, double h_max);

/// inf of alpha over grid nodes eta >= t; equals alpha(t) for nondecreasing
/// delays. Nondecreasing in t.
double alpha_star(const DelayEquation& eq, double t);

struct AlphaInv {
  double value = 0.0;
  bool capped = false;  // the defining set reached the horizon
};

/// sup of grid nodes eta >= t0 with alpha_star(eta) <= t; capped (and
/// flagged) at the horizon when the set is unbounded within it.
AlphaInv alpha_inv(const DelayEquation& eq, double t);

/// Initial data for a start point s: x(s) = x0 and x = phi on
/// [alpha_star(s), s). An empty phi means identically zero history.
struct History {
  double x0 = 1.0;
  GridFunction phi;
  double left = 0.0;  // left end of phi's domain
};

History make_history(const DelayEquation& eq, double s, double x0,
                     const std::function<double(double)>& phi);

/// A computed solution on [s, t_max]: nodal values are exact at scattered
/// updates; dense cells carry 4th-order stage derivatives so that value()
/// provides the matching dense output.
struct Solution {
  GridFunction x;
  std::size_t start_index = 0;
  double s = 0.0;

  double value(double t) const;
};

/// March the equation forward from s: exact jump updates across scattered
/// gaps, classical 4-stage Runge-Kutta steps with cubic dense output on
/// dense intervals, delayed values looked up in the already-computed
/// solution or the history.
Solution solve_ivp(const DelayEquation& eq, double s, const History& h,
                   const GridFunction* forcing = nullptr);

/// The fundamental matrix X(t, s) sampled over the triangle t >= s >= t0:
/// one solution column per start point (unit value, zero history).
class FundamentalField {
 public:
  FundamentalField(const DelayEquation* eq, std::vector<double> s_values,
                   std::vector<Solution> columns);

  const std::vector<double>& s_values() const { return s_values_; }
  const Solution& column(std::size_t j) const { return columns_[j]; }
  std::size_t columns() const { return columns_.size(); }
  int column_index(double s) const;

  /// X(t, s); 0 for t < s (the vanishing pre-history convention).
  double value(double t, double s) const;

 private:
  const DelayEquation* eq_;
  std::vector<double> s_values_;
  std::vector<Solution> columns_;
};

/// Default start points: every right-scattered node in [t0, t_max] plus
/// dense nodes subsampled to at most `max_dense` columns.
std::vector<double> default_s_samples(const DelayEquation& eq, std::size_t max_dense = 64);

/// Columns are independent; `workers` > 1 computes them concurrently and
/// merges in s-order, so results are identical for any worker count.
FundamentalField fundamental_solution(const DelayEquation& eq, std::vector<double> s_samples,
                                      int workers = 1);

/// Right-hand side x(t) of the solution-representation formula:
///   X(t,s) x0 - int_s^t X(t,sigma(eta)) A(eta) phi(alpha(eta)) Delta(eta)
///            + int_s^t X(t,sigma(eta)) f(eta) Delta(eta),
/// the history integrand restricted to where alpha(eta) < s (phi vanishes
/// elsewhere); the cell containing that cutoff is split at the crossing.
/// Needs field columns at every grid node of [s, t].
double representation_value(const DelayEquation& eq, double s, const History& h,
                            const GridFunction* forcing, const FundamentalField& field,
                            double t);

/// representation_value at every grid node in [s, t_max] (cross-check
/// against solve_ivp; quadratic cost, intended for small instances).
Solution variation_of_parameters(const DelayEquation& eq, double s, const History& h,
                                 const GridFunction* forcing, const FundamentalField& field);

}  // namespace tsdde

#endif  // TSDDE_DELAY_EQUATION_HPP
