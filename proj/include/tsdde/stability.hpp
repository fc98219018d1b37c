#ifndef TSDDE_STABILITY_HPP
#define TSDDE_STABILITY_HPP

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tsdde/delay_equation.hpp"
#include "tsdde/exponential.hpp"

namespace tsdde {

/// One checked quantity: a supremum or integral over the evaluation grid,
/// the node where it was attained, and the horizon it was certified on.
struct ConditionReport {
  std::string name;
  bool satisfied = false;
  double value = 0.0;
  double attained_at = 0.0;
  double horizon = 0.0;
};

enum class Verdict {
  Inconclusive,
  UniformlyStable,
  GloballyAsymptoticallyStable,
  UniformlyExponentiallyStable,
};

enum class Route { none, T3_1, T3_2, C3_1, T4_1, T4_2, C4_1 };

const char* verdict_name(Verdict v);
const char* route_name(Route r);

enum class ConditionRoute { A1, A2 };

struct DominationFit {
  bool ok = false;
  double lambda1 = 0.0;
  double M1 = 0.0;
};

struct NumericValidation {
  std::size_t field_columns = 0;
  double sup_abs_X = 0.0;
  bool weak_bound_checked = false;
  bool weak_bound_ok = false;       // sup|X| <= 1 + 1e-6 where the weak condition held
  bool envelope_checked = false;
  bool envelope_ok = false;         // |X(t,s)| <= M0 * envelope(t,s) * (1 + 1e-6)
  double envelope_margin = 0.0;     // worst |X| / (M0 * envelope)
};

struct StabilityCertificate {
  Verdict verdict = Verdict::Inconclusive;
  Route route = Route::none;
  std::vector<ConditionReport> reports;
  double nu0 = 0.0;
  double lambda0 = 0.0;
  double M0 = 0.0;
  std::optional<double> lambda1;
  double M1 = 0.0;
  double horizon = 0.0;
  NumericValidation numeric;
  int projection_warnings = 0;

  const ConditionReport* find(const std::string& name) const;
};

// ---- window conditions -----------------------------------------------------

ConditionReport check_A1(const DelayEquation& eq);
ConditionReport check_A2(const DelayEquation& eq);

/// sup over s of the coefficient integral over [s, alpha_inv(s)]; the
/// finiteness flag uses a monotone-tail heuristic on the working horizon.
ConditionReport compute_K0(const DelayEquation& eq);

/// sup over s of alpha_inv(s) - s, with the same horizon heuristic.
ConditionReport compute_H0(const DelayEquation& eq);

/// Indicator-integral replacements for K0/H0 that work without
/// alpha_inv: sup over s of the integral of A restricted to where the
/// delayed argument falls below s, unweighted and e_lambda-weighted.
std::pair<ConditionReport, ConditionReport> check_chi_conditions(const DelayEquation& eq,
                                                                 double lambda);

ConditionReport strict_condition_A1(const DelayEquation& eq, double margin = 0.0);
ConditionReport weak_condition_A1(const DelayEquation& eq);
ConditionReport strict_condition_A2(const DelayEquation& eq, double margin = 0.0);
ConditionReport weak_condition_A2(const DelayEquation& eq);

/// Divergence of the coefficient integral to the horizon (growth through the
/// last quarter).
ConditionReport check_divergence(const DelayEquation& eq);

// ---- scalar constructions --------------------------------------------------

/// Midpoint of the admissible interval (strict_value, 1).
double select_nu0(double strict_value);

/// Root of (1-l)/(1+l*nu0) - nu0*exp(2*l*nu0) in (0,1); residual <= 1e-12.
double find_lambda0_A1(double nu0);

/// Root of (1-l) - nu0*exp(3*l*nu0/(1-nu0)) in (0, 1-nu0); residual <= 1e-12.
double find_lambda0_A2(double nu0);

double compute_M0(const DelayEquation& eq, double lambda0, ConditionRoute route, double nu0);

/// Coefficient window integral: scattered nodes contribute their point value
/// times the gap, dense parts integrate the dense-side samples.
double coeff_window_integral(const DelayEquation& eq, double lo, double hi);

// ---- classification ---------------------------------------------------------

struct ClassifyOptions {
  double margin = 0.0;           // safety margin for the strict "< 1" tests
  int workers = 1;
  std::size_t max_dense_columns = 64;
  double lambda_grid_step = 0.05;  // grid for the for-every-lambda corollaries
  double chi_lambda = 1.0;
};

/// Evaluate every explicit condition, construct nu0/lambda0/M0 where the
/// strict window condition allows it, fit the exponential-domination
/// hypothesis numerically, and return the strongest verdict whose
/// hypotheses all hold on the working horizon. The certificate carries a
/// numeric cross-check of the fundamental solution against the bounds the
/// theory promises.
StabilityCertificate classify(const DelayEquation& eq, const ClassifyOptions& opts = {});

/// Largest workable decay rate lambda1 (with its constant M1) such that
/// E(t,s) <= M1 * e_{ominus lambda1}(t,s) across the sampled triangle, where
/// E = e_{ominus(lambda A)} (A1 route) or e_{-lambda A} (A2 route). Fails
/// when no candidate decays compatibly through the tail of the horizon.
DominationFit fit_domination(const DelayEquation& eq, double lambda, ConditionRoute route);

std::string serialize_certificate(const StabilityCertificate& cert);

// ---- transforms -------------------------------------------------------------

/// u = ln t turns x'(t) + A(t) x(theta t) = 0 on [1, horizon] into a
/// constant-delay equation on [0, ln horizon] with coefficient
/// e^u A(e^u) and delay ln(1/theta).
DelayEquation pantograph_transform(const ExprPtr& a_expr, double theta, double horizon,
                                   double h_max);

struct TwoTermEquation {
  TimeScalePtr ts;
  ExprPtr a;     // non-delay coefficient
  ExprPtr b;     // delay coefficient
  ExprPtr beta;  // delay
  double t0 = 0.0;
  double h_max = 1e-2;
};

struct TwoTermReduction {
  DelayEquation eq;  // single-term equation in y
  /// Multiplier m(t) with x(t) = m(t) * y(t); |y| <= M gives the
  /// exponential envelope |x(t)| <= M * m(t).
  std::function<double(double)> back_map;
};

/// sigma_variant reduces x^D + A x^sigma + B x(beta) = 0 via y = e_A(.,t0) x;
/// otherwise x^D + A x + B x(beta) = 0 via y = e_{ominus(-A)}(.,t0) x, which
/// needs -A positively regressive.
TwoTermReduction two_term_reduction(const TwoTermEquation& input, bool sigma_variant);

struct EigenSharpness {
  bool stable = false;
  double modulus = 0.0;
};

/// Spectral radius of the companion matrix of x_{n+1} = x_n - a x_{n-1}:
/// max |(1 +- sqrt(1-4a))/2|, stable exactly when a <= 1.
EigenSharpness eigen_sharpness(double a);

/// Runs the recurrence x_{n+1} = x_n - a x_{n-1} and reports max |x_n|.
double two_step_recurrence_max(double a, long steps, double x0, double x1);

}  // namespace tsdde

#endif  // TSDDE_STABILITY_HPP
