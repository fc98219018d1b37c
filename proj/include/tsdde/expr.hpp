#ifndef TSDDE_EXPR_HPP
#define TSDDE_EXPR_HPP

#include <memory>
#include <string>
#include <vector>

#include "tsdde/time_scale.hpp"

namespace tsdde {

/// AST of the coefficient/delay expression language.
///
/// Grammar (precedence low to high): or | and | not | comparison
/// (< <= > >= == !=) | + - | * / | unary - | ^ (right-assoc) | atoms.
/// Comparisons and logical operators evaluate to 0/1; `if c then a else b`
/// takes any expression as condition (nonzero is true).
///
/// Functions: exp ln sinh cosh sqrt abs min max floor frac, and the
/// scale-aware mu sigma rho rho2 scattered. Constants: e, pi. Variable: t.
struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

enum class ExprKind {
  number,
  var_t,
  binary,   // + - * / ^ and comparisons/logicals
  negate,
  call,
  if_else,  // kids: cond, then, else
};

enum class BinOp { add, sub, mul, div, pow, lt, le, gt, ge, eq, ne, logical_and, logical_or };

enum class Fn {
  exp_fn, ln, sinh_fn, cosh_fn, sqrt_fn, abs_fn, min_fn, max_fn, floor_fn, frac,
  mu, sigma, rho, rho2, scattered, logical_not,
};

struct Expr {
  ExprKind kind;
  double number = 0.0;
  BinOp op = BinOp::add;
  Fn fn = Fn::exp_fn;
  std::vector<ExprPtr> kids;
};

/// Parse source text into an AST. Throws SyntaxError (with a 1-based column
/// in the message) or UnknownIdentifier.
ExprPtr parse_expr(const std::string& src);

/// Evaluate at t. `ts` may be null when the expression uses no scale-aware
/// primitive. Domain violations throw EvalError.
double eval_expr(const Expr& e, double t, const TimeScale* ts);
double eval_expr(const ExprPtr& e, double t, const TimeScale* ts);

/// Render source text; parse(print(e)) evaluates identically to e.
std::string print_expr(const Expr& e);

/// Replace every occurrence of the variable t with `replacement`.
ExprPtr substitute_var(const ExprPtr& e, const ExprPtr& replacement);

ExprPtr expr_number(double v);
ExprPtr expr_var();
ExprPtr expr_binary(BinOp op, ExprPtr l, ExprPtr r);
ExprPtr expr_call(Fn fn, std::vector<ExprPtr> args);

/// True if the expression mentions mu/sigma/rho/rho2/scattered.
bool uses_scale_primitives(const Expr& e);

}  // namespace tsdde

#endif  // TSDDE_EXPR_HPP
