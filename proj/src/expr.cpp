#include "tsdde/expr.hpp"

#include <cctype>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace tsdde {

namespace {

struct Token {
  enum class Type { number, ident, op, end } type;
  std::string text;
  double value = 0.0;
  std::size_t column = 0;  // 1-based
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) { advance(); }

  const Token& peek() const { return current_; }

  Token take() {
    Token t = current_;
    advance();
    return t;
  }

  [[noreturn]] void fail(const std::string& msg, std::size_t column) const {
    throw Error(ErrorCode::SyntaxError, msg + " at column " + std::to_string(column));
  }

 private:
  void advance() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    current_.column = pos_ + 1;
    if (pos_ >= src_.size()) {
      current_ = {Token::Type::end, "", 0.0, pos_ + 1};
      return;
    }
    char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && pos_ + 1 < src_.size() &&
         std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      std::size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.'))
        ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
        std::size_t mark = pos_;
        ++pos_;
        if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
        if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
          while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        } else {
          pos_ = mark;  // 'e' was the constant, not an exponent
        }
      }
      std::string text = src_.substr(start, pos_ - start);
      try {
        current_ = {Token::Type::number, text, std::stod(text), start + 1};
      } catch (...) {
        fail("bad numeric literal '" + text + "'", start + 1);
      }
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        ++pos_;
      current_ = {Token::Type::ident, src_.substr(start, pos_ - start), 0.0, start + 1};
      return;
    }
    // operators, possibly two chars
    std::size_t start = pos_;
    std::string two = src_.substr(pos_, 2);
    if (two == "<=" || two == ">=" || two == "==" || two == "!=") {
      pos_ += 2;
      current_ = {Token::Type::op, two, 0.0, start + 1};
      return;
    }
    std::string one(1, c);
    if (std::string("+-*/^()<>,").find(c) != std::string::npos) {
      ++pos_;
      current_ = {Token::Type::op, one, 0.0, start + 1};
      return;
    }
    fail(std::string("unexpected character '") + c + "'", start + 1);
  }

  const std::string& src_;
  std::size_t pos_ = 0;
  Token current_;
};

ExprPtr make(Expr e) { return std::make_shared<const Expr>(std::move(e)); }

const std::unordered_map<std::string, Fn>& function_table() {
  static const std::unordered_map<std::string, Fn> table = {
      {"exp", Fn::exp_fn},     {"ln", Fn::ln},         {"sinh", Fn::sinh_fn},
      {"cosh", Fn::cosh_fn},   {"sqrt", Fn::sqrt_fn},  {"abs", Fn::abs_fn},
      {"min", Fn::min_fn},     {"max", Fn::max_fn},    {"floor", Fn::floor_fn},
      {"frac", Fn::frac},      {"mu", Fn::mu},         {"sigma", Fn::sigma},
      {"rho", Fn::rho},        {"rho2", Fn::rho2},     {"scattered", Fn::scattered},
  };
  return table;
}

class Parser {
 public:
  explicit Parser(const std::string& src) : lex_(src) {}

  ExprPtr parse() {
    ExprPtr e = parse_or();
    const Token& t = lex_.peek();
    if (t.type != Token::Type::end)
      lex_.fail("unexpected trailing input '" + t.text + "'", t.column);
    return e;
  }

 private:
  bool accept_op(const std::string& text) {
    if (lex_.peek().type == Token::Type::op && lex_.peek().text == text) {
      lex_.take();
      return true;
    }
    return false;
  }

  bool accept_ident(const std::string& text) {
    if (lex_.peek().type == Token::Type::ident && lex_.peek().text == text) {
      lex_.take();
      return true;
    }
    return false;
  }

  void expect_op(const std::string& text) {
    const Token& t = lex_.peek();
    if (t.type != Token::Type::op || t.text != text)
      lex_.fail("expected '" + text + "'", t.column);
    lex_.take();
  }

  void expect_ident(const std::string& text) {
    const Token& t = lex_.peek();
    if (t.type != Token::Type::ident || t.text != text)
      lex_.fail("expected '" + text + "'", t.column);
    lex_.take();
  }

  ExprPtr parse_or() {
    ExprPtr l = parse_and();
    while (accept_ident("or")) l = expr_binary(BinOp::logical_or, l, parse_and());
    return l;
  }

  ExprPtr parse_and() {
    ExprPtr l = parse_not();
    while (accept_ident("and")) l = expr_binary(BinOp::logical_and, l, parse_not());
    return l;
  }

  ExprPtr parse_not() {
    if (accept_ident("not")) return expr_call(Fn::logical_not, {parse_not()});
    return parse_comparison();
  }

  ExprPtr parse_comparison() {
    ExprPtr l = parse_additive();
    const Token& t = lex_.peek();
    if (t.type == Token::Type::op) {
      BinOp op;
      if (t.text == "<") op = BinOp::lt;
      else if (t.text == "<=") op = BinOp::le;
      else if (t.text == ">") op = BinOp::gt;
      else if (t.text == ">=") op = BinOp::ge;
      else if (t.text == "==") op = BinOp::eq;
      else if (t.text == "!=") op = BinOp::ne;
      else return l;
      lex_.take();
      return expr_binary(op, l, parse_additive());
    }
    return l;
  }

  ExprPtr parse_additive() {
    ExprPtr l = parse_multiplicative();
    for (;;) {
      if (accept_op("+")) l = expr_binary(BinOp::add, l, parse_multiplicative());
      else if (accept_op("-")) l = expr_binary(BinOp::sub, l, parse_multiplicative());
      else return l;
    }
  }

  ExprPtr parse_multiplicative() {
    ExprPtr l = parse_unary();
    for (;;) {
      if (accept_op("*")) l = expr_binary(BinOp::mul, l, parse_unary());
      else if (accept_op("/")) l = expr_binary(BinOp::div, l, parse_unary());
      else return l;
    }
  }

  ExprPtr parse_unary() {
    if (accept_op("-")) {
      Expr e;
      e.kind = ExprKind::negate;
      e.kids = {parse_unary()};
      return make(std::move(e));
    }
    return parse_power();
  }

  ExprPtr parse_power() {
    ExprPtr base = parse_atom();
    if (accept_op("^")) {
      // right-associative; the exponent may carry its own unary minus
      ExprPtr exponent = parse_unary();
      return expr_binary(BinOp::pow, base, exponent);
    }
    return base;
  }

  ExprPtr parse_atom() {
    const Token t = lex_.peek();
    if (t.type == Token::Type::number) {
      lex_.take();
      return expr_number(t.value);
    }
    if (t.type == Token::Type::op && t.text == "(") {
      lex_.take();
      ExprPtr e = parse_or();
      expect_op(")");
      return e;
    }
    if (t.type == Token::Type::ident) {
      if (t.text == "if") {
        lex_.take();
        ExprPtr cond = parse_or();
        expect_ident("then");
        ExprPtr a = parse_or();
        expect_ident("else");
        ExprPtr b = parse_or();
        Expr e;
        e.kind = ExprKind::if_else;
        e.kids = {cond, a, b};
        return make(std::move(e));
      }
      if (t.text == "t") {
        lex_.take();
        return expr_var();
      }
      if (t.text == "e") {
        lex_.take();
        return expr_number(std::exp(1.0));
      }
      if (t.text == "pi") {
        lex_.take();
        return expr_number(3.14159265358979323846);
      }
      auto it = function_table().find(t.text);
      if (it != function_table().end()) {
        lex_.take();
        expect_op("(");
        std::vector<ExprPtr> args;
        args.push_back(parse_or());
        while (accept_op(",")) args.push_back(parse_or());
        expect_op(")");
        std::size_t want = (it->second == Fn::min_fn || it->second == Fn::max_fn) ? 2 : 1;
        if (args.size() != want)
          lex_.fail("function '" + t.text + "' takes " + std::to_string(want) + " argument(s)",
                    t.column);
        return expr_call(it->second, std::move(args));
      }
      throw Error(ErrorCode::UnknownIdentifier,
                  "unknown identifier '" + t.text + "' at column " + std::to_string(t.column));
    }
    lex_.fail(t.type == Token::Type::end ? "unexpected end of input"
                                         : "unexpected token '" + t.text + "'",
              t.column);
  }

  Lexer lex_;
};

[[noreturn]] void eval_fail(const std::string& msg) {
  throw Error(ErrorCode::EvalError, msg);
}

double check_finite(double v, const char* what) {
  if (!std::isfinite(v)) eval_fail(std::string(what) + " produced a non-finite value");
  return v;
}

}  // namespace

ExprPtr expr_number(double v) {
  Expr e;
  e.kind = ExprKind::number;
  e.number = v;
  return make(std::move(e));
}

ExprPtr expr_var() {
  Expr e;
  e.kind = ExprKind::var_t;
  return make(std::move(e));
}

ExprPtr expr_binary(BinOp op, ExprPtr l, ExprPtr r) {
  Expr e;
  e.kind = ExprKind::binary;
  e.op = op;
  e.kids = {std::move(l), std::move(r)};
  return make(std::move(e));
}

ExprPtr expr_call(Fn fn, std::vector<ExprPtr> args) {
  Expr e;
  e.kind = ExprKind::call;
  e.fn = fn;
  e.kids = std::move(args);
  return make(std::move(e));
}

ExprPtr parse_expr(const std::string& src) {
  if (src.empty()) throw Error(ErrorCode::SyntaxError, "empty expression");
  return Parser(src).parse();
}

double eval_expr(const ExprPtr& e, double t, const TimeScale* ts) {
  return eval_expr(*e, t, ts);
}

double eval_expr(const Expr& e, double t, const TimeScale* ts) {
  switch (e.kind) {
    case ExprKind::number:
      return e.number;
    case ExprKind::var_t:
      return t;
    case ExprKind::negate:
      return -eval_expr(*e.kids[0], t, ts);
    case ExprKind::binary: {
      double l = eval_expr(*e.kids[0], t, ts);
      double r = eval_expr(*e.kids[1], t, ts);
      switch (e.op) {
        case BinOp::add: return l + r;
        case BinOp::sub: return l - r;
        case BinOp::mul: return l * r;
        case BinOp::div:
          if (r == 0.0) eval_fail("division by zero");
          return l / r;
        case BinOp::pow:
          return check_finite(std::pow(l, r), "power");
        case BinOp::lt: return l < r ? 1.0 : 0.0;
        case BinOp::le: return l <= r ? 1.0 : 0.0;
        case BinOp::gt: return l > r ? 1.0 : 0.0;
        case BinOp::ge: return l >= r ? 1.0 : 0.0;
        case BinOp::eq: return l == r ? 1.0 : 0.0;
        case BinOp::ne: return l != r ? 1.0 : 0.0;
        case BinOp::logical_and: return (l != 0.0 && r != 0.0) ? 1.0 : 0.0;
        case BinOp::logical_or: return (l != 0.0 || r != 0.0) ? 1.0 : 0.0;
      }
      eval_fail("bad binary operator");
    }
    case ExprKind::call: {
      if (e.fn == Fn::logical_not) return eval_expr(*e.kids[0], t, ts) == 0.0 ? 1.0 : 0.0;
      double a = eval_expr(*e.kids[0], t, ts);
      switch (e.fn) {
        case Fn::exp_fn: return check_finite(std::exp(a), "exp");
        case Fn::ln:
          if (a <= 0.0) eval_fail("ln of a non-positive value");
          return std::log(a);
        case Fn::sinh_fn: return check_finite(std::sinh(a), "sinh");
        case Fn::cosh_fn: return check_finite(std::cosh(a), "cosh");
        case Fn::sqrt_fn:
          if (a < 0.0) eval_fail("sqrt of a negative value");
          return std::sqrt(a);
        case Fn::abs_fn: return std::abs(a);
        case Fn::min_fn: return std::min(a, eval_expr(*e.kids[1], t, ts));
        case Fn::max_fn: return std::max(a, eval_expr(*e.kids[1], t, ts));
        case Fn::floor_fn: return std::floor(a);
        case Fn::frac: return a - std::floor(a);
        case Fn::mu:
          if (!ts) eval_fail("mu(t) needs a time scale");
          return ts->mu(a);
        case Fn::sigma:
          if (!ts) eval_fail("sigma(t) needs a time scale");
          return ts->sigma(a);
        case Fn::rho:
          if (!ts) eval_fail("rho(t) needs a time scale");
          return ts->rho(a);
        case Fn::rho2:
          if (!ts) eval_fail("rho2(t) needs a time scale");
          return ts->rho(ts->rho(a));
        case Fn::scattered:
          if (!ts) eval_fail("scattered(t) needs a time scale");
          return ts->is_right_scattered(a) ? 1.0 : 0.0;
        case Fn::logical_not: break;
      }
      eval_fail("bad function");
    }
    case ExprKind::if_else:
      return eval_expr(*e.kids[0], t, ts) != 0.0 ? eval_expr(*e.kids[1], t, ts)
                                                 : eval_expr(*e.kids[2], t, ts);
  }
  eval_fail("bad expression node");
}

namespace {

const char* fn_name(Fn fn) {
  switch (fn) {
    case Fn::exp_fn: return "exp";
    case Fn::ln: return "ln";
    case Fn::sinh_fn: return "sinh";
    case Fn::cosh_fn: return "cosh";
    case Fn::sqrt_fn: return "sqrt";
    case Fn::abs_fn: return "abs";
    case Fn::min_fn: return "min";
    case Fn::max_fn: return "max";
    case Fn::floor_fn: return "floor";
    case Fn::frac: return "frac";
    case Fn::mu: return "mu";
    case Fn::sigma: return "sigma";
    case Fn::rho: return "rho";
    case Fn::rho2: return "rho2";
    case Fn::scattered: return "scattered";
    case Fn::logical_not: return "not";
  }
  return "?";
}

const char* op_name(BinOp op) {
  switch (op) {
    case BinOp::add: return "+";
    case BinOp::sub: return "-";
    case BinOp::mul: return "*";
    case BinOp::div: return "/";
    case BinOp::pow: return "^";
    case BinOp::lt: return "<";
    case BinOp::le: return "<=";
    case BinOp::gt: return ">";
    case BinOp::ge: return ">=";
    case BinOp::eq: return "==";
    case BinOp::ne: return "!=";
    case BinOp::logical_and: return "and";
    case BinOp::logical_or: return "or";
  }
  return "?";
}

void print_rec(const Expr& e, std::ostream& os) {
  switch (e.kind) {
    case ExprKind::number: {
      std::ostringstream tmp;
      tmp.precision(17);
      tmp << e.number;
      std::string s = tmp.str();
      if (e.number < 0.0)
        os << "(" << s << ")";
      else
        os << s;
      return;
    }
    case ExprKind::var_t:
      os << "t";
      return;
    case ExprKind::negate:
      os << "(-";
      print_rec(*e.kids[0], os);
      os << ")";
      return;
    case ExprKind::binary:
      os << "(";
      print_rec(*e.kids[0], os);
      os << " " << op_name(e.op) << " ";
      print_rec(*e.kids[1], os);
      os << ")";
      return;
    case ExprKind::call:
      if (e.fn == Fn::logical_not) {
        os << "(not ";
        print_rec(*e.kids[0], os);
        os << ")";
        return;
      }
      os << fn_name(e.fn) << "(";
      for (std::size_t i = 0; i < e.kids.size(); ++i) {
        if (i) os << ", ";
        print_rec(*e.kids[i], os);
      }
      os << ")";
      return;
    case ExprKind::if_else:
      os << "(if ";
      print_rec(*e.kids[0], os);
      os << " then ";
      print_rec(*e.kids[1], os);
      os << " else ";
      print_rec(*e.kids[2], os);
      os << ")";
      return;
  }
}

}  // namespace

std::string print_expr(const Expr& e) {
  std::ostringstream os;
  print_rec(e, os);
  return os.str();
}

ExprPtr substitute_var(const ExprPtr& e, const ExprPtr& replacement) {
  switch (e->kind) {
    case ExprKind::var_t:
      return replacement;
    case ExprKind::number:
      return e;
    default: {
      Expr out = *e;
      for (auto& kid : out.kids) kid = substitute_var(kid, replacement);
      return std::make_shared<const Expr>(std::move(out));
    }
  }
}

bool uses_scale_primitives(const Expr& e) {
  if (e.kind == ExprKind::call &&
      (e.fn == Fn::mu || e.fn == Fn::sigma || e.fn == Fn::rho || e.fn == Fn::rho2 ||
       e.fn == Fn::scattered))
    return true;
  for (const auto& kid : e.kids)
    if (uses_scale_primitives(*kid)) return true;
  return false;
}

}  // namespace tsdde
