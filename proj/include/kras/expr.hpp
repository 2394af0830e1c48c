#pragma once

// Scalar functions of the lag variable: parsing, symbolic differentiation and
// IEEE-double evaluation. These carry the entries of distributed-delay kernels
// and of the basis-function blocks. The grammar is closed under
// differentiation: literals, the variable `t`, + - * /, integer powers, and
// sin/cos/exp/ln. Trees are immutable after construction and safe to share
// across threads.

#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "kras/errors.hpp"

namespace kras {

enum class ExprKind { Literal, Var, Add, Sub, Mul, Div, Pow, Neg, Sin, Cos, Exp, Log };

class ScalarExpr {
  struct Node {
    ExprKind kind;
    double value = 0.0;   // Literal
    int exponent = 0;     // Pow
    std::shared_ptr<const Node> a, b;
  };
  std::shared_ptr<const Node> n_;

  explicit ScalarExpr(std::shared_ptr<const Node> n) : n_(std::move(n)) {}

  static ScalarExpr make(ExprKind k, ScalarExpr a = {}, ScalarExpr b = {}) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->a = a.n_;
    n->b = b.n_;
    return ScalarExpr(std::move(n));
  }

  bool isLiteral(double* v = nullptr) const {
    if (n_->kind != ExprKind::Literal) return false;
    if (v) *v = n_->value;
    return true;
  }

 public:
  ScalarExpr() : ScalarExpr(literal(0.0)) {}

  static ScalarExpr literal(double v) {
    auto n = std::make_shared<Node>();
    n->kind = ExprKind::Literal;
    n->value = v;
    return ScalarExpr(std::move(n));
  }

  static ScalarExpr var() { return make(ExprKind::Var); }

  ExprKind kind() const { return n_->kind; }
  double literal_value() const { return n_->value; }
  int exponent() const { return n_->exponent; }
  ScalarExpr child_a() const { return ScalarExpr(n_->a); }
  ScalarExpr child_b() const { return ScalarExpr(n_->b); }

  // Constant folding and neutral-element elision happen at construction so
  // that differentiation produces exact zeros where calculus does.
  friend ScalarExpr operator+(const ScalarExpr& x, const ScalarExpr& y) {
    double a, b;
    if (x.isLiteral(&a) && y.isLiteral(&b)) return literal(a + b);
    if (x.isLiteral(&a) && a == 0.0) return y;
    if (y.isLiteral(&b) && b == 0.0) return x;
    return make(ExprKind::Add, x, y);
  }
  friend ScalarExpr operator-(const ScalarExpr& x, const ScalarExpr& y) {
    double a, b;
    if (x.isLiteral(&a) && y.isLiteral(&b)) return literal(a - b);
    if (y.isLiteral(&b) && b == 0.0) return x;
    if (x.isLiteral(&a) && a == 0.0) return -y;
    return make(ExprKind::Sub, x, y);
  }
  friend ScalarExpr operator*(const ScalarExpr& x, const ScalarExpr& y) {
    double a, b;
    if (x.isLiteral(&a) && y.isLiteral(&b)) return literal(a * b);
    if (x.isLiteral(&a)) {
      if (a == 0.0) return literal(0.0);
      if (a == 1.0) return y;
    }
    if (y.isLiteral(&b)) {
      if (b == 0.0) return literal(0.0);
      if (b == 1.0) return x;
    }
    return make(ExprKind::Mul, x, y);
  }
  friend ScalarExpr operator/(const ScalarExpr& x, const ScalarExpr& y) {
    double a, b;
    if (y.isLiteral(&b) && b == 1.0) return x;
    if (x.isLiteral(&a) && y.isLiteral(&b) && b != 0.0) return literal(a / b);
    if (x.isLiteral(&a) && a == 0.0 && !(y.isLiteral(&b) && b == 0.0)) return literal(0.0);
    return make(ExprKind::Div, x, y);
  }
  ScalarExpr operator-() const {
    double a;
    if (isLiteral(&a)) return literal(-a);
    if (n_->kind == ExprKind::Neg) return ScalarExpr(n_->a);
    return make(ExprKind::Neg, *this);
  }
  ScalarExpr pow(int k) const {
    if (k == 0) return literal(1.0);
    if (k == 1) return *this;
    double a;
    if (isLiteral(&a)) return literal(std::pow(a, k));
    ScalarExpr r = make(ExprKind::Pow, *this);
    const_cast<Node*>(r.n_.get())->exponent = k;
    return r;
  }
  static ScalarExpr sin(const ScalarExpr& x) { return make(ExprKind::Sin, x); }
  static ScalarExpr cos(const ScalarExpr& x) { return make(ExprKind::Cos, x); }
  static ScalarExpr exp(const ScalarExpr& x) { return make(ExprKind::Exp, x); }
  static ScalarExpr log(const ScalarExpr& x) { return make(ExprKind::Log, x); }

  /// IEEE double evaluation at tau. Throws EvalError on division by zero or
  /// ln of a non-positive argument.
  double eval(double tau) const {
    const Node* n = n_.get();
    switch (n->kind) {
      case ExprKind::Literal: return n->value;
      case ExprKind::Var: return tau;
      case ExprKind::Add: return ScalarExpr(n->a).eval(tau) + ScalarExpr(n->b).eval(tau);
      case ExprKind::Sub: return ScalarExpr(n->a).eval(tau) - ScalarExpr(n->b).eval(tau);
      case ExprKind::Mul: return ScalarExpr(n->a).eval(tau) * ScalarExpr(n->b).eval(tau);
      case ExprKind::Div: {
        double den = ScalarExpr(n->b).eval(tau);
        if (den == 0.0) throw EvalError("division by zero at tau = " + std::to_string(tau));
        return ScalarExpr(n->a).eval(tau) / den;
      }
      case ExprKind::Pow: {
        double base = ScalarExpr(n->a).eval(tau);
        double r = 1.0;
        for (int i = 0; i < n->exponent; ++i) r *= base;
        return r;
      }
      case ExprKind::Neg: return -ScalarExpr(n->a).eval(tau);
      case ExprKind::Sin: return std::sin(ScalarExpr(n->a).eval(tau));
      case ExprKind::Cos: return std::cos(ScalarExpr(n->a).eval(tau));
      case ExprKind::Exp: return std::exp(ScalarExpr(n->a).eval(tau));
      case ExprKind::Log: {
        double arg = ScalarExpr(n->a).eval(tau);
        if (arg <= 0.0) throw EvalError("ln of non-positive argument at tau = " + std::to_string(tau));
        return std::log(arg);
      }
    }
    throw Error("corrupt expression tree");
  }

  /// d/dtau by the standard rules; no simplification beyond the constant
  /// folding performed by the node constructors.
  ScalarExpr derivative() const {
    const Node* n = n_.get();
    ScalarExpr a(n->a), b(n->b);
    switch (n->kind) {
      case ExprKind::Literal: return literal(0.0);
      case ExprKind::Var: return literal(1.0);
      case ExprKind::Add: return a.derivative() + b.derivative();
      case ExprKind::Sub: return a.derivative() - b.derivative();
      case ExprKind::Mul: return a.derivative() * b + a * b.derivative();
      case ExprKind::Div: return (a.derivative() * b - a * b.derivative()) / b.pow(2);
      case ExprKind::Pow: return literal(double(n->exponent)) * a.pow(n->exponent - 1) * a.derivative();
      case ExprKind::Neg: return -a.derivative();
      case ExprKind::Sin: return cos(a) * a.derivative();
      case ExprKind::Cos: return -(sin(a) * a.derivative());
      case ExprKind::Exp: return exp(a) * a.derivative();
      case ExprKind::Log: return a.derivative() / a;
    }
    throw Error("corrupt expression tree");
  }

  /// Parseable text form; parse(str()) evaluates identically.
  std::string str() const {
    const Node* n = n_.get();
    auto num = [](double v) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      return std::string(buf);
    };
    switch (n->kind) {
      case ExprKind::Literal:
        return n->value < 0 ? "(" + num(n->value) + ")" : num(n->value);
      case ExprKind::Var: return "t";
      case ExprKind::Add: return "(" + ScalarExpr(n->a).str() + " + " + ScalarExpr(n->b).str() + ")";
      case ExprKind::Sub: return "(" + ScalarExpr(n->a).str() + " - " + ScalarExpr(n->b).str() + ")";
      case ExprKind::Mul: return "(" + ScalarExpr(n->a).str() + "*" + ScalarExpr(n->b).str() + ")";
      case ExprKind::Div: return "(" + ScalarExpr(n->a).str() + "/" + ScalarExpr(n->b).str() + ")";
      case ExprKind::Pow: return ScalarExpr(n->a).str() + "^" + std::to_string(n->exponent);
      case ExprKind::Neg: return "(-" + ScalarExpr(n->a).str() + ")";
      case ExprKind::Sin: return "sin(" + ScalarExpr(n->a).str() + ")";
      case ExprKind::Cos: return "cos(" + ScalarExpr(n->a).str() + ")";
      case ExprKind::Exp: return "exp(" + ScalarExpr(n->a).str() + ")";
      case ExprKind::Log: return "ln(" + ScalarExpr(n->a).str() + ")";
    }
    throw Error("corrupt expression tree");
  }

  bool is_zero() const {
    double v;
    return isLiteral(&v) && v == 0.0;
  }
};

namespace detail {

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  ScalarExpr parse() {
    skip_ws();
    if (pos_ >= s_.size()) fail({"expression"});
    ScalarExpr e = expr();
    skip_ws();
    if (pos_ < s_.size()) fail({"operator", "end of input"});
    return e;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(std::vector<std::string> expected) {
    std::string what = "parse error at byte " + std::to_string(pos_) + ": expected ";
    for (std::size_t i = 0; i < expected.size(); ++i)
      what += (i ? " | " : "") + expected[i];
    throw ParseError(pos_, std::move(expected), what);
  }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }

  ScalarExpr expr() {
    ScalarExpr e = term();
    for (;;) {
      if (eat('+')) e = e + term();
      else if (eat('-')) e = e - term();
      else return e;
    }
  }

  ScalarExpr term() {
    ScalarExpr e = unary();
    for (;;) {
      if (eat('*')) e = e * unary();
      else if (eat('/')) e = e / unary();
      else return e;
    }
  }

  ScalarExpr unary() {
    if (eat('-')) return -unary();
    return power();
  }

  ScalarExpr power() {
    ScalarExpr base = atom();
    if (eat('^')) {
      skip_ws();
      std::size_t start = pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      if (pos_ == start) fail({"integer exponent"});
      int k = std::stoi(std::string(s_.substr(start, pos_ - start)));
      return base.pow(k);
    }
    return base;
  }

  ScalarExpr atom() {
    skip_ws();
    if (pos_ >= s_.size()) fail({"number", "t", "function", "("});
    char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      ScalarExpr e = expr();
      if (!eat(')')) fail({")"});
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t start = pos_;
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      std::string id(s_.substr(start, pos_ - start));
      if (id == "t") return ScalarExpr::var();
      if (id == "sin" || id == "cos" || id == "exp" || id == "ln") {
        if (!eat('(')) fail({"("});
        ScalarExpr arg = expr();
        if (!eat(')')) fail({")"});
        if (id == "sin") return ScalarExpr::sin(arg);
        if (id == "cos") return ScalarExpr::cos(arg);
        if (id == "exp") return ScalarExpr::exp(arg);
        return ScalarExpr::log(arg);
      }
      pos_ = start;
      fail({"t", "sin", "cos", "exp", "ln"});
    }
    fail({"number", "t", "function", "("});
  }

  ScalarExpr number() {
    std::size_t start = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (pos_ < s_.size() && s_[pos_] == '.') {
      ++pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      std::size_t mark = pos_;
      ++pos_;
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      } else {
        pos_ = mark;  // bare 'e' belongs to the next token
      }
    }
    if (pos_ == start) fail({"number"});
    return ScalarExpr::literal(std::stod(std::string(s_.substr(start, pos_ - start))));
  }
};

}  // namespace detail

/// Parse an expression in the lag variable `t`. Precedence ^ > unary minus >
/// * / > + -, left associative, parentheses override.
inline ScalarExpr parse_expr(std::string_view text) {
  if (text.empty()) throw ParseError(0, {"expression"}, "empty expression");
  return detail::Parser(text).parse();
}

/// Dense grid of scalar expressions; the representation of a matrix-valued
/// kernel on one delay interval.
struct ExprGrid {
  int rows = 0, cols = 0;
  std::vector<ScalarExpr> e;

  ExprGrid() = default;
  ExprGrid(int r, int c) : rows(r), cols(c), e(std::size_t(r) * c) {}

  static ExprGrid zero(int r, int c) { return ExprGrid(r, c); }

  ScalarExpr& at(int r, int c) { return e[std::size_t(r) * cols + c]; }
  const ScalarExpr& at(int r, int c) const { return e[std::size_t(r) * cols + c]; }

  bool all_zero() const {
    for (const auto& x : e)
      if (!x.is_zero()) return false;
    return true;
  }
};

}  // namespace kras
