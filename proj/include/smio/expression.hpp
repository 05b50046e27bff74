#pragma once

// Small arithmetic expression language for user-specified vector fields.
//
// Grammar (whitespace-insensitive, standard precedence):
//   expr    := term (('+' | '-') term)*
//   term    := factor (('*' | '/') factor)*
//   factor  := '-' factor | primary
//   primary := number | identifier | identifier '(' expr ')' | '(' expr ')'
// Functions: sin, cos, exp, sqrt, abs. Every other identifier must be a
// declared variable. Division by zero is guarded at evaluation time.

#include <cctype>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace smio {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, int line, int col)
      : std::runtime_error(msg + " at line " + std::to_string(line) + ", column " +
                           std::to_string(col)),
        line(line),
        col(col) {}
  int line;
  int col;
};

class EvalError : public std::runtime_error {
 public:
  explicit EvalError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
class Parser;
}

// Immutable expression over a fixed list of declared variables. Nodes are
// stored in evaluation (post) order: children always precede parents, so a
// single forward pass evaluates the tree.
class Expression {
 public:
  enum class Op { kConst, kVar, kNeg, kAdd, kSub, kMul, kDiv, kSin, kCos, kExp, kSqrt, kAbs };

  struct Node {
    Op op;
    double value = 0.0;  // kConst
    int var = -1;        // kVar: index into the declared variable list
    int a = -1;          // first child (node index), unary and binary
    int b = -1;          // second child, binary only
  };

  Expression() = default;

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<std::string>& variables() const { return vars_; }

  // Positional evaluation: values[i] binds the i-th declared variable.
  double eval(const double* values) const {
    double stack_buf[128];
    std::vector<double> heap_buf;
    double* out = stack_buf;
    if (nodes_.size() > 128) {
      heap_buf.resize(nodes_.size());
      out = heap_buf.data();
    }
    for (size_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      switch (n.op) {
        case Op::kConst: out[i] = n.value; break;
        case Op::kVar: out[i] = values[n.var]; break;
        case Op::kNeg: out[i] = -out[n.a]; break;
        case Op::kAdd: out[i] = out[n.a] + out[n.b]; break;
        case Op::kSub: out[i] = out[n.a] - out[n.b]; break;
        case Op::kMul: out[i] = out[n.a] * out[n.b]; break;
        case Op::kDiv:
          if (out[n.b] == 0.0) throw EvalError("division by zero in expression");
          out[i] = out[n.a] / out[n.b];
          break;
        case Op::kSin: out[i] = std::sin(out[n.a]); break;
        case Op::kCos: out[i] = std::cos(out[n.a]); break;
        case Op::kExp: out[i] = std::exp(out[n.a]); break;
        case Op::kSqrt:
          if (out[n.a] < 0.0) throw EvalError("sqrt of negative value in expression");
          out[i] = std::sqrt(out[n.a]);
          break;
        case Op::kAbs: out[i] = std::fabs(out[n.a]); break;
      }
    }
    return out[nodes_.size() - 1];
  }

  double eval(const std::vector<double>& values) const { return eval(values.data()); }

  // Named evaluation; every declared variable must be bound.
  double eval_named(const std::vector<std::pair<std::string, double>>& bindings) const {
    std::vector<double> values(vars_.size());
    std::vector<bool> bound(vars_.size(), false);
    for (const auto& [name, v] : bindings) {
      for (size_t i = 0; i < vars_.size(); ++i) {
        if (vars_[i] == name) {
          values[i] = v;
          bound[i] = true;
        }
      }
    }
    for (size_t i = 0; i < vars_.size(); ++i) {
      if (!bound[i]) throw EvalError("unbound variable '" + vars_[i] + "'");
    }
    return eval(values.data());
  }

  // Fully parenthesized form; parsing it back yields an identical AST.
  std::string to_string() const { return print(static_cast<int>(nodes_.size()) - 1); }

  bool identical(const Expression& other) const {
    if (nodes_.size() != other.nodes_.size()) return false;
    for (size_t i = 0; i < nodes_.size(); ++i) {
      const Node& x = nodes_[i];
      const Node& y = other.nodes_[i];
      if (x.op != y.op || x.var != y.var || x.a != y.a || x.b != y.b) return false;
      if (x.op == Op::kConst && x.value != y.value) return false;
    }
    return true;
  }

 private:
  friend class detail::Parser;

  std::string print(int idx) const {
    const Node& n = nodes_[idx];
    char buf[40];
    switch (n.op) {
      case Op::kConst:
        std::snprintf(buf, sizeof(buf), "%.17g", n.value);
        return buf;
      case Op::kVar: return vars_[n.var];
      case Op::kNeg: return "(-" + print(n.a) + ")";
      case Op::kAdd: return "(" + print(n.a) + "+" + print(n.b) + ")";
      case Op::kSub: return "(" + print(n.a) + "-" + print(n.b) + ")";
      case Op::kMul: return "(" + print(n.a) + "*" + print(n.b) + ")";
      case Op::kDiv: return "(" + print(n.a) + "/" + print(n.b) + ")";
      case Op::kSin: return "sin(" + print(n.a) + ")";
      case Op::kCos: return "cos(" + print(n.a) + ")";
      case Op::kExp: return "exp(" + print(n.a) + ")";
      case Op::kSqrt: return "sqrt(" + print(n.a) + ")";
      case Op::kAbs: return "abs(" + print(n.a) + ")";
    }
    return "";
  }

  std::vector<Node> nodes_;
  std::vector<std::string> vars_;
};

namespace detail {

class Parser {
 public:
  Parser(const std::string& src, const std::vector<std::string>& vars, Expression* out)
      : src_(src), out_(out) {
    out_->vars_ = vars;
  }

  void run() {
    const int root = parse_expr();
    skip_ws();
    if (pos_ < src_.size()) fail("unexpected trailing input");
    if (root < 0) fail("empty expression");
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line_, col_); }

  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) advance();
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      advance();
      return true;
    }
    return false;
  }

  int push(Expression::Node n) {
    out_->nodes_.push_back(n);
    return static_cast<int>(out_->nodes_.size()) - 1;
  }

  int parse_expr() {
    int lhs = parse_term();
    for (;;) {
      if (eat('+')) {
        const int rhs = parse_term();
        lhs = push({Expression::Op::kAdd, 0, -1, lhs, rhs});
      } else if (eat('-')) {
        const int rhs = parse_term();
        lhs = push({Expression::Op::kSub, 0, -1, lhs, rhs});
      } else {
        return lhs;
      }
    }
  }

  int parse_term() {
    int lhs = parse_factor();
    for (;;) {
      if (eat('*')) {
        const int rhs = parse_factor();
        lhs = push({Expression::Op::kMul, 0, -1, lhs, rhs});
      } else if (eat('/')) {
        const int rhs = parse_factor();
        lhs = push({Expression::Op::kDiv, 0, -1, lhs, rhs});
      } else {
        return lhs;
      }
    }
  }

  int parse_factor() {
    if (eat('-')) {
      const int child = parse_factor();
      return push({Expression::Op::kNeg, 0, -1, child, -1});
    }
    return parse_primary();
  }

  int parse_primary() {
    skip_ws();
    if (pos_ >= src_.size()) fail("unexpected end of expression");
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
    if (c == '(') {
      advance();
      const int inner = parse_expr();
      if (!eat(')')) fail("expected ')'");
      return inner;
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  int parse_number() {
    const size_t start = pos_;
    const int sl = line_, sc = col_;
    while (pos_ < src_.size() &&
           (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.'))
      advance();
    // exponent part
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      size_t look = pos_ + 1;
      if (look < src_.size() && (src_[look] == '+' || src_[look] == '-')) ++look;
      if (look < src_.size() && std::isdigit(static_cast<unsigned char>(src_[look]))) {
        while (pos_ < look) advance();
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_])))
          advance();
      }
    }
    const std::string text = src_.substr(start, pos_ - start);
    try {
      size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return push({Expression::Op::kConst, v, -1, -1, -1});
    } catch (const std::exception&) {
      throw ParseError("malformed number '" + text + "'", sl, sc);
    }
  }

  int parse_identifier() {
    const size_t start = pos_;
    const int sl = line_, sc = col_;
    while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                                  src_[pos_] == '_'))
      advance();
    const std::string name = src_.substr(start, pos_ - start);

    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == '(') {
      Expression::Op op;
      if (name == "sin") op = Expression::Op::kSin;
      else if (name == "cos") op = Expression::Op::kCos;
      else if (name == "exp") op = Expression::Op::kExp;
      else if (name == "sqrt") op = Expression::Op::kSqrt;
      else if (name == "abs") op = Expression::Op::kAbs;
      else throw ParseError("unknown function '" + name + "'", sl, sc);
      advance();  // '('
      const int arg = parse_expr();
      skip_ws();
      if (pos_ < src_.size() && src_[pos_] == ',') {
        throw ParseError("function '" + name + "' takes exactly one argument", line_, col_);
      }
      if (!eat(')')) fail("expected ')' after function argument");
      return push({op, 0, -1, arg, -1});
    }

    for (size_t i = 0; i < out_->vars_.size(); ++i) {
      if (out_->vars_[i] == name) {
        return push({Expression::Op::kVar, 0, static_cast<int>(i), -1, -1});
      }
    }
    throw ParseError("unknown identifier '" + name + "'", sl, sc);
  }

  const std::string& src_;
  Expression* out_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

}  // namespace detail

inline Expression parse(const std::string& source, const std::vector<std::string>& declared_vars) {
  Expression e;
  detail::Parser p(source, declared_vars, &e);
  p.run();
  return e;
}

}  // namespace smio
