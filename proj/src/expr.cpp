// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include "chunksched/expr.hpp"

#include <cctype>
#include <vector>

#include "chunksched/error.hpp"

namespace chunksched {

struct Expr::Node {
  char op = 0;  // 0 = number, 'v' = variable, else binary/unary operator
  int64_t value = 0;
  std::string name;
  std::shared_ptr<const Node> lhs, rhs;
};

namespace {

using NodePtr = std::shared_ptr<const Expr::Node>;

class Parser {
 public:
  explicit Parser(const std::string& text) : text_(text) {}

  NodePtr parse() {
    NodePtr n = expr();
    skip();
    if (pos_ != text_.size()) fail("unexpected '" + text_.substr(pos_) + "'");
    return n;
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw ParseError("expression '" + text_ + "': " + why);
  }

  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool eat(const std::string& tok) {
    skip();
    if (text_.compare(pos_, tok.size(), tok) != 0) return false;
    // "mod" must not swallow the prefix of an identifier such as "model".
    if (std::isalpha(static_cast<unsigned char>(tok[0])) &&
        pos_ + tok.size() < text_.size() &&
        (std::isalnum(static_cast<unsigned char>(text_[pos_ + tok.size()])) ||
         text_[pos_ + tok.size()] == '_')) {
      return false;
    }
    pos_ += tok.size();
    return true;
  }

  static NodePtr binary(char op, NodePtr a, NodePtr b) {
    auto n = std::make_shared<Expr::Node>();
    n->op = op;
    n->lhs = std::move(a);
    n->rhs = std::move(b);
    return n;
  }

  NodePtr expr() {
    NodePtr n = term();
    for (;;) {
      if (eat("+")) {
        n = binary('+', n, term());
      } else if (eat("-")) {
        n = binary('-', n, term());
      } else {
        return n;
      }
    }
  }

  NodePtr term() {
    NodePtr n = unary();
    for (;;) {
      if (eat("*")) {
        n = binary('*', n, unary());
      } else if (eat("/")) {
        n = binary('/', n, unary());
      } else if (eat("%") || eat("mod")) {
        n = binary('%', n, unary());
      } else {
        return n;
      }
    }
  }

  NodePtr unary() {
    if (eat("-")) return binary('-', zero(), unary());
    return primary();
  }

  static NodePtr zero() { return std::make_shared<Expr::Node>(); }

  NodePtr primary() {
    skip();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    if (eat("(")) {
      NodePtr n = expr();
      if (!eat(")")) fail("missing ')'");
      return n;
    }
    const char c = text_[pos_];
    auto n = std::make_shared<Expr::Node>();
    if (std::isdigit(static_cast<unsigned char>(c))) {
      size_t end = pos_;
      while (end < text_.size() && std::isdigit(static_cast<unsigned char>(text_[end]))) ++end;
      n->value = std::stoll(text_.substr(pos_, end - pos_));
      pos_ = end;
      return n;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t end = pos_;
      while (end < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[end])) || text_[end] == '_')) {
        ++end;
      }
      n->op = 'v';
      n->name = text_.substr(pos_, end - pos_);
      if (n->name == "mod") fail("'mod' needs a left operand");
      pos_ = end;
      return n;
    }
    fail(std::string("unexpected '") + c + "'");
  }

  const std::string& text_;
  size_t pos_ = 0;
};

int64_t floor_div(int64_t a, int64_t b) {
  int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

int64_t eval_node(const Expr::Node& n,
                  const std::map<std::string, int64_t>& env) {
  switch (n.op) {
    case 0: return n.value;
    case 'v': {
      auto it = env.find(n.name);
      if (it == env.end()) throw Error("unknown symbol '" + n.name + "'");
      return it->second;
    }
    default: break;
  }
  const int64_t a = eval_node(*n.lhs, env);
  const int64_t b = eval_node(*n.rhs, env);
  switch (n.op) {
    case '+': return a + b;
    case '-': return a - b;
    case '*': return a * b;
    case '/':
      if (b == 0) throw Error("division by zero");
      return floor_div(a, b);
    case '%':
      if (b == 0) throw Error("modulo by zero");
      return a - floor_div(a, b) * b;
  }
  throw Error("bad expression node");
}

int degree_of(const Expr::Node& n, const std::set<std::string>& vars,
              const std::string& text) {
  switch (n.op) {
    case 0: return 0;
    case 'v': return vars.count(n.name) ? 1 : 0;
    default: break;
  }
  const int a = degree_of(*n.lhs, vars, text);
  const int b = degree_of(*n.rhs, vars, text);
  switch (n.op) {
    case '+':
    case '-': return std::max(a, b);
    case '*':
      if (a + b > 1) throw Error("non-affine expression '" + text + "'");
      return a + b;
    default:
      if (b > 0) throw Error("non-affine expression '" + text + "'");
      return a;
  }
}

void collect(const Expr::Node& n, std::set<std::string>& out) {
  if (n.op == 'v') out.insert(n.name);
  if (n.lhs) collect(*n.lhs, out);
  if (n.rhs) collect(*n.rhs, out);
}

}  // namespace

Expr Expr::parse(const std::string& text) {
  Expr e;
  e.text_ = text;
  e.root_ = Parser(e.text_).parse();
  return e;
}

Expr Expr::constant(int64_t v) { return parse(std::to_string(v)); }

int64_t Expr::eval(const std::map<std::string, int64_t>& env) const {
  return eval_node(*root_, env);
}

int Expr::degree(const std::set<std::string>& vars) const {
  return degree_of(*root_, vars, text_);
}

std::set<std::string> Expr::symbols() const {
  std::set<std::string> out;
  collect(*root_, out);
  return out;
}

}  // namespace chunksched
