// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>

namespace chunksched {

// Small integer expression language used by loop IR documents:
//   integers, identifiers, + - * / mod % and parentheses.
// `/` is floor division and `mod` always yields a value in [0, divisor).
class Expr {
 public:
  static Expr parse(const std::string& text);
  static Expr constant(int64_t v);

  int64_t eval(const std::map<std::string, int64_t>& env) const;
  // Degree in `vars` (0 or 1). Throws Error("non-affine ...") on products of
  // two variable terms or variable divisors.
  int degree(const std::set<std::string>& vars) const;
  std::set<std::string> symbols() const;
  const std::string& text() const { return text_; }

  struct Node;

 private:
  std::shared_ptr<const Node> root_;
  std::string text_;
};

}  // namespace chunksched
