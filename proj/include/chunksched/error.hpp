// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace chunksched {

// Base class for all hard failures raised by the library. Validation problems
// that are reported as data (ValidationReport, diagnostics) never throw.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input documents (JSON, annotated kernels, IR files).
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(what) {}
};

// Missing or unwritable files.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

// A feature that is recognized but intentionally not implemented.
class UnimplementedError : public Error {
 public:
  explicit UnimplementedError(const std::string& what) : Error(what) {}
};

}  // namespace chunksched
