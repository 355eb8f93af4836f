#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nbsopt/grid.hpp"

namespace nbsopt {

/// Base error. `code()` is a module-qualified identifier such as
/// "instance.parse" or "solver.external".
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

/// Schema violation while reading an instance; `field()` is a JSON path.
class ParseError : public Error {
 public:
  ParseError(std::string field, const std::string& message)
      : Error("instance.parse", field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Invariant violation; carries the offending coordinates when relevant.
class ValidationError : public Error {
 public:
  ValidationError(std::string code, const std::string& message, std::vector<Cell> cells = {})
      : Error(std::move(code), describe(message, cells)), cells_(std::move(cells)) {}
  const std::vector<Cell>& cells() const { return cells_; }

 private:
  static std::string describe(const std::string& message, const std::vector<Cell>& cells) {
    if (cells.empty()) return message;
    std::string s = message + " at";
    for (std::size_t k = 0; k < cells.size() && k < 8; ++k)
      s += " (" + std::to_string(cells[k].i) + "," + std::to_string(cells[k].j) + ")";
    if (cells.size() > 8) s += " ...";
    return s;
  }
  std::vector<Cell> cells_;
};

class SolveError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io", message) {}
};

}  // namespace nbsopt
