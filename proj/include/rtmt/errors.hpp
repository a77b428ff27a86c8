#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rtmt {

// Malformed input: bad JSON shape, unknown field, inconsistent dimensions.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A conditioning event has probability zero.
class ImpossibleEvidence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A policy table was queried on an argument it does not cover.
class MissingEntry : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BudgetExceeded : public std::runtime_error {
 public:
  BudgetExceeded(const std::string& what, double counted, double limit)
      : std::runtime_error(what + ": counted " + format_count(counted) +
                           " exceeds budget " + format_count(limit)),
        counted_(counted),
        limit_(limit) {}

  double counted() const { return counted_; }
  double limit() const { return limit_; }

 private:
  static std::string format_count(double v) {
    if (v < 1e15) return std::to_string(static_cast<std::uint64_t>(v));
    return std::to_string(v);
  }

  double counted_;
  double limit_;
};

}  // namespace rtmt
