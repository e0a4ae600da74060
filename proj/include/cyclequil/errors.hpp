#pragma once

#include <stdexcept>
#include <string>

namespace cyclequil {

// Malformed input file (bad JSON, missing keys, wrong types).
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally invalid data: dangling endpoints, non-positive capacities,
// acyclic graphs, dimension mismatches.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Cycle enumeration hit its guard limit.
struct CycleLimitError : std::runtime_error {
  CycleLimitError(const std::string& what, std::size_t limit_)
      : std::runtime_error(what), limit(limit_) {}
  std::size_t limit;
};

// An iterative solver stopped before reaching its tolerance.
struct ConvergenceError : std::runtime_error {
  explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

// None of the closed-form case patterns of an analytic solver is feasible.
struct NoFeasibleCaseError : std::runtime_error {
  explicit NoFeasibleCaseError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cyclequil
