#pragma once

#include <stdexcept>
#include <string>

namespace hila {

/// Error classes; each maps to a distinct process exit code in the CLI.
enum class ErrorCategory {
  config = 2,
  io = 3,
  dimension = 4,
  domain = 5,
  degenerate = 6,
  divergence = 7,
  undefined_metric = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& what) : Error(ErrorCategory::dimension, what) {}
};

/// Argument outside an operation's mathematical domain (e.g. log of a non-positive entry).
struct DomainError : Error {
  explicit DomainError(const std::string& what) : Error(ErrorCategory::domain, what) {}
};

/// Zero-norm vectors, zero-variance tests, empty inputs.
struct DegenerateError : Error {
  explicit DegenerateError(const std::string& what) : Error(ErrorCategory::degenerate, what) {}
};

struct DivergenceError : Error {
  explicit DivergenceError(const std::string& what) : Error(ErrorCategory::divergence, what) {}
};

struct UndefinedMetricError : Error {
  explicit UndefinedMetricError(const std::string& what)
      : Error(ErrorCategory::undefined_metric, what) {}
};

}  // namespace hila
