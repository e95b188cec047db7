#pragma once

#include <stdexcept>
#include <string>

namespace tabrec {

// Bad or inconsistent run configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent input data (CLI exit code 3).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Hierarchy wiring problems: unknown parents, level mismatches, orphans.
struct StructuralError : DataError {
  explicit StructuralError(const std::string& msg) : DataError(msg) {}
};

// Field-level problems: bad deciles, non-finite centroids, negative counts.
struct ValidationError : DataError {
  explicit ValidationError(const std::string& msg) : DataError(msg) {}
};

// Numerical failure at run time, e.g. a non-finite log likelihood (exit code 4).
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace tabrec
