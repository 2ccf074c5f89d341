#pragma once

#include <stdexcept>
#include <string>

namespace pedsyn {

// Validation / contract violations (bad config, schema errors, misuse).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Remote or stub backend failure after the retry policy is exhausted.
class BackendError : public std::runtime_error {
 public:
  explicit BackendError(const std::string& what) : std::runtime_error(what) {}
};

// Shape/dimension mismatches in numeric code.
class DimensionError : public ValidationError {
 public:
  explicit DimensionError(const std::string& what) : ValidationError(what) {}
};

}  // namespace pedsyn
