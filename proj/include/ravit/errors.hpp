#pragma once

#include <stdexcept>
#include <string>

namespace ravit {

/// Shapes that do not agree (matmul inner dims, indivisible patch size, ...).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Caller broke an API contract (mismatched config/params, non-scalar loss).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A NaN or Inf showed up in a computed value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed on-disk data (dataset records, checkpoints).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid run configuration document.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ravit
