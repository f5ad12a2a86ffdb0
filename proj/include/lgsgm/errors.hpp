#pragma once

#include <stdexcept>
#include <string>

namespace lgsgm {

// Root of every error thrown by the library. The CLI maps the concrete
// subclasses onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or dimension disagreement between tensors, configs or checkpoints.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Caller violated a precondition (empty reduction, non-scalar backward, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered, or a zero-norm vector where a direction is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Filesystem failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace lgsgm
