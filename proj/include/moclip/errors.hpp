#pragma once

#include <stdexcept>
#include <string>

namespace moclip {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent user configuration (unknown keys, bad ratios, unknown classes).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Incompatible tensor or data shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// Input that makes an operation undefined, e.g. a zero-norm row.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Violated call contract (non-scalar loss passed to backward, tensor not on tape, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A matrix expected to be positive semi-definite has a clearly negative eigenvalue.
class NotPsdError : public Error {
 public:
  using Error::Error;
};

/// Malformed file: bad magic, unsupported version, unparsable record.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Structurally damaged file: truncation or checksum mismatch.
class CorruptionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Non-finite values produced during training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace moclip
