#ifndef CAPEVAL_ERROR_HPP
#define CAPEVAL_ERROR_HPP

#include <stdexcept>
#include <string>

namespace capeval {

// Exception categories. The CLI maps each to a process exit code:
// usage/input problems -> 2, data problems -> 3, numeric failures -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Bad magic, unsupported version or otherwise unreadable header.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// JSONL line that does not match the requested schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Structurally valid file whose contents disagree with its own header.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

/// Values that violate a domain invariant (zero vectors, unresolved ids, NaN ratings).
class DataError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace capeval

#endif  // CAPEVAL_ERROR_HPP
