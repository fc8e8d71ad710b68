#pragma once

#include <stdexcept>
#include <string>

namespace uwipt {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or extents that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Model or command configuration is inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Sequence longer than the positional table.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Unreadable, missing, or malformed data on disk.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or failed numeric checks.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace uwipt
