#pragma once

#include <stdexcept>
#include <string>

namespace knmt {

/// Root of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not conform to an op's shape rule.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf observed in checked mode.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

class VocabularyError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed, truncated or incompatible file.
class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace knmt
