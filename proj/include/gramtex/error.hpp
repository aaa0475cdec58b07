#pragma once

#include <stdexcept>
#include <string>

namespace gramtex {

// Base of every error the engine raises. The CLI maps all of these to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes disagree along a named axis.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Spatial arithmetic does not work out (odd pooling extent, non-exact conv output, ...).
class GeometryError : public Error {
 public:
  using Error::Error;
};

// Caller broke an API precondition (non-scalar loss, misaligned tap lists, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// A file is not in the expected binary or image format.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A well-formed file does not match what the network expects.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// An image is too small for the requested crop or tiling.
class SizeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Evaluation input (manifest, patch files) is unreadable or malformed.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace gramtex
