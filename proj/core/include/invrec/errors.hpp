#pragma once

#include <stdexcept>
#include <string>

namespace invrec {

// Every failure surfaced by the library derives from Error so callers
// (the CLI in particular) can report a one-line message and exit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

// Operation attempted in an invalid lifecycle state (e.g. stepping a finished episode).
class StateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class CorruptionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Raised when a NaN/Inf shows up in a loss or parameter during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace invrec
