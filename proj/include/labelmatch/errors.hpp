#pragma once

#include <stdexcept>
#include <string>

namespace labelmatch {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (dataset files, vocabularies,
// verbalizers, label sets).
class DataError : public Error {
 public:
  using Error::Error;
};

// Violated precondition of a numeric primitive: shape mismatch, id out of
// range, fully masked sequence, non-finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace labelmatch
