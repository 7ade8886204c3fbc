#pragma once

#include <stdexcept>
#include <string>

namespace patchlab {

// Base for all hard failures raised by the library. Recoverable conditions
// (skipped records, dropped variants) are reported through result structs.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed user input: bad files, bad arguments, violated preconditions.
class InputError : public Error {
 public:
  using Error::Error;
};

// Numerical failure during training (non-finite loss, NaN reward).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace patchlab
