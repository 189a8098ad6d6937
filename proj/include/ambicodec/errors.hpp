#pragma once

#include <stdexcept>
#include <string>

namespace ambicodec {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad command line or malformed configuration. CLI exit code 2.
struct UsageError : Error {
  using Error::Error;
};

// Unreadable, malformed or inconsistent input data. CLI exit code 3.
struct DataError : Error {
  using Error::Error;
};

// Non-finite values or failed numeric checks. CLI exit code 4.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace ambicodec
