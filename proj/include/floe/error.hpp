#pragma once

#include <stdexcept>
#include <string>

namespace floe {

// Error taxonomy shared across the library. ConfigError covers invalid
// configuration (unknown keys, bad hyperparameters), DataError covers
// malformed or inconsistent input data, IoError covers file problems.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

} // namespace floe
