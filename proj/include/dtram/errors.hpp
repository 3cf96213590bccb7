#pragma once

#include <stdexcept>

namespace dtram {

// Invalid usage or configuration (CLI exit code 1).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Missing or malformed input data (CLI exit code 2).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failure such as a non-finite loss (CLI exit code 3).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dtram
