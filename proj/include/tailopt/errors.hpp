#pragma once

#include <stdexcept>
#include <string>

namespace tailopt {

/// Invalid parameters, malformed spec files, dimension mismatches.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values, singular systems, solvers that fail to converge.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tailopt
