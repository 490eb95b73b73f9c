#pragma once

#include <stdexcept>
#include <string>

namespace hydrocar {

// Malformed input: bad files, dangling references, invalid arguments.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure: indefinite matrices, non-convergence.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hydrocar
