#pragma once

#include <stdexcept>
#include <string>

namespace svr {

// Bad user input: malformed files, shape mismatches, out-of-range parameters.
// The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical routine could not deliver its postcondition.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace svr
