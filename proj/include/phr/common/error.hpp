#pragma once

#include <stdexcept>
#include <string>

namespace phr {

// Malformed or unreadable input data: WAV files, checkpoints, manifests,
// recipe lists, config files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A computation produced a non-finite value or failed to converge.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace phr
