#pragma once

#include <stdexcept>
#include <string>

namespace featmem {

/// Thrown on any contract violation: invalid construction arguments,
/// dimension mismatches, malformed input files.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace featmem
