// core/include/biaslattice/common.hpp
//
// Shared error types and small string helpers.

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace biaslattice {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not conform for the requested operation.
struct ShapeError : Error {
  using Error::Error;
};

// Malformed or inconsistent input data (datasets, catalogs, configs).
struct DataError : Error {
  using Error::Error;
};

// Checkpoint files that are missing, corrupt, or version-incompatible.
struct CheckpointError : Error {
  using Error::Error;
};

template <class... Args>
std::string strcat_all(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

}  // namespace biaslattice
