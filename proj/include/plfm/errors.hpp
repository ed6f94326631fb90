#pragma once

#include <stdexcept>
#include <string>

namespace plfm {

/// Malformed or inconsistent data: bad files, out-of-range parameters,
/// shape mismatches between images. Maps to CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Structurally valid inputs that cannot be combined: checkpoint/model
/// dimension mismatches and the like. Maps to CLI exit code 3.
class CompatError : public std::runtime_error {
 public:
  explicit CompatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace plfm
