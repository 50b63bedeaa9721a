#pragma once

#include <stdexcept>
#include <string>

namespace cforge {

/// Input that violates a documented contract (bad file, bad config, broken invariant).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A processing stage could not produce its output.
class StageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cforge
