#pragma once

#include <stdexcept>
#include <string>

namespace bletrack {

/// Bad input file, unknown preset name, empty search grid and similar.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model-level failure: singular fit, infeasible target.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bletrack
