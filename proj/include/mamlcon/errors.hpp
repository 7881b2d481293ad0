#pragma once

#include <stdexcept>

namespace mamlcon {

/// Invalid or inconsistent configuration, detected before work starts.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A dataset cannot satisfy what was asked of it (too few classes or examples).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mamlcon
