#pragma once

#include <stdexcept>
#include <string>

namespace trifuse {

// Bad shapes, bad config values, unparseable input files. CLI exit code 1.
class validation_error : public std::runtime_error {
 public:
  explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf escaping a numeric kernel or a loss component. CLI exit code 2.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace trifuse
