#pragma once

#include <stdexcept>
#include <string>

namespace glue {

// Raised for malformed inputs, invalid models and violated preconditions.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace glue
