#pragma once

#include <stdexcept>
#include <string>

namespace cobwebtm {

// Raised for malformed caller input: dimension mismatches, non-finite
// embeddings, inconsistent files. The CLI maps it to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cobwebtm
