#pragma once

#include <stdexcept>
#include <string>

namespace bnbglm {

// Invalid user-supplied data or parameters (bad labels, k > p, ...).
class input_error : public std::runtime_error {
 public:
  explicit input_error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input files; the message names the offending row/column.
class parse_error : public std::runtime_error {
 public:
  explicit parse_error(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values or other numeric breakdown inside a kernel.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bnbglm
