#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace oner {

// Raised when a tensor operation produces or receives non-finite values.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Raised by the experience-file loader; carries the byte offset of the fault.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : std::runtime_error("parse error at offset " + std::to_string(offset) +
                           ": " + what),
        offset_(offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Raised when a config document contains an unknown or ill-typed key.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace oner
