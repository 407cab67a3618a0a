#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace chord {

using Token = std::int32_t;
using TokenSeq = std::vector<Token>;

// Config / flag / file-content problems. The CLI maps this to its own exit code.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed on-disk data; carries the 1-based line where parsing stopped.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, long line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

// Raised when a training step produces a non-finite loss or gradient.
class TrainAbort : public std::runtime_error {
 public:
  explicit TrainAbort(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace chord
