#pragma once

#include <stdexcept>
#include <string>

namespace cddm {

// Caller broke a documented precondition (shape mismatch, out-of-range time, ...).
class ContractViolation : public std::invalid_argument {
 public:
  explicit ContractViolation(const std::string& what) : std::invalid_argument(what) {}
};

// A NaN or Inf surfaced during evaluation or differentiation.
class NumericOverflow : public std::runtime_error {
 public:
  NumericOverflow(std::string primitive, const std::string& what)
      : std::runtime_error(what), primitive_(std::move(primitive)) {}
  const std::string& primitive() const noexcept { return primitive_; }

 private:
  std::string primitive_;
};

// eps_from_x0 / sigma ratios refused because sigma fell below the floor.
class BoundaryStepError : public std::domain_error {
 public:
  explicit BoundaryStepError(const std::string& what) : std::domain_error(what) {}
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Training produced a non-finite loss; the message carries iteration/step.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint file rejected on load; kind tells which check failed.
class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, Version, Truncated, Checksum, Header, ShapeMismatch };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace cddm
