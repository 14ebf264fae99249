#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace boed {

// Invalid parameters, shapes or configuration values supplied by a caller.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A precondition of an API was broken (programming error on the caller side).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Operation requested from a model that does not provide it, e.g. log_lik on
// an implicit likelihood.
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A NaN/Inf appeared where finite values are required.
class NumericalFault : public std::runtime_error {
 public:
  NumericalFault(const std::string& what, std::size_t node = static_cast<std::size_t>(-1))
      : std::runtime_error(what), node_(node) {}
  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace boed
