#pragma once

#include <stdexcept>
#include <string>

namespace medvsr {

// Violated call contract (shape mismatch, bad geometry, malformed dataset).
struct contract_error : std::logic_error {
  explicit contract_error(const std::string& msg) : std::logic_error(msg) {}
};

// Argument outside the mathematical domain of an operation.
struct domain_error : std::domain_error {
  explicit domain_error(const std::string& msg) : std::domain_error(msg) {}
};

// Non-finite values or numerically failed computation at runtime.
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad CLI usage, unreadable config, missing inputs.
struct usage_error : std::runtime_error {
  explicit usage_error(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw contract_error(msg);
}

}  // namespace medvsr
