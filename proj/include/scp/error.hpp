#pragma once

#include <stdexcept>
#include <string>

namespace scp {

// Violated precondition or invalid argument. CLI exit code 1.
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape mismatch between tensor operands.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Malformed input file contents (line numbers are part of the message).
class FormatError : public ContractError {
 public:
  using ContractError::ContractError;
};

// A NaN or Inf was produced; the message names the producing operation.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable or unwritable file. CLI exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace scp
