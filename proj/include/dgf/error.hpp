#pragma once

#include <stdexcept>
#include <string>

namespace dgf {

// Shape/channel mismatch, bad dimensions, bad hyperparameters.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Arithmetic that would leave the finite reals (division by exact zero, overflow).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// eps too small for a window whose guidance variance is (numerically) zero.
class DegenerateWindow : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Non-finite gradient or loss during optimization.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Finite-difference evaluation produced a non-finite value.
class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File could not be read, written or parsed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dgf
