#pragma once

#include <stdexcept>
#include <string>

namespace pnrd {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Input data violates a structural invariant (normalization, ordering, ...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Base for failures raised by the calibration protocols.
class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientDataError : public CalibrationError {
 public:
  using CalibrationError::CalibrationError;
};

class SaturationNotReachedError : public CalibrationError {
 public:
  using CalibrationError::CalibrationError;
};

class ModelMismatchError : public CalibrationError {
 public:
  using CalibrationError::CalibrationError;
};

/// Averaged NRF of a twin-beam run is not below one.
class NonQuantumDataError : public CalibrationError {
 public:
  using CalibrationError::CalibrationError;
};

}  // namespace pnrd
