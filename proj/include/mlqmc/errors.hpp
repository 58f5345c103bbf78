#pragma once

#include <stdexcept>
#include <string>

namespace mlqmc {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainError : Error {
  using Error::Error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

/// Positive definiteness of the circulant extension was not reached within the
/// configured number of padding doublings.
struct PaddingExhausted : Error {
  using Error::Error;
};

struct NestingViolation : Error {
  using Error::Error;
};

struct SolverDiverged : Error {
  using Error::Error;
};

struct InsufficientShifts : Error {
  using Error::Error;
};

/// Sample allocation would exceed the configured cost cap.
struct BudgetExceeded : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace mlqmc
