#pragma once
// Error hierarchy shared by every module. The CLI maps each family to an
// exit code: validation 2, backend 3, solver 4.

#include <stdexcept>
#include <string>

namespace factorlens {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input or artifact violates a type invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Oracle transport failure.
class BackendError : public Error {
 public:
  using Error::Error;
};

// Oracle answered but the answer could not be parsed.
class ProtocolError : public BackendError {
 public:
  ProtocolError(const std::string& what, std::string raw)
      : BackendError(what), raw_(std::move(raw)) {}
  const std::string& raw_response() const noexcept { return raw_; }

 private:
  std::string raw_;
};

// Elicitation produced nothing usable (no factors, too few statements).
class ElicitationError : public BackendError {
 public:
  using BackendError::BackendError;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

// Constrained solver did not reach the requested residual.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double best_residual)
      : Error(what), best_residual_(best_residual) {}
  double best_residual() const noexcept { return best_residual_; }

 private:
  double best_residual_;
};

class InfeasibleError : public SolverError {
 public:
  using SolverError::SolverError;
};

// Edit history bookkeeping: wrong lineage, double revert, not at head.
class LineageError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class StoreError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public StoreError {
 public:
  using StoreError::StoreError;
};

}  // namespace factorlens
