#pragma once

#include <stdexcept>
#include <string>

namespace linsamp {

// Precondition / contract violations: bad shapes, invalid parameters.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A required matrix factorization failed (not PD, singular without a
// declared pseudo-factor, ...).
class FactorizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Iterative optimisation blew past the divergence threshold.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The M-step update is undefined (e.g. zero posterior mode norm).
class DegenerateDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Linear solver produced non-finite values or otherwise failed.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Internal numeric cross-check failed (dual-form identities, monotonicity).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A user-supplied differentiable model failed its consistency probes.
class ModelDefinitionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractError(message);
}

}  // namespace linsamp
