#pragma once

#include <stdexcept>
#include <string>

namespace hgnn {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor / matrix dimension mismatches.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid user-supplied configuration (mesh/model/train settings).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Infeasible rank/strategy combinations.
class PartitionError : public Error {
 public:
  using Error::Error;
};

// Collective misuse: shape disagreement, mismatched call sequences, aborted peers.
class CollectiveError : public Error {
 public:
  using Error::Error;
};

// Cross-rank data structure inconsistencies (global id conflicts, degree mismatches).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Operation invoked before its required inputs were populated.
class UninitializedError : public Error {
 public:
  using Error::Error;
};

// Non-finite gradients or incongruent optimizer state.
class OptimizerError : public Error {
 public:
  using Error::Error;
};

// Requested problem size exceeds the configured memory budget.
class SizeError : public Error {
 public:
  using Error::Error;
};

// Model parameters drifted apart across ranks (detected by the audit).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// File format / serialization failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace hgnn
