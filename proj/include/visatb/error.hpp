// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace visatb {

enum class Errc {
  DuplicateTaskId,
  EmptyMetrics,
  MissingGroup,
  TooFewUnits,
  UnknownUnit,
  UnknownTask,
  MissingEntry,
  DegenerateDenominator,
  NonFiniteValue,
  EmptyBatch,
  MissingWeight,
  AlphaConstraint,
  MismatchedUnits,
  ZeroBaseline,
  InvalidBounds,
  InvalidRate,
  InvalidConfig,
  EmptySubset,
  TrainingDiverged,
  IoError,
  SchemaError,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::DuplicateTaskId: return "duplicate_task_id";
    case Errc::EmptyMetrics: return "empty_metrics";
    case Errc::MissingGroup: return "missing_group";
    case Errc::TooFewUnits: return "too_few_units";
    case Errc::UnknownUnit: return "unknown_unit";
    case Errc::UnknownTask: return "unknown_task";
    case Errc::MissingEntry: return "missing_entry";
    case Errc::DegenerateDenominator: return "degenerate_denominator";
    case Errc::NonFiniteValue: return "non_finite_value";
    case Errc::EmptyBatch: return "empty_batch";
    case Errc::MissingWeight: return "missing_weight";
    case Errc::AlphaConstraint: return "alpha_constraint";
    case Errc::MismatchedUnits: return "mismatched_units";
    case Errc::ZeroBaseline: return "zero_baseline";
    case Errc::InvalidBounds: return "invalid_bounds";
    case Errc::InvalidRate: return "invalid_rate";
    case Errc::InvalidConfig: return "invalid_config";
    case Errc::EmptySubset: return "empty_subset";
    case Errc::TrainingDiverged: return "training_diverged";
    case Errc::IoError: return "io_error";
    case Errc::SchemaError: return "schema_error";
  }
  return "unknown";
}

/// Library-wide exception. `code()` identifies the failure class so callers
/// can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& msg) { throw Error(code, msg); }

}  // namespace visatb
