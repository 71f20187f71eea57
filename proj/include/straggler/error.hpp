// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace straggler {

enum class Errc {
  MalformedLine,
  UnknownOpType,
  HeaderMissing,
  ValidationFailed,
  IncompleteCoverage,
  MissingPeer,
  CycleDetected,
  ZeroIdeal,
  NotStraggling,
  InsufficientSamples,
  EmptyMicrobatch,
  TooFewSequences,
  EmptyGrid,
  InvalidConfig,
  Io,
};

inline const char* errc_name(Errc e) {
  switch (e) {
    case Errc::MalformedLine: return "MalformedLine";
    case Errc::UnknownOpType: return "UnknownOpType";
    case Errc::HeaderMissing: return "HeaderMissing";
    case Errc::ValidationFailed: return "ValidationFailed";
    case Errc::IncompleteCoverage: return "IncompleteCoverage";
    case Errc::MissingPeer: return "MissingPeer";
    case Errc::CycleDetected: return "CycleDetected";
    case Errc::ZeroIdeal: return "ZeroIdeal";
    case Errc::NotStraggling: return "NotStraggling";
    case Errc::InsufficientSamples: return "InsufficientSamples";
    case Errc::EmptyMicrobatch: return "EmptyMicrobatch";
    case Errc::TooFewSequences: return "TooFewSequences";
    case Errc::EmptyGrid: return "EmptyGrid";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

/// One broken trace invariant. Violations are data; validate() never throws.
struct Violation {
  enum class Rule {
    MissingCell,
    DuplicateRecord,
    NegativeDuration,
    OutOfRange,
    StepCountMismatch,
  };
  Rule rule;
  std::string key;
  std::string message;
};

inline const char* rule_name(Violation::Rule r) {
  switch (r) {
    case Violation::Rule::MissingCell: return "MissingCell";
    case Violation::Rule::DuplicateRecord: return "DuplicateRecord";
    case Violation::Rule::NegativeDuration: return "NegativeDuration";
    case Violation::Rule::OutOfRange: return "OutOfRange";
    case Violation::Rule::StepCountMismatch: return "StepCountMismatch";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what,
        std::optional<std::size_t> line = std::nullopt,
        std::vector<Violation> violations = {})
      : std::runtime_error(compose(code, what, line)),
        code_(code),
        line_(line),
        violations_(std::move(violations)) {}

  Errc code() const noexcept { return code_; }
  std::optional<std::size_t> line() const noexcept { return line_; }
  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  static std::string compose(Errc code, const std::string& what,
                             std::optional<std::size_t> line) {
    std::string s = errc_name(code);
    if (line) s += "(line " + std::to_string(*line) + ")";
    if (!what.empty()) s += ": " + what;
    return s;
  }

  Errc code_;
  std::optional<std::size_t> line_;
  std::vector<Violation> violations_;
};

}  // namespace straggler
