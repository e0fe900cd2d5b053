#pragma once
// Factor identification: elicit situational statements for each outcome,
// summarize them into binary factors, then verify discriminability, overlap
// and coverage until a full pass changes nothing.

#include <string>
#include <vector>

#include "factorlens/factor_core.hpp"
#include "factorlens/oracle.hpp"

namespace factorlens {

struct ElicitationOptions {
  int statement_count = 20;
  int retry_cap = 3;  // extra generation rounds when duplicates collapse
  int max_factors = kMaxFactors;
  int iteration_cap = 5;
  int sample_conditions = 10;
};

struct StatementBatch {
  std::string outcome;
  std::vector<std::string> statements;
  std::vector<std::size_t> transcripts;  // audit log positions
};

// Lowercase, collapse whitespace, drop surrounding punctuation.
std::string normalize_statement(const std::string& s);
// Lowercase snake_case identifier.
std::string normalize_factor_name(const std::string& s);

StatementBatch generate_statements(Oracle& oracle, const std::string& scenario,
                                   const std::string& outcome, const ElicitationOptions& options = {});

FactorSet extract_factors(Oracle& oracle, const std::string& scenario,
                          const StatementBatch& positive, const StatementBatch& negative,
                          const ElicitationOptions& options = {});

enum class FactorAction { kKept, kReformulated, kDiscarded, kMerged, kAdded };
std::string to_string(FactorAction action);

struct FactorVerdict {
  std::string name;
  bool pass = true;
  std::string rationale;
  FactorAction action = FactorAction::kKept;
};

struct OverlapFinding {
  std::string first;
  std::string second;
  std::string rationale;
  std::string merged_into;
};

struct CoverageFinding {
  std::string condition;
  bool covered = true;
  std::vector<std::string> unmapped_units;
  std::vector<std::string> added_factors;
};

struct VerificationReport {
  std::vector<FactorVerdict> factors;    // last pass
  std::vector<OverlapFinding> overlaps;  // last pass
  std::vector<CoverageFinding> coverage; // last pass
  int iterations = 0;
  bool converged = false;
};

struct VerificationOutcome {
  FactorSet factor_set;
  VerificationReport report;
};

VerificationOutcome verify_factor_set(Oracle& oracle, const FactorSet& factor_set,
                                      const std::vector<std::string>& sample_conditions,
                                      const ElicitationOptions& options = {});

struct ElicitationResult {
  StatementBatch positive;
  StatementBatch negative;
  FactorSet candidates;
  VerificationOutcome verified;
};

// Full loop. When no sample conditions are given the elicited statements
// (alternating outcomes) serve as conditions for the coverage check.
ElicitationResult elicit(Oracle& oracle, const std::string& scenario,
                         const std::string& outcome_positive, const std::string& outcome_negative,
                         std::vector<std::string> sample_conditions = {},
                         const ElicitationOptions& options = {});

}  // namespace factorlens
