#pragma once
// Behavioral probing: plan which configurations to query, collect verbal
// responses, and audit their ordinal consistency.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "factorlens/dataset.hpp"
#include "factorlens/oracle.hpp"

namespace factorlens {

inline constexpr std::size_t kDefaultProbeBudget = 256;

enum class PlanMode { kExhaustive, kSampled };
std::string to_string(PlanMode mode);

struct ProbePlan {
  int n = 0;
  PlanMode mode = PlanMode::kExhaustive;
  std::vector<FactorConfiguration> configs;
  std::size_t budget = kDefaultProbeBudget;
  std::uint64_t seed = 0;
};

// Exhaustive when 2^n <= budget, otherwise `budget` distinct configurations
// drawn uniformly (without replacement) from a seed-determined stream.
ProbePlan plan_configurations(int n, std::size_t budget, std::uint64_t seed);

struct CollectOptions {
  int parallelism = 1;
  std::size_t checkpoint_every = 32;
  // When set, progress is saved here and a rerun resumes from it.
  std::string checkpoint_path;
  Clock clock = system_clock();
};

// One observation per planned configuration, in plan order. The plan index
// is the oracle call index. On a backend error the completed observations are
// checkpointed before the error propagates.
BehavioralDataset collect_dataset(Oracle& oracle, const FactorSet& fs, const ProbePlan& plan,
                                  const CollectOptions& options = {});

struct DominancePair {
  std::size_t dominant;   // observation index
  std::size_t dominated;  // observation index
};

struct OrdinalAuditReport {
  std::size_t comparable_pairs = 0;
  std::size_t consistent_pairs = 0;
  std::optional<double> ratio;  // empty when no pair is comparable
  std::vector<DominancePair> violations;

  bool empty() const noexcept { return comparable_pairs == 0; }
};

// a dominates b when, after flipping factors with a negative sign, a >= b
// element-wise and a != b.
bool dominates(const FactorConfiguration& a, const FactorConfiguration& b,
               const std::vector<int>& signs);

// Fraction of dominating pairs whose verbal level is at least as likely.
// `signs` holds +1/-1 per factor; empty means all positive.
OrdinalAuditReport ordinal_consistency_audit(const BehavioralDataset& dataset,
                                             std::vector<int> signs = {});

}  // namespace factorlens
