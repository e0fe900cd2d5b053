#pragma once
// Online inference for a free-text condition: split factors into observed and
// uncertain, sample joint completions of the uncertain ones from the oracle,
// and average the decision model over the samples.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "factorlens/model.hpp"
#include "factorlens/oracle.hpp"

namespace factorlens {

inline constexpr std::size_t kDefaultSamples = 50;

struct ConditionPartition {
  PartialConfiguration observed;
  std::set<int> uncertain;
  std::string condition_text;

  // Disjoint and together covering 0..n-1.
  void validate(int n) const;
  friend bool operator==(const ConditionPartition&, const ConditionPartition&) = default;
};

struct InferenceResult {
  double probability = 0.0;
  std::size_t samples_used = 0;
  std::optional<double> standard_error;  // absent for a single sample
  std::vector<double> per_sample_probs;
  ConditionPartition partition;
};

// One three-way determination query per factor.
ConditionPartition determine_factors(Oracle& oracle, const FactorSet& fs,
                                     const std::string& condition_text);

// t completions agreeing with the observed bits. Sample s of batch b uses
// oracle call index (b << 32) | s.
std::vector<FactorConfiguration> sample_joint_completions(Oracle& oracle, const FactorSet& fs,
                                                          const ConditionPartition& partition,
                                                          std::size_t t, double temperature,
                                                          std::uint64_t batch = 0);

InferenceResult marginalize(const TrainedModel& model,
                            const std::vector<FactorConfiguration>& samples,
                            ConditionPartition partition = {});

enum class InferenceMode { kMonteCarlo, kNoMc };
std::string to_string(InferenceMode mode);
InferenceMode inference_mode_from_string(const std::string& s);

struct InferOptions {
  std::size_t t = kDefaultSamples;
  double temperature = kSamplingTemperature;
  InferenceMode mode = InferenceMode::kMonteCarlo;
  std::uint64_t seed = 0;   // no-mc coin stream
  std::uint64_t batch = 0;  // Monte Carlo call-index batch
};

// No-mc mode fills uncertain factors with fair coins from a stream keyed by
// the seed alone, so its output does not depend on t.
InferenceResult infer(const TrainedModel& model, Oracle& oracle, const std::string& condition_text,
                      const InferOptions& options = {});

}  // namespace factorlens
