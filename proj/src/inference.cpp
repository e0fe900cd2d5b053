#include "factorlens/inference.hpp"

#include <cmath>
#include <numeric>

#include "factorlens/error.hpp"

namespace factorlens {
namespace {

constexpr std::uint64_t kNoMcDomain = 0x6e6f2d6d63ULL;

}  // namespace

void ConditionPartition::validate(int n) const {
  for (const auto& [id, bit] : observed) {
    if (id < 0 || id >= n) throw DimensionError("observed factor id out of range");
    if (uncertain.contains(id)) throw ValidationError("factor both observed and uncertain");
  }
  for (int id : uncertain) {
    if (id < 0 || id >= n) throw DimensionError("uncertain factor id out of range");
  }
  if (observed.size() + uncertain.size() != static_cast<std::size_t>(n)) {
    throw ValidationError("partition does not cover every factor");
  }
}

ConditionPartition determine_factors(Oracle& oracle, const FactorSet& fs,
                                     const std::string& condition_text) {
  ConditionPartition part;
  part.condition_text = condition_text;
  for (int j = 0; j < fs.size(); ++j) {
    switch (oracle.determine_factor(fs, j, condition_text)) {
      case Determination::kTrue: part.observed[j] = true; break;
      case Determination::kFalse: part.observed[j] = false; break;
      case Determination::kUndetermined: part.uncertain.insert(j); break;
    }
  }
  return part;
}

std::vector<FactorConfiguration> sample_joint_completions(Oracle& oracle, const FactorSet& fs,
                                                          const ConditionPartition& partition,
                                                          std::size_t t, double temperature,
                                                          std::uint64_t batch) {
  if (t < 1) throw ValidationError("sample count must be at least 1");
  if (t > 0xffffffffULL) throw ValidationError("sample count too large");
  partition.validate(fs.size());
  std::vector<FactorConfiguration> out;
  out.reserve(t);
  if (partition.uncertain.empty()) {
    std::uint32_t mask = 0;
    for (const auto& [id, bit] : partition.observed) {
      if (bit) mask |= 1u << id;
    }
    out.assign(t, FactorConfiguration(fs.size(), mask));
    return out;
  }
  for (std::size_t s = 0; s < t; ++s) {
    FactorConfiguration c = oracle.sample_completion(fs, partition.observed,
                                                     partition.condition_text, temperature,
                                                     (batch << 32) | s);
    if (c.size() != fs.size()) throw DimensionError("completion has the wrong number of factors");
    for (const auto& [id, bit] : partition.observed) c = c.with(id, bit);
    out.push_back(c);
  }
  return out;
}

InferenceResult marginalize(const TrainedModel& model,
                            const std::vector<FactorConfiguration>& samples,
                            ConditionPartition partition) {
  if (samples.empty()) throw ValidationError("marginalization needs at least one sample");
  InferenceResult r;
  r.per_sample_probs.reserve(samples.size());
  for (const auto& c : samples) {
    if (c.size() != model.n()) throw DimensionError("sample length differs from the model's N");
    r.per_sample_probs.push_back(predict(model.params, c));
  }
  const auto t = static_cast<double>(samples.size());
  r.samples_used = samples.size();
  r.probability = std::accumulate(r.per_sample_probs.begin(), r.per_sample_probs.end(), 0.0) / t;
  if (samples.size() > 1) {
    double ss = 0.0;
    for (double p : r.per_sample_probs) ss += (p - r.probability) * (p - r.probability);
    r.standard_error = std::sqrt(ss / (t - 1)) / std::sqrt(t);
  }
  r.partition = std::move(partition);
  return r;
}

std::string to_string(InferenceMode mode) {
  return mode == InferenceMode::kNoMc ? "no-mc" : "mc";
}

InferenceMode inference_mode_from_string(const std::string& s) {
  if (s == "mc" || s == "none") return InferenceMode::kMonteCarlo;
  if (s == "no-mc") return InferenceMode::kNoMc;
  throw ConfigError("unknown inference mode: " + s);
}

InferenceResult infer(const TrainedModel& model, Oracle& oracle, const std::string& condition_text,
                      const InferOptions& options) {
  ConditionPartition part = determine_factors(oracle, model.factor_set, condition_text);
  if (options.mode == InferenceMode::kNoMc) {
    auto rng = stream_rng(options.seed ^ kNoMcDomain, 0);
    std::uint32_t mask = 0;
    for (int j = 0; j < model.n(); ++j) {
      bool bit;
      if (auto it = part.observed.find(j); it != part.observed.end()) {
        bit = it->second;
      } else {
        bit = uniform01(rng) < 0.5;
      }
      if (bit) mask |= 1u << j;
    }
    return marginalize(model, {FactorConfiguration(model.n(), mask)}, std::move(part));
  }
  auto samples = sample_joint_completions(oracle, model.factor_set, part, options.t,
                                          options.temperature, options.batch);
  return marginalize(model, samples, std::move(part));
}

}  // namespace factorlens
