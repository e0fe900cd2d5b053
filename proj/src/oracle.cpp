#include "factorlens/oracle.hpp"

#include <cmath>
#include <regex>
#include <set>

#include "factorlens/error.hpp"
#include "factorlens/prompts.hpp"

namespace factorlens {

std::string to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::kRemote: return "remote";
    case BackendKind::kReplay: return "replay";
    case BackendKind::kSynthetic: return "synthetic";
  }
  return "unknown";
}

BackendKind backend_kind_from_string(const std::string& s) {
  if (s == "remote") return BackendKind::kRemote;
  if (s == "replay") return BackendKind::kReplay;
  if (s == "synthetic") return BackendKind::kSynthetic;
  throw ConfigError("unknown backend kind: " + s);
}

std::string to_string(Determination d) {
  switch (d) {
    case Determination::kTrue: return "1";
    case Determination::kFalse: return "0";
    case Determination::kUndetermined: return "undetermined";
  }
  return "undetermined";
}

Determination determination_from_string(const std::string& s) {
  if (s == "1" || s == "true") return Determination::kTrue;
  if (s == "0" || s == "false") return Determination::kFalse;
  if (s == "undetermined") return Determination::kUndetermined;
  throw ValidationError("unknown determination: " + s);
}

void BehavioralDataset::validate() const {
  factor_set.validate();
  if (observations.empty()) throw ValidationError("behavioral dataset is empty");
  for (const auto& o : observations) {
    if (o.config.size() != n()) throw DimensionError("observation configuration length differs from N");
  }
}

void AuditLog::append(OracleTranscript t) {
  std::lock_guard lock(mu_);
  entries_.push_back(std::move(t));
}

std::vector<OracleTranscript> AuditLog::snapshot() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::size_t AuditLog::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

void Oracle::record(std::string template_id, std::string prompt, std::string response,
                    std::string parsed, int attempts) {
  audit_->append(OracleTranscript{std::move(template_id), std::move(prompt), std::move(response),
                                  std::move(parsed), clock_(), attempts});
}

// ---------------------------------------------------------------------------

void SyntheticOracleSpec::validate() const {
  true_params.validate();
  if (!(label_noise >= 0.0 && label_noise <= 1.0)) throw ConfigError("label_noise must be in [0,1]");
  if (!(completion_correlation >= 0.0 && completion_correlation <= 1.0)) {
    throw ConfigError("completion_correlation must be in [0,1]");
  }
  for (const auto& [condition, row] : partition_table) {
    if (static_cast<int>(row.size()) != true_params.size()) {
      throw ConfigError("partition table row for '" + condition + "' has the wrong length");
    }
  }
}

VerbalLevel nearest_level(const VerbalMap& map, double p) {
  VerbalLevel best = VerbalLevel::kVeryUnlikely;
  double best_dist = std::abs(map(best) - p);
  for (VerbalLevel v : all_levels()) {
    const double d = std::abs(map(v) - p);
    if (d < best_dist) {
      best = v;
      best_dist = d;
    }
  }
  return best;
}

VerbalLevel adjacent_level(VerbalLevel level, std::mt19937_64& rng) {
  const int o = ordinal(level);
  if (o == 1) return level_from_ordinal(2);
  if (o == kLevelCount) return level_from_ordinal(kLevelCount - 1);
  return level_from_ordinal(uniform01(rng) < 0.5 ? o - 1 : o + 1);
}

namespace {
constexpr std::uint64_t kElicitDomain = 0x1;
constexpr std::uint64_t kSampleDomain = 0x2;
constexpr std::uint64_t kCorruptDomain = 0x3;

std::uint64_t domain_seed(std::uint64_t seed, std::uint64_t domain) {
  return seed ^ (domain * 0x9e3779b97f4a7c15ull);
}
}  // namespace

SyntheticOracle::SyntheticOracle(SyntheticOracleSpec spec, std::shared_ptr<AuditLog> audit,
                                 Clock clock)
    : Oracle(std::move(audit), std::move(clock)), spec_(std::move(spec)) {
  spec_.validate();
}

VerbalLevel SyntheticOracle::elicit_verbal(const FactorSet& fs, const FactorConfiguration& config,
                                           std::uint64_t call_index) {
  if (config.size() != fs.size() || fs.size() != spec_.true_params.size()) {
    throw DimensionError("synthetic oracle: configuration does not match the factor set");
  }
  const double p = predict(spec_.true_params, config);
  VerbalLevel level = nearest_level(spec_.true_map, p);
  if (spec_.label_noise > 0.0) {
    auto rng = stream_rng(domain_seed(spec_.rng_seed, kElicitDomain), call_index);
    if (uniform01(rng) < spec_.label_noise) level = adjacent_level(level, rng);
  }
  record(prompts::kVerbalProbing, prompts::render_verbal_probing(fs, config),
         std::string(label(level)), std::string(label(level)));
  return level;
}

FactorConfiguration SyntheticOracle::sample_completion(const FactorSet& fs,
                                                       const PartialConfiguration& observed,
                                                       const std::string& condition,
                                                       double /*temperature*/,
                                                       std::uint64_t call_index) {
  const int n = fs.size();
  for (const auto& [id, value] : observed) {
    if (id < 0 || id >= n) throw DimensionError("observed factor id out of range");
  }
  auto rng = stream_rng(domain_seed(spec_.rng_seed, kSampleDomain), call_index);
  const double copy_prob = std::sqrt(spec_.completion_correlation);
  const bool coin = uniform01(rng) < 0.5;
  std::uint32_t mask = 0;
  for (int j = 0; j < n; ++j) {
    bool bit;
    if (auto it = observed.find(j); it != observed.end()) {
      bit = it->second;
    } else {
      const double u = uniform01(rng);
      const double v = uniform01(rng);
      bit = u < copy_prob ? coin : (v < 0.5);
    }
    if (bit) mask |= 1u << j;
  }
  FactorConfiguration out(n, mask);
  record(prompts::kMonteCarloSampling, prompts::render_monte_carlo_sampling(fs, observed, condition),
         out.to_string(), out.to_string());
  return out;
}

Determination SyntheticOracle::determine_factor(const FactorSet& fs, int factor,
                                                const std::string& condition) {
  if (factor < 0 || factor >= fs.size()) throw DimensionError("factor id out of range");
  Determination d = Determination::kUndetermined;
  if (auto it = spec_.partition_table.find(condition); it != spec_.partition_table.end()) {
    d = it->second.at(static_cast<std::size_t>(factor));
  } else {
    static const std::regex token(R"(([A-Za-z_][A-Za-z0-9_]*)\s*=\s*([01]))");
    const std::string& name = fs.at(factor).name;
    for (auto m = std::sregex_iterator(condition.begin(), condition.end(), token);
         m != std::sregex_iterator(); ++m) {
      if ((*m)[1] == name) d = (*m)[2] == "1" ? Determination::kTrue : Determination::kFalse;
    }
  }
  record(prompts::kFactorDetermination, prompts::render_factor_determination(fs, factor, condition),
         to_string(d), to_string(d));
  return d;
}

QueryDecomposition SyntheticOracle::decompose_query(const std::string& query) {
  QueryDecomposition q{factor_set_ ? factor_set_->scenario() : std::string{}, query};
  record(prompts::kDecomposeQuery, prompts::render_decompose_query(query), query, query);
  return q;
}

std::vector<std::string> SyntheticOracle::generate_statements(
    const std::string& scenario, const std::string& outcome, int count,
    const std::vector<std::string>& exclude) {
  if (!factor_set_) throw BackendError("synthetic oracle has no factor set to elicit from");
  const std::set<std::string> skip(exclude.begin(), exclude.end());
  const bool positive = outcome == factor_set_->outcome_positive();
  std::vector<std::string> out;
  for (int k = 0; static_cast<int>(out.size()) < count && k < count + static_cast<int>(skip.size()) + 1; ++k) {
    const Factor& f = factor_set_->at(k % factor_set_->size());
    const double beta = spec_.true_params.beta.at(static_cast<std::size_t>(f.id));
    const bool use_positive = (beta >= 0) == positive;
    std::string s = "Situation " + std::to_string(k + 1) + ": " +
                    (use_positive ? f.positive_description : f.negative_description);
    if (!skip.contains(s)) out.push_back(std::move(s));
  }
  std::string joined;
  for (const auto& s : out) joined += s + "\n";
  record(prompts::kGenerateStatements,
         prompts::render_generate_statements(scenario, outcome, count, exclude), joined, joined);
  return out;
}

std::vector<FactorDraft> SyntheticOracle::extract_factors(const std::string& scenario,
                                                          const std::vector<std::string>& positive,
                                                          const std::vector<std::string>& negative) {
  if (!factor_set_) throw BackendError("synthetic oracle has no factor set to elicit from");
  std::vector<FactorDraft> out;
  std::string names;
  for (const Factor& f : factor_set_->factors()) {
    out.push_back({f.name, f.positive_description, f.negative_description});
    names += f.name + "\n";
  }
  record(prompts::kExtractFactors, prompts::render_extract_factors(scenario, positive, negative),
         names, names);
  return out;
}

std::vector<FactorDraft> SyntheticOracle::merge_factors(const std::string& scenario,
                                                        const std::vector<FactorDraft>& candidates,
                                                        int max_factors) {
  std::vector<FactorDraft> out(candidates.begin(),
                               candidates.begin() + std::min<std::ptrdiff_t>(
                                                        max_factors, static_cast<std::ptrdiff_t>(candidates.size())));
  record(prompts::kMergeFactors, prompts::render_merge_factors(scenario, candidates, max_factors),
         std::to_string(out.size()), std::to_string(out.size()));
  return out;
}

SupportVerdict SyntheticOracle::check_binary_support(const FactorSet& fs, int factor) {
  record(prompts::kCheckBinarySupport, prompts::render_check_binary_support(fs, factor), "pass",
         "pass");
  return SupportVerdict{true, "synthetic factors are discriminative by construction", std::nullopt};
}

OverlapVerdict SyntheticOracle::check_overlap(const FactorSet& fs, int a, int b) {
  record(prompts::kCheckOverlappingFactor, prompts::render_check_overlapping_factor(fs, a, b),
         "distinct", "distinct");
  return OverlapVerdict{false, "synthetic factors are distinct by construction", std::nullopt};
}

CoverageVerdict SyntheticOracle::check_coverage(const FactorSet& fs, const std::string& condition) {
  record(prompts::kCheckConditionCoverage, prompts::render_check_condition_coverage(fs, condition),
         "covered", "covered");
  return CoverageVerdict{};
}

BehavioralDataset corrupt_labels(const BehavioralDataset& dataset, double epsilon,
                                 std::uint64_t seed) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must be in [0,1]");
  BehavioralDataset out = dataset;
  for (std::size_t k = 0; k < out.observations.size(); ++k) {
    auto rng = stream_rng(domain_seed(seed, kCorruptDomain), k);
    if (uniform01(rng) < epsilon) {
      out.observations[k].level = adjacent_level(out.observations[k].level, rng);
    }
  }
  if (epsilon == 0.0) return out;
  out.provenance.note += (out.provenance.note.empty() ? "" : "; ") +
                         std::string("adjacent-category corruption epsilon=") +
                         std::to_string(epsilon) + " seed=" + std::to_string(seed);
  return out;
}

}  // namespace factorlens
