#pragma once
// The probabilistic oracle used for probing, factor determination, joint
// sampling and factor elicitation. Three backends share this interface:
// a remote chat-completion endpoint, a replay cache of recorded transcripts,
// and a synthetic ground-truth model used in tests.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "factorlens/dataset.hpp"
#include "factorlens/factor_core.hpp"
#include "factorlens/util.hpp"
#include "factorlens/verbal_scale.hpp"

namespace factorlens {

enum class BackendKind { kRemote, kReplay, kSynthetic };
std::string to_string(BackendKind kind);
BackendKind backend_kind_from_string(const std::string& s);

// Default sampling temperatures: probing is greedy, completions are diverse.
inline constexpr double kProbingTemperature = 0.0;
inline constexpr double kSamplingTemperature = 1.2;

struct OracleTranscript {
  std::string template_id;
  std::string prompt;
  std::string response;
  std::string parsed;
  std::string timestamp;
  int attempts = 1;

  friend bool operator==(const OracleTranscript&, const OracleTranscript&) = default;
};

// Thread-safe append-only record of every oracle call in a run.
class AuditLog {
 public:
  void append(OracleTranscript t);
  std::vector<OracleTranscript> snapshot() const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::vector<OracleTranscript> entries_;
};

enum class Determination { kTrue, kFalse, kUndetermined };
std::string to_string(Determination d);
Determination determination_from_string(const std::string& s);

// Observed factor values keyed by factor id.
using PartialConfiguration = std::map<int, bool>;

struct QueryDecomposition {
  std::string scenario;
  std::string condition;
};

struct FactorDraft {
  std::string name;
  std::string positive_description;
  std::string negative_description;

  friend bool operator==(const FactorDraft&, const FactorDraft&) = default;
};

struct SupportVerdict {
  bool pass = true;
  std::string rationale;
  std::optional<FactorDraft> reformulation;  // absent on failure => discard
};

struct OverlapVerdict {
  bool overlap = false;
  std::string rationale;
  std::optional<FactorDraft> merged;
};

struct CoverageVerdict {
  bool covered = true;
  std::vector<std::string> unmapped_units;
  std::vector<FactorDraft> new_factors;
};

class Oracle {
 public:
  explicit Oracle(std::shared_ptr<AuditLog> audit, Clock clock = system_clock())
      : audit_(std::move(audit)), clock_(std::move(clock)) {}
  virtual ~Oracle() = default;
  Oracle(const Oracle&) = delete;
  Oracle& operator=(const Oracle&) = delete;

  virtual BackendKind kind() const = 0;

  // call_index identifies the call for reproducible randomness; callers use
  // the plan position or sample index.
  virtual VerbalLevel elicit_verbal(const FactorSet& fs, const FactorConfiguration& config,
                                    std::uint64_t call_index) = 0;
  virtual FactorConfiguration sample_completion(const FactorSet& fs,
                                                const PartialConfiguration& observed,
                                                const std::string& condition, double temperature,
                                                std::uint64_t call_index) = 0;
  virtual Determination determine_factor(const FactorSet& fs, int factor,
                                         const std::string& condition) = 0;

  virtual QueryDecomposition decompose_query(const std::string& query) = 0;
  virtual std::vector<std::string> generate_statements(const std::string& scenario,
                                                       const std::string& outcome, int count,
                                                       const std::vector<std::string>& exclude) = 0;
  virtual std::vector<FactorDraft> extract_factors(const std::string& scenario,
                                                   const std::vector<std::string>& positive,
                                                   const std::vector<std::string>& negative) = 0;
  virtual std::vector<FactorDraft> merge_factors(const std::string& scenario,
                                                 const std::vector<FactorDraft>& candidates,
                                                 int max_factors) = 0;
  virtual SupportVerdict check_binary_support(const FactorSet& fs, int factor) = 0;
  virtual OverlapVerdict check_overlap(const FactorSet& fs, int a, int b) = 0;
  virtual CoverageVerdict check_coverage(const FactorSet& fs, const std::string& condition) = 0;

  AuditLog& audit() const noexcept { return *audit_; }
  const std::shared_ptr<AuditLog>& audit_ptr() const noexcept { return audit_; }

 protected:
  void record(std::string template_id, std::string prompt, std::string response,
              std::string parsed, int attempts = 1);

 private:
  std::shared_ptr<AuditLog> audit_;
  Clock clock_;
};

// ---------------------------------------------------------------------------
// Synthetic backend

struct SyntheticOracleSpec {
  DecisionParams true_params;
  VerbalMap true_map = canonical_map();
  double label_noise = 0.0;             // adjacent-category swap probability
  double completion_correlation = 0.0;  // pairwise correlation of uncertain bits
  std::uint64_t rng_seed = 0;
  // Optional fixed answers for factor determination, keyed by condition text.
  std::map<std::string, std::vector<Determination>> partition_table;

  void validate() const;
};

// Level whose value under `map` is nearest to p (ties go to the lower level).
VerbalLevel nearest_level(const VerbalMap& map, double p);

// Uniformly random adjacent level; v1 and v7 have a single neighbour.
VerbalLevel adjacent_level(VerbalLevel level, std::mt19937_64& rng);

class SyntheticOracle final : public Oracle {
 public:
  SyntheticOracle(SyntheticOracleSpec spec, std::shared_ptr<AuditLog> audit,
                  Clock clock = system_clock());

  BackendKind kind() const override { return BackendKind::kSynthetic; }
  const SyntheticOracleSpec& spec() const noexcept { return spec_; }

  VerbalLevel elicit_verbal(const FactorSet& fs, const FactorConfiguration& config,
                            std::uint64_t call_index) override;
  // Draws a shared fair coin; each uncertain bit copies it with probability
  // sqrt(completion_correlation), else takes an independent fair draw, which
  // gives the requested pairwise correlation between uncertain bits.
  FactorConfiguration sample_completion(const FactorSet& fs, const PartialConfiguration& observed,
                                        const std::string& condition, double temperature,
                                        std::uint64_t call_index) override;
  // Uses the partition table when the condition is listed; otherwise reads
  // "name=0" / "name=1" tokens from the condition text.
  Determination determine_factor(const FactorSet& fs, int factor,
                                 const std::string& condition) override;

  // Elicitation calls echo the factor set the oracle is asked about; the
  // synthetic model has no hidden factors.
  QueryDecomposition decompose_query(const std::string& query) override;
  std::vector<std::string> generate_statements(const std::string& scenario,
                                               const std::string& outcome, int count,
                                               const std::vector<std::string>& exclude) override;
  std::vector<FactorDraft> extract_factors(const std::string& scenario,
                                           const std::vector<std::string>& positive,
                                           const std::vector<std::string>& negative) override;
  std::vector<FactorDraft> merge_factors(const std::string& scenario,
                                         const std::vector<FactorDraft>& candidates,
                                         int max_factors) override;
  SupportVerdict check_binary_support(const FactorSet& fs, int factor) override;
  OverlapVerdict check_overlap(const FactorSet& fs, int a, int b) override;
  CoverageVerdict check_coverage(const FactorSet& fs, const std::string& condition) override;

  void set_factor_set(FactorSet fs) { factor_set_ = std::move(fs); }

 private:
  SyntheticOracleSpec spec_;
  std::optional<FactorSet> factor_set_;
};

// Adjacent-category label corruption: each observation moves to a random
// neighbouring level with probability epsilon, independently per observation.
BehavioralDataset corrupt_labels(const BehavioralDataset& dataset, double epsilon,
                                 std::uint64_t seed);

// ---------------------------------------------------------------------------
// Text backends (remote endpoint, replay cache) share prompt templates and
// parsing through PromptedOracle.

class TextCompleter {
 public:
  virtual ~TextCompleter() = default;
  virtual std::string complete(const std::string& template_id, const std::string& prompt,
                               double temperature) = 0;
};

struct RemoteConfig {
  std::string base_url;        // e.g. http://localhost:8000/v1
  std::string model;
  std::string auth_token_env;  // name of the env var holding the bearer token
  double timeout_seconds = 60.0;
  int max_retries = 2;
  std::string record_path;     // when set, every exchange is appended here

  friend bool operator==(const RemoteConfig&, const RemoteConfig&) = default;
};

// OpenAI-style POST {base_url}/chat/completions.
class RemoteCompleter final : public TextCompleter {
 public:
  explicit RemoteCompleter(RemoteConfig cfg);
  std::string complete(const std::string& template_id, const std::string& prompt,
                       double temperature) override;

 private:
  RemoteConfig cfg_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

// Replay cache file: JSON lines {template_id, prompt_hash, occurrence, prompt,
// response, timestamp}. The n-th identical request replays the n-th record.
class ReplayCache {
 public:
  explicit ReplayCache(std::string path);
  std::optional<std::string> lookup(const std::string& template_id, const std::string& prompt);
  void append(const std::string& template_id, const std::string& prompt,
              const std::string& response, const std::string& timestamp);
  const std::string& path() const noexcept { return path_; }

 private:
  using Key = std::pair<std::string, std::string>;
  std::string path_;
  std::mutex mu_;
  std::map<Key, std::vector<std::string>> records_;
  std::map<Key, std::size_t> served_;
  std::map<Key, std::size_t> written_;
};

// Cache miss is a BackendError; never falls through to a live call.
class ReplayCompleter final : public TextCompleter {
 public:
  explicit ReplayCompleter(std::shared_ptr<ReplayCache> cache) : cache_(std::move(cache)) {}
  std::string complete(const std::string& template_id, const std::string& prompt,
                       double temperature) override;

 private:
  std::shared_ptr<ReplayCache> cache_;
};

class RecordingCompleter final : public TextCompleter {
 public:
  RecordingCompleter(std::shared_ptr<TextCompleter> inner, std::shared_ptr<ReplayCache> cache,
                     Clock clock)
      : inner_(std::move(inner)), cache_(std::move(cache)), clock_(std::move(clock)) {}
  std::string complete(const std::string& template_id, const std::string& prompt,
                       double temperature) override;

 private:
  std::shared_ptr<TextCompleter> inner_;
  std::shared_ptr<ReplayCache> cache_;
  Clock clock_;
};

class PromptedOracle final : public Oracle {
 public:
  PromptedOracle(BackendKind kind, std::shared_ptr<TextCompleter> completer,
                 std::shared_ptr<AuditLog> audit, Clock clock = system_clock());

  BackendKind kind() const override { return kind_; }

  VerbalLevel elicit_verbal(const FactorSet& fs, const FactorConfiguration& config,
                            std::uint64_t call_index) override;
  FactorConfiguration sample_completion(const FactorSet& fs, const PartialConfiguration& observed,
                                        const std::string& condition, double temperature,
                                        std::uint64_t call_index) override;
  Determination determine_factor(const FactorSet& fs, int factor,
                                 const std::string& condition) override;
  QueryDecomposition decompose_query(const std::string& query) override;
  std::vector<std::string> generate_statements(const std::string& scenario,
                                               const std::string& outcome, int count,
                                               const std::vector<std::string>& exclude) override;
  std::vector<FactorDraft> extract_factors(const std::string& scenario,
                                           const std::vector<std::string>& positive,
                                           const std::vector<std::string>& negative) override;
  std::vector<FactorDraft> merge_factors(const std::string& scenario,
                                         const std::vector<FactorDraft>& candidates,
                                         int max_factors) override;
  SupportVerdict check_binary_support(const FactorSet& fs, int factor) override;
  OverlapVerdict check_overlap(const FactorSet& fs, int a, int b) override;
  CoverageVerdict check_coverage(const FactorSet& fs, const std::string& condition) override;

 private:
  // Sends the prompt, parses, reprompts once on a parse failure.
  template <typename Parse>
  auto ask(const std::string& template_id, const std::string& prompt, double temperature,
           Parse parse, const std::string& context) -> decltype(parse(std::string{}));

  BackendKind kind_;
  std::shared_ptr<TextCompleter> completer_;
};

// ---------------------------------------------------------------------------

struct OracleBackend {
  BackendKind kind = BackendKind::kSynthetic;
  RemoteConfig remote;
  std::string replay_path;
  std::optional<SyntheticOracleSpec> synthetic;

  void validate() const;
};

std::unique_ptr<Oracle> make_oracle(const OracleBackend& backend,
                                    std::shared_ptr<AuditLog> audit,
                                    Clock clock = system_clock());

}  // namespace factorlens
