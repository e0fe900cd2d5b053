// Text-level oracle backends: remote chat completion, replay cache and the
// prompt/parse layer shared by both.

#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include "factorlens/error.hpp"
#include "factorlens/oracle.hpp"
#include "factorlens/prompts.hpp"
#include "httplib.h"
#include "json.hpp"

namespace factorlens {
namespace {

using nlohmann::json;

std::string summarize(VerbalLevel v) { return std::string(label(v)); }
std::string summarize(Determination d) { return to_string(d); }
std::string summarize(const FactorConfiguration& c) { return c.to_string(); }
std::string summarize(const QueryDecomposition& q) {
  return json{{"scenario", q.scenario}, {"condition", q.condition}}.dump();
}
std::string summarize(const std::vector<std::string>& v) { return json(v).dump(); }
std::string summarize(const std::vector<FactorDraft>& v) {
  json j = json::array();
  for (const auto& d : v) j.push_back(d.name);
  return j.dump();
}
std::string summarize(const SupportVerdict& v) { return v.pass ? "pass" : "fail"; }
std::string summarize(const OverlapVerdict& v) { return v.overlap ? "overlap" : "distinct"; }
std::string summarize(const CoverageVerdict& v) { return v.covered ? "covered" : "uncovered"; }

}  // namespace

// ---------------------------------------------------------------------------

RemoteCompleter::RemoteCompleter(RemoteConfig cfg) : cfg_(std::move(cfg)) {
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(cfg_.base_url, m, url)) {
    throw ConfigError("remote base URL must look like http(s)://host[:port][/path]");
  }
  scheme_host_port_ = m[1];
  path_prefix_ = m[2].matched ? std::string(m[2]) : std::string{};
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string RemoteCompleter::complete(const std::string& template_id, const std::string& prompt,
                                      double temperature) {
  httplib::Client client(scheme_host_port_);
  const auto timeout = std::chrono::duration<double>(cfg_.timeout_seconds);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  httplib::Headers headers;
  if (!cfg_.auth_token_env.empty()) {
    if (const char* token = std::getenv(cfg_.auth_token_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
  }
  const json body = {
      {"model", cfg_.model},
      {"temperature", temperature},
      {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
  };
  const std::string path = path_prefix_ + "/chat/completions";
  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(200 * attempt));
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw BackendError("remote oracle rejected " + template_id + " request: HTTP " +
                         std::to_string(res->status));
    }
    const json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) throw ProtocolError("remote oracle returned malformed JSON", res->body);
    try {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
      throw ProtocolError("remote oracle reply has no choices[0].message.content", res->body);
    }
  }
  throw BackendError("remote oracle unreachable after " + std::to_string(cfg_.max_retries + 1) +
                     " attempts: " + last_error);
}

// ---------------------------------------------------------------------------

ReplayCache::ReplayCache(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("template_id") || !j.contains("prompt_hash") ||
        !j.contains("response")) {
      throw StoreError("replay cache " + path_ + " line " + std::to_string(lineno) + " is malformed");
    }
    const Key key{j.at("template_id").get<std::string>(), j.at("prompt_hash").get<std::string>()};
    records_[key].push_back(j.at("response").get<std::string>());
    ++written_[key];
  }
}

std::optional<std::string> ReplayCache::lookup(const std::string& template_id,
                                               const std::string& prompt) {
  std::lock_guard lock(mu_);
  const Key key{template_id, sha256_hex(prompt)};
  auto it = records_.find(key);
  std::size_t& next = served_[key];
  if (it == records_.end() || next >= it->second.size()) return std::nullopt;
  return it->second[next++];
}

void ReplayCache::append(const std::string& template_id, const std::string& prompt,
                         const std::string& response, const std::string& timestamp) {
  std::lock_guard lock(mu_);
  const Key key{template_id, sha256_hex(prompt)};
  const json j = {{"template_id", template_id}, {"prompt_hash", key.second},
                  {"occurrence", written_[key]++}, {"prompt", prompt},
                  {"response", response},       {"timestamp", timestamp}};
  std::ofstream out(path_, std::ios::app);
  if (!out) throw StoreError("cannot append to replay cache " + path_);
  out << j.dump() << "\n";
  records_[key].push_back(response);
}

std::string ReplayCompleter::complete(const std::string& template_id, const std::string& prompt,
                                      double /*temperature*/) {
  if (auto hit = cache_->lookup(template_id, prompt)) return *hit;
  throw BackendError("replay cache miss for template " + template_id + " (prompt " +
                     sha256_hex(prompt).substr(0, 12) + ")");
}

std::string RecordingCompleter::complete(const std::string& template_id, const std::string& prompt,
                                         double temperature) {
  std::string response = inner_->complete(template_id, prompt, temperature);
  cache_->append(template_id, prompt, response, clock_());
  return response;
}

// ---------------------------------------------------------------------------

PromptedOracle::PromptedOracle(BackendKind kind, std::shared_ptr<TextCompleter> completer,
                               std::shared_ptr<AuditLog> audit, Clock clock)
    : Oracle(std::move(audit), std::move(clock)), kind_(kind), completer_(std::move(completer)) {}

template <typename Parse>
auto PromptedOracle::ask(const std::string& template_id, const std::string& prompt,
                         double temperature, Parse parse, const std::string& context)
    -> decltype(parse(std::string{})) {
  std::string raw = completer_->complete(template_id, prompt, temperature);
  try {
    auto result = parse(raw);
    record(template_id, prompt, raw, summarize(result), 1);
    return result;
  } catch (const std::exception&) {
  }
  const std::string retry_prompt = prompt + prompts::reprompt_suffix(raw);
  raw = completer_->complete(template_id, retry_prompt, temperature);
  try {
    auto result = parse(raw);
    record(template_id, retry_prompt, raw, summarize(result), 2);
    return result;
  } catch (const std::exception& e) {
    record(template_id, retry_prompt, raw, "<unparseable>", 2);
    throw ProtocolError(context + ": " + e.what(), raw);
  }
}

VerbalLevel PromptedOracle::elicit_verbal(const FactorSet& fs, const FactorConfiguration& config,
                                          std::uint64_t /*call_index*/) {
  if (config.size() != fs.size()) throw DimensionError("configuration does not match the factor set");
  return ask(prompts::kVerbalProbing, prompts::render_verbal_probing(fs, config),
             kProbingTemperature, prompts::parse_verbal,
             "verbal probing of configuration " + config.to_string());
}

FactorConfiguration PromptedOracle::sample_completion(const FactorSet& fs,
                                                      const PartialConfiguration& observed,
                                                      const std::string& condition,
                                                      double temperature,
                                                      std::uint64_t /*call_index*/) {
  return ask(prompts::kMonteCarloSampling,
             prompts::render_monte_carlo_sampling(fs, observed, condition), temperature,
             [&](const std::string& r) { return prompts::parse_completion(r, fs, observed); },
             "joint completion sampling");
}

Determination PromptedOracle::determine_factor(const FactorSet& fs, int factor,
                                               const std::string& condition) {
  if (factor < 0 || factor >= fs.size()) throw DimensionError("factor id out of range");
  return ask(prompts::kFactorDetermination,
             prompts::render_factor_determination(fs, factor, condition), kProbingTemperature,
             prompts::parse_determination, "determination of factor " + fs.at(factor).name);
}

QueryDecomposition PromptedOracle::decompose_query(const std::string& query) {
  return ask(prompts::kDecomposeQuery, prompts::render_decompose_query(query), kProbingTemperature,
             prompts::parse_decomposition, "query decomposition");
}

std::vector<std::string> PromptedOracle::generate_statements(
    const std::string& scenario, const std::string& outcome, int count,
    const std::vector<std::string>& exclude) {
  return ask(prompts::kGenerateStatements,
             prompts::render_generate_statements(scenario, outcome, count, exclude),
             kSamplingTemperature, prompts::parse_statements, "statement generation");
}

std::vector<FactorDraft> PromptedOracle::extract_factors(const std::string& scenario,
                                                         const std::vector<std::string>& positive,
                                                         const std::vector<std::string>& negative) {
  return ask(prompts::kExtractFactors, prompts::render_extract_factors(scenario, positive, negative),
             kProbingTemperature, prompts::parse_factor_drafts, "factor extraction");
}

std::vector<FactorDraft> PromptedOracle::merge_factors(const std::string& scenario,
                                                       const std::vector<FactorDraft>& candidates,
                                                       int max_factors) {
  return ask(prompts::kMergeFactors,
             prompts::render_merge_factors(scenario, candidates, max_factors), kProbingTemperature,
             prompts::parse_factor_drafts, "factor merge");
}

SupportVerdict PromptedOracle::check_binary_support(const FactorSet& fs, int factor) {
  return ask(prompts::kCheckBinarySupport, prompts::render_check_binary_support(fs, factor),
             kProbingTemperature, prompts::parse_support,
             "binary support check of factor " + fs.at(factor).name);
}

OverlapVerdict PromptedOracle::check_overlap(const FactorSet& fs, int a, int b) {
  return ask(prompts::kCheckOverlappingFactor, prompts::render_check_overlapping_factor(fs, a, b),
             kProbingTemperature, prompts::parse_overlap,
             "overlap check of " + fs.at(a).name + " and " + fs.at(b).name);
}

CoverageVerdict PromptedOracle::check_coverage(const FactorSet& fs, const std::string& condition) {
  return ask(prompts::kCheckConditionCoverage,
             prompts::render_check_condition_coverage(fs, condition), kProbingTemperature,
             prompts::parse_coverage, "condition coverage check");
}

// ---------------------------------------------------------------------------

void OracleBackend::validate() const {
  const bool has_remote = !remote.base_url.empty();
  const bool has_replay = !replay_path.empty();
  const bool has_synthetic = synthetic.has_value();
  switch (kind) {
    case BackendKind::kRemote:
      if (!has_remote || has_replay || has_synthetic) {
        throw ConfigError("remote backend needs a base URL and no replay/synthetic config");
      }
      break;
    case BackendKind::kReplay:
      if (!has_replay || has_remote || has_synthetic) {
        throw ConfigError("replay backend needs a cache path and no remote/synthetic config");
      }
      break;
    case BackendKind::kSynthetic:
      if (!has_synthetic || has_remote || has_replay) {
        throw ConfigError("synthetic backend needs a synthetic spec and no remote/replay config");
      }
      synthetic->validate();
      break;
  }
}

std::unique_ptr<Oracle> make_oracle(const OracleBackend& backend, std::shared_ptr<AuditLog> audit,
                                    Clock clock) {
  backend.validate();
  switch (backend.kind) {
    case BackendKind::kSynthetic:
      return std::make_unique<SyntheticOracle>(*backend.synthetic, std::move(audit), std::move(clock));
    case BackendKind::kReplay: {
      auto cache = std::make_shared<ReplayCache>(backend.replay_path);
      return std::make_unique<PromptedOracle>(BackendKind::kReplay,
                                              std::make_shared<ReplayCompleter>(cache),
                                              std::move(audit), std::move(clock));
    }
    case BackendKind::kRemote: {
      std::shared_ptr<TextCompleter> completer = std::make_shared<RemoteCompleter>(backend.remote);
      if (!backend.remote.record_path.empty()) {
        completer = std::make_shared<RecordingCompleter>(
            completer, std::make_shared<ReplayCache>(backend.remote.record_path), clock);
      }
      return std::make_unique<PromptedOracle>(BackendKind::kRemote, std::move(completer),
                                              std::move(audit), std::move(clock));
    }
  }
  throw ConfigError("unknown backend kind");
}

}  // namespace factorlens
