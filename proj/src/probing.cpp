#include "factorlens/probing.hpp"

#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "factorlens/error.hpp"
#include "json.hpp"

namespace factorlens {
namespace {

using nlohmann::json;

std::string plan_fingerprint(const FactorSet& fs, const ProbePlan& plan) {
  std::string s = fs.scenario() + "|" + std::to_string(plan.n) + "|";
  for (const auto& c : plan.configs) s += c.to_string() + ",";
  return sha256_hex(s);
}

void write_checkpoint(const std::string& path, const std::string& fingerprint,
                      const std::vector<std::optional<VerbalLevel>>& levels) {
  json done = json::object();
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i]) done[std::to_string(i)] = ordinal(*levels[i]);
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw StoreError("cannot write probing checkpoint " + path);
    out << json{{"plan", fingerprint}, {"done", done}}.dump();
  }
  std::filesystem::rename(tmp, path);
}

void read_checkpoint(const std::string& path, const std::string& fingerprint,
                     std::vector<std::optional<VerbalLevel>>& levels) {
  std::ifstream in(path);
  if (!in) return;
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || j.value("plan", "") != fingerprint) {
    throw StoreError("probing checkpoint " + path + " belongs to a different plan");
  }
  for (const auto& [key, value] : j.at("done").items()) {
    const auto idx = std::stoul(key);
    if (idx < levels.size()) levels[idx] = level_from_ordinal(value.get<int>());
  }
}

}  // namespace

std::string to_string(PlanMode mode) {
  return mode == PlanMode::kExhaustive ? "exhaustive" : "sampled";
}

ProbePlan plan_configurations(int n, std::size_t budget, std::uint64_t seed) {
  if (budget < 1) throw ConfigError("probing budget must be at least 1");
  if (n < 1 || n > kMaxFactors) throw ConfigError("factor count must be in 1..20");
  ProbePlan plan;
  plan.n = n;
  plan.budget = budget;
  plan.seed = seed;
  const std::size_t space = std::size_t{1} << n;
  if (space <= budget) {
    plan.mode = PlanMode::kExhaustive;
    plan.configs.reserve(space);
    for (std::size_t m = 0; m < space; ++m) {
      plan.configs.emplace_back(n, static_cast<std::uint32_t>(m));
    }
    return plan;
  }
  plan.mode = PlanMode::kSampled;
  auto rng = stream_rng(seed, 0);
  std::set<std::uint32_t> seen;
  while (plan.configs.size() < budget) {
    const auto m = static_cast<std::uint32_t>(rng() >> (64 - n));
    if (seen.insert(m).second) plan.configs.emplace_back(n, m);
  }
  return plan;
}

BehavioralDataset collect_dataset(Oracle& oracle, const FactorSet& fs, const ProbePlan& plan,
                                  const CollectOptions& options) {
  fs.validate();
  if (plan.n != fs.size()) throw DimensionError("probe plan size does not match the factor set");
  if (plan.configs.empty()) throw ValidationError("probe plan is empty");

  BehavioralDataset ds;
  ds.factor_set = fs;
  ds.provenance.backend = to_string(oracle.kind());
  ds.provenance.seed = plan.seed;
  ds.provenance.plan_mode = to_string(plan.mode);
  ds.provenance.budget = plan.budget;
  ds.provenance.started_at = options.clock();

  const std::size_t total = plan.configs.size();
  std::vector<std::optional<VerbalLevel>> levels(total);
  const std::string fingerprint = plan_fingerprint(fs, plan);
  if (!options.checkpoint_path.empty()) read_checkpoint(options.checkpoint_path, fingerprint, levels);

  const std::size_t chunk = std::max<std::size_t>(1, options.checkpoint_every);
  const int workers = std::max(1, options.parallelism);
  for (std::size_t begin = 0; begin < total; begin += chunk) {
    const std::size_t end = std::min(total, begin + chunk);
    std::atomic<std::size_t> next{begin};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto work = [&] {
      for (std::size_t i = next++; i < end; i = next++) {
        if (levels[i]) continue;
        try {
          levels[i] = oracle.elicit_verbal(fs, plan.configs[i], i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
          next = end;
        }
      }
    };
    if (workers == 1) {
      work();
    } else {
      std::vector<std::jthread> pool;
      for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    if (!options.checkpoint_path.empty()) write_checkpoint(options.checkpoint_path, fingerprint, levels);
    if (failure) std::rethrow_exception(failure);
  }

  ds.observations.reserve(total);
  for (std::size_t i = 0; i < total; ++i) ds.observations.push_back({plan.configs[i], *levels[i]});
  ds.provenance.finished_at = options.clock();
  if (!options.checkpoint_path.empty()) std::filesystem::remove(options.checkpoint_path);
  return ds;
}

bool dominates(const FactorConfiguration& a, const FactorConfiguration& b,
               const std::vector<int>& signs) {
  if (a.size() != b.size()) throw DimensionError("cannot compare configurations of different length");
  std::uint32_t flip = 0;
  for (std::size_t j = 0; j < signs.size(); ++j) {
    if (signs[j] < 0) flip |= 1u << j;
  }
  const std::uint32_t oa = a.mask() ^ flip;
  const std::uint32_t ob = b.mask() ^ flip;
  return oa != ob && (oa & ob) == ob;
}

OrdinalAuditReport ordinal_consistency_audit(const BehavioralDataset& dataset,
                                             std::vector<int> signs) {
  if (dataset.observations.empty()) throw ValidationError("audit needs a non-empty dataset");
  if (signs.empty()) signs.assign(static_cast<std::size_t>(dataset.n()), 1);
  if (static_cast<int>(signs.size()) != dataset.n()) throw DimensionError("sign vector length differs from N");
  for (int s : signs) {
    if (s != 1 && s != -1) throw ValidationError("audit signs must be +1 or -1");
  }
  OrdinalAuditReport report;
  const auto& obs = dataset.observations;
  for (std::size_t a = 0; a < obs.size(); ++a) {
    for (std::size_t b = 0; b < obs.size(); ++b) {
      if (a == b || !dominates(obs[a].config, obs[b].config, signs)) continue;
      ++report.comparable_pairs;
      if (ordinal(obs[a].level) >= ordinal(obs[b].level)) {
        ++report.consistent_pairs;
      } else {
        report.violations.push_back({a, b});
      }
    }
  }
  if (report.comparable_pairs > 0) {
    report.ratio = static_cast<double>(report.consistent_pairs) /
                   static_cast<double>(report.comparable_pairs);
  }
  return report;
}

}  // namespace factorlens
