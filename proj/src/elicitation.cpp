#include "factorlens/elicitation.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "factorlens/error.hpp"

namespace factorlens {
namespace {

bool usable(const FactorDraft& d) {
  return !normalize_factor_name(d.name).empty() && !d.positive_description.empty() &&
         !d.negative_description.empty() && d.positive_description != d.negative_description;
}

// Keeps the first draft per normalized name; names are rewritten normalized.
std::vector<FactorDraft> clean_drafts(const std::vector<FactorDraft>& drafts) {
  std::vector<FactorDraft> out;
  std::set<std::string> seen;
  for (FactorDraft d : drafts) {
    if (!usable(d)) continue;
    d.name = normalize_factor_name(d.name);
    if (seen.insert(d.name).second) out.push_back(std::move(d));
  }
  return out;
}

FactorSet build_set(const std::vector<FactorDraft>& drafts, const FactorSet& like) {
  std::vector<Factor> factors;
  for (const auto& d : drafts) {
    factors.push_back({static_cast<int>(factors.size()), d.name, d.positive_description,
                       d.negative_description});
  }
  FactorSet fs(std::move(factors), like.scenario(), like.outcome_positive(), like.outcome_negative());
  fs.validate();
  return fs;
}

std::vector<FactorDraft> cap_size(Oracle& oracle, const std::string& scenario,
                                  std::vector<FactorDraft> drafts, int max_factors) {
  for (int pass = 0; pass < 2 && static_cast<int>(drafts.size()) > max_factors; ++pass) {
    drafts = clean_drafts(oracle.merge_factors(scenario, drafts, max_factors));
  }
  if (static_cast<int>(drafts.size()) > max_factors) {
    throw ElicitationError("merge pass left " + std::to_string(drafts.size()) +
                           " factors; at most " + std::to_string(max_factors) + " are allowed");
  }
  return drafts;
}

}  // namespace

std::string normalize_statement(const std::string& s) {
  std::string out;
  bool space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  auto punct = [](unsigned char c) { return std::ispunct(c) != 0; };
  while (!out.empty() && punct(static_cast<unsigned char>(out.back()))) out.pop_back();
  std::size_t lead = 0;
  while (lead < out.size() && punct(static_cast<unsigned char>(out[lead]))) ++lead;
  return out.substr(lead);
}

std::string normalize_factor_name(const std::string& s) {
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c)) {
      out.push_back(static_cast<char>(std::tolower(c)));
    } else if (!out.empty() && out.back() != '_') {
      out.push_back('_');
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

StatementBatch generate_statements(Oracle& oracle, const std::string& scenario,
                                   const std::string& outcome, const ElicitationOptions& options) {
  if (options.statement_count < 1) throw ConfigError("statement count must be positive");
  StatementBatch batch;
  batch.outcome = outcome;
  std::set<std::string> seen;
  for (int round = 0; round <= options.retry_cap; ++round) {
    const int missing = options.statement_count - static_cast<int>(batch.statements.size());
    if (missing <= 0) break;
    batch.transcripts.push_back(oracle.audit().size());
    for (auto& s : oracle.generate_statements(scenario, outcome, missing, batch.statements)) {
      const std::string key = normalize_statement(s);
      if (key.empty() || !seen.insert(key).second) continue;
      batch.statements.push_back(std::move(s));
      if (static_cast<int>(batch.statements.size()) == options.statement_count) break;
    }
  }
  if (static_cast<int>(batch.statements.size()) < options.statement_count) {
    throw ElicitationError("only " + std::to_string(batch.statements.size()) +
                           " distinct statements for outcome '" + outcome + "' after " +
                           std::to_string(options.retry_cap) + " retries");
  }
  return batch;
}

FactorSet extract_factors(Oracle& oracle, const std::string& scenario,
                          const StatementBatch& positive, const StatementBatch& negative,
                          const ElicitationOptions& options) {
  if (positive.statements.empty() || negative.statements.empty()) {
    throw ValidationError("factor extraction needs statements for both outcomes");
  }
  auto drafts = clean_drafts(oracle.extract_factors(scenario, positive.statements, negative.statements));
  drafts = cap_size(oracle, scenario, std::move(drafts), options.max_factors);
  if (drafts.empty()) throw ElicitationError("no factors could be extracted");
  return build_set(drafts, FactorSet({}, scenario, positive.outcome, negative.outcome));
}

std::string to_string(FactorAction action) {
  switch (action) {
    case FactorAction::kKept: return "kept";
    case FactorAction::kReformulated: return "reformulated";
    case FactorAction::kDiscarded: return "discarded";
    case FactorAction::kMerged: return "merged";
    case FactorAction::kAdded: return "added";
  }
  return "kept";
}

VerificationOutcome verify_factor_set(Oracle& oracle, const FactorSet& factor_set,
                                      const std::vector<std::string>& sample_conditions,
                                      const ElicitationOptions& options) {
  if (sample_conditions.empty()) throw ValidationError("verification needs at least one sample condition");
  if (options.iteration_cap < 1) throw ConfigError("iteration cap must be at least 1");
  factor_set.validate();
  std::vector<std::string> conditions(sample_conditions.begin(),
                                      sample_conditions.begin() +
                                          std::min<std::ptrdiff_t>(std::max(options.sample_conditions, 1),
                                                                   static_cast<std::ptrdiff_t>(sample_conditions.size())));
  VerificationOutcome out{factor_set, {}};
  auto& report = out.report;
  for (int iter = 1; iter <= options.iteration_cap; ++iter) {
    report = VerificationReport{};
    report.iterations = iter;
    bool changed = false;

    // Discriminability.
    std::vector<FactorDraft> next;
    const FactorSet& fs = out.factor_set;
    for (int j = 0; j < fs.size(); ++j) {
      SupportVerdict v = oracle.check_binary_support(fs, j);
      FactorVerdict fv{fs.at(j).name, v.pass, v.rationale, FactorAction::kKept};
      if (v.pass) {
        next.push_back({fs.at(j).name, fs.at(j).positive_description, fs.at(j).negative_description});
      } else if (v.reformulation && usable(*v.reformulation)) {
        fv.action = FactorAction::kReformulated;
        next.push_back(*v.reformulation);
        changed = true;
      } else {
        fv.action = FactorAction::kDiscarded;
        changed = true;
      }
      report.factors.push_back(std::move(fv));
    }
    next = clean_drafts(next);
    if (next.empty()) throw ElicitationError("every factor was discarded during verification");
    out.factor_set = build_set(next, factor_set);

    // Pairwise overlap on the revised set.
    std::vector<bool> removed(next.size(), false);
    for (std::size_t a = 0; a < next.size(); ++a) {
      for (std::size_t b = a + 1; b < next.size(); ++b) {
        if (removed[a] || removed[b]) continue;
        OverlapVerdict v = oracle.check_overlap(out.factor_set, static_cast<int>(a), static_cast<int>(b));
        if (!v.overlap) continue;
        OverlapFinding f{next[a].name, next[b].name, v.rationale, next[a].name};
        if (v.merged && usable(*v.merged)) {
          next[a] = *v.merged;
          next[a].name = normalize_factor_name(next[a].name);
          f.merged_into = next[a].name;
        }
        removed[b] = true;
        report.overlaps.push_back(std::move(f));
        changed = true;
      }
    }
    std::vector<FactorDraft> kept;
    for (std::size_t a = 0; a < next.size(); ++a) {
      if (!removed[a]) kept.push_back(next[a]);
    }
    kept = clean_drafts(kept);
    out.factor_set = build_set(kept, factor_set);

    // Coverage of sample conditions; unmapped units expand the set.
    bool all_covered = true;
    for (const auto& c : conditions) {
      CoverageVerdict v = oracle.check_coverage(out.factor_set, c);
      CoverageFinding f{c, v.covered, v.unmapped_units, {}};
      if (!v.covered) {
        all_covered = false;
        for (const auto& d : clean_drafts(v.new_factors)) {
          if (std::none_of(kept.begin(), kept.end(), [&](const FactorDraft& k) { return k.name == d.name; })) {
            kept.push_back(d);
            f.added_factors.push_back(d.name);
            changed = true;
          }
        }
      }
      report.coverage.push_back(std::move(f));
    }
    kept = cap_size(oracle, factor_set.scenario(), std::move(kept), options.max_factors);
    out.factor_set = build_set(kept, factor_set);

    if (!changed && all_covered) {
      report.converged = true;
      break;
    }
  }
  return out;
}

ElicitationResult elicit(Oracle& oracle, const std::string& scenario,
                         const std::string& outcome_positive, const std::string& outcome_negative,
                         std::vector<std::string> sample_conditions,
                         const ElicitationOptions& options) {
  ElicitationResult r;
  r.positive = generate_statements(oracle, scenario, outcome_positive, options);
  r.negative = generate_statements(oracle, scenario, outcome_negative, options);
  r.candidates = extract_factors(oracle, scenario, r.positive, r.negative, options);
  if (sample_conditions.empty()) {
    for (std::size_t k = 0; k < r.positive.statements.size() || k < r.negative.statements.size(); ++k) {
      if (k < r.positive.statements.size()) sample_conditions.push_back(r.positive.statements[k]);
      if (k < r.negative.statements.size()) sample_conditions.push_back(r.negative.statements[k]);
    }
  }
  r.verified = verify_factor_set(oracle, r.candidates, sample_conditions, options);
  return r;
}

}  // namespace factorlens
