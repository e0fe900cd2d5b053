#include "doctest.h"

#include <deque>

#include "factorlens/elicitation.hpp"
#include "factorlens/error.hpp"

using namespace factorlens;

namespace {

FactorDraft draft(const std::string& name) { return {name, name + " holds", name + " does not hold"}; }

std::vector<std::string> numbered(const std::string& stem, int from, int count) {
  std::vector<std::string> out;
  for (int i = from; i < from + count; ++i) out.push_back(stem + " " + std::to_string(i));
  return out;
}

// Replays scripted answers in order; every call leaves one transcript.
class ScriptedOracle final : public Oracle {
 public:
  ScriptedOracle() : Oracle(std::make_shared<AuditLog>()) {}

  std::deque<std::vector<std::string>> statements;
  std::vector<FactorDraft> extracted;
  std::deque<std::vector<FactorDraft>> merges;
  std::map<std::string, std::deque<SupportVerdict>> support;  // by factor name; default pass
  std::map<std::pair<std::string, std::string>, OverlapVerdict> overlaps;
  std::deque<CoverageVerdict> coverage;  // default covered
  int statement_calls = 0, merge_calls = 0, support_calls = 0, overlap_calls = 0, coverage_calls = 0;

  BackendKind kind() const override { return BackendKind::kSynthetic; }
  VerbalLevel elicit_verbal(const FactorSet&, const FactorConfiguration&, std::uint64_t) override {
    throw BackendError("unused");
  }
  FactorConfiguration sample_completion(const FactorSet&, const PartialConfiguration&, const std::string&,
                                        double, std::uint64_t) override {
    throw BackendError("unused");
  }
  Determination determine_factor(const FactorSet&, int, const std::string&) override {
    throw BackendError("unused");
  }
  QueryDecomposition decompose_query(const std::string&) override { throw BackendError("unused"); }

  std::vector<std::string> generate_statements(const std::string&, const std::string& outcome, int,
                                               const std::vector<std::string>&) override {
    ++statement_calls;
    record("generate_statements", outcome, "scripted", "scripted");
    if (statements.empty()) return {};
    auto s = statements.front();
    statements.pop_front();
    return s;
  }
  std::vector<FactorDraft> extract_factors(const std::string&, const std::vector<std::string>&,
                                           const std::vector<std::string>&) override {
    record("extract_factors", "", "scripted", "scripted");
    return extracted;
  }
  std::vector<FactorDraft> merge_factors(const std::string&, const std::vector<FactorDraft>& c,
                                         int max_factors) override {
    ++merge_calls;
    record("merge_factors", "", "scripted", "scripted");
    if (!merges.empty()) {
      auto m = merges.front();
      merges.pop_front();
      return m;
    }
    return {c.begin(), c.begin() + std::min<std::ptrdiff_t>(max_factors, static_cast<std::ptrdiff_t>(c.size()))};
  }
  SupportVerdict check_binary_support(const FactorSet& fs, int factor) override {
    ++support_calls;
    record("check_binary_support", fs.at(factor).name, "scripted", "scripted");
    auto it = support.find(fs.at(factor).name);
    if (it == support.end() || it->second.empty()) return {true, "fine", std::nullopt};
    auto v = it->second.front();
    it->second.pop_front();
    return v;
  }
  OverlapVerdict check_overlap(const FactorSet& fs, int a, int b) override {
    ++overlap_calls;
    record("check_overlap", fs.at(a).name + "|" + fs.at(b).name, "scripted", "scripted");
    auto it = overlaps.find({fs.at(a).name, fs.at(b).name});
    if (it == overlaps.end()) return {false, "distinct", std::nullopt};
    auto v = it->second;
    overlaps.erase(it);
    return v;
  }
  CoverageVerdict check_coverage(const FactorSet&, const std::string& condition) override {
    ++coverage_calls;
    record("check_coverage", condition, "scripted", "scripted");
    if (coverage.empty()) return {true, {}, {}};
    auto v = coverage.front();
    coverage.pop_front();
    return v;
  }
};

FactorSet set_of(const std::vector<std::string>& names) {
  std::vector<Factor> fs;
  for (const auto& n : names) {
    auto d = draft(n);
    fs.push_back({static_cast<int>(fs.size()), d.name, d.positive_description, d.negative_description});
  }
  return FactorSet(std::move(fs), "loan", "approve", "reject");
}

std::vector<std::string> names_of(const FactorSet& fs) {
  std::vector<std::string> out;
  for (const auto& f : fs.factors()) out.push_back(f.name);
  return out;
}

}  // namespace

TEST_CASE("normalization helpers") {
  CHECK(normalize_statement("  The Applicant   has DEBT. ") == "the applicant has debt");
  CHECK(normalize_statement("...") == "");
  CHECK(normalize_factor_name("Stable Income!") == "stable_income");
  CHECK(normalize_factor_name("  -- ") == "");
}

TEST_CASE("scripted statements come back as given") {
  ScriptedOracle o;
  o.statements.push_back(numbered("applicant story", 0, 20));
  auto b = generate_statements(o, "loan", "approve");
  CHECK(b.outcome == "approve");
  CHECK(b.statements == numbered("applicant story", 0, 20));
  CHECK(o.statement_calls == 1);
  CHECK(o.audit().size() == 1);
  CHECK(b.transcripts == std::vector<std::size_t>{0});
}

TEST_CASE("duplicates collapse and are topped up from another round") {
  ScriptedOracle o;
  auto first = numbered("story", 0, 15);
  first.push_back("Story 3.");
  first.push_back("  story   4");
  first.push_back("story 0");
  first.push_back("");
  first.push_back("story 1");
  o.statements.push_back(first);
  o.statements.push_back({"story 2", "story 15", "story 16", "story 17", "story 18", "story 19"});
  auto b = generate_statements(o, "loan", "approve");
  CHECK(b.statements.size() == 20);
  CHECK(o.statement_calls == 2);
  CHECK(o.audit().size() == 2);
  CHECK(b.transcripts.size() == 2);
}

TEST_CASE("running out of retries is an elicitation error") {
  ScriptedOracle o;
  for (int i = 0; i < 4; ++i) o.statements.push_back({"same thing"});
  ElicitationOptions opts;
  opts.retry_cap = 3;
  CHECK_THROWS_AS(generate_statements(o, "loan", "approve", opts), ElicitationError);
  CHECK(o.statement_calls == 4);
}

TEST_CASE("extraction yields the scripted factors with unique names") {
  ScriptedOracle o;
  o.extracted = {draft("Stable Income"), draft("debt"), draft("stable income"), {"", "a", "b"}, {"same", "x", "x"}};
  StatementBatch pos{"approve", {"a"}, {}}, neg{"reject", {"b"}, {}};
  auto fs = extract_factors(o, "loan", pos, neg);
  CHECK(names_of(fs) == std::vector<std::string>{"stable_income", "debt"});
  CHECK(fs.at(0).positive_description == "Stable Income holds");
  CHECK(fs.outcome_positive() == "approve");
  CHECK(fs.outcome_negative() == "reject");
  CHECK_THROWS_AS(extract_factors(o, "loan", StatementBatch{}, neg), ValidationError);

  ScriptedOracle none;
  CHECK_THROWS_AS(extract_factors(none, "loan", pos, neg), ElicitationError);
}

TEST_CASE("too many candidates trigger a merge pass") {
  ScriptedOracle o;
  for (int i = 0; i < 25; ++i) o.extracted.push_back(draft("factor " + std::to_string(i)));
  StatementBatch pos{"approve", {"a"}, {}}, neg{"reject", {"b"}, {}};
  auto fs = extract_factors(o, "loan", pos, neg);
  CHECK(fs.size() <= 20);
  CHECK(o.merge_calls == 1);

  ScriptedOracle stubborn;
  stubborn.extracted = o.extracted;
  stubborn.merges.push_back(o.extracted);
  stubborn.merges.push_back(o.extracted);
  CHECK_THROWS_AS(extract_factors(stubborn, "loan", pos, neg), ElicitationError);
}

TEST_CASE("an approving oracle converges in one pass") {
  ScriptedOracle o;
  auto fs = set_of({"income", "debt", "age"});
  auto out = verify_factor_set(o, fs, {"c1", "c2"});
  CHECK(out.report.converged);
  CHECK(out.report.iterations == 1);
  CHECK(out.factor_set == fs);
  CHECK(o.support_calls == 3);
  CHECK(o.overlap_calls == 3);
  CHECK(o.coverage_calls == 2);
  CHECK(o.audit().size() == 8);
  for (const auto& v : out.report.factors) CHECK(v.action == FactorAction::kKept);
}

TEST_CASE("a failed factor is reformulated and the loop takes two passes") {
  ScriptedOracle o;
  o.support["debt"].push_back({false, "both outcomes", draft("high_debt")});
  auto out = verify_factor_set(o, set_of({"income", "debt"}), {"c"});
  CHECK(out.report.converged);
  CHECK(out.report.iterations == 2);
  CHECK(names_of(out.factor_set) == std::vector<std::string>{"income", "high_debt"});
}

TEST_CASE("a failed factor without a reformulation is discarded") {
  ScriptedOracle o;
  o.support["age"].push_back({false, "irrelevant", std::nullopt});
  auto out = verify_factor_set(o, set_of({"income", "age", "debt"}), {"c"});
  CHECK(names_of(out.factor_set) == std::vector<std::string>{"income", "debt"});
  CHECK(out.report.converged);

  ScriptedOracle harsh;
  harsh.support["only"].push_back({false, "no", std::nullopt});
  CHECK_THROWS_AS(verify_factor_set(harsh, set_of({"only"}), {"c"}), ElicitationError);
}

TEST_CASE("overlapping factors are merged") {
  ScriptedOracle o;
  o.overlaps[{"income", "salary"}] = {true, "same thing", draft("earnings")};
  auto out = verify_factor_set(o, set_of({"income", "salary", "debt"}), {"c"});
  CHECK(names_of(out.factor_set) == std::vector<std::string>{"earnings", "debt"});
  CHECK(out.report.converged);
  CHECK(out.report.iterations == 2);
}

TEST_CASE("a coverage gap adds one factor") {
  ScriptedOracle o;
  o.coverage.push_back({false, {"self-employed"}, {draft("self_employed")}});
  auto out = verify_factor_set(o, set_of({"income", "debt"}), {"c"});
  CHECK(out.factor_set.size() == 3);
  CHECK(out.factor_set.at(2).name == "self_employed");
  CHECK(out.report.converged);
  CHECK(out.report.iterations == 2);
}

TEST_CASE("the iteration cap stops a loop that never settles") {
  ScriptedOracle o;
  for (int i = 0; i < 10; ++i) o.coverage.push_back({false, {"unit"}, {}});
  ElicitationOptions opts;
  opts.iteration_cap = 3;
  auto out = verify_factor_set(o, set_of({"income"}), {"c"}, opts);
  CHECK_FALSE(out.report.converged);
  CHECK(out.report.iterations == 3);
  REQUIRE(out.report.coverage.size() == 1);
  CHECK_FALSE(out.report.coverage[0].covered);
  CHECK_THROWS_AS(verify_factor_set(o, set_of({"income"}), {}), ValidationError);
}

TEST_CASE("only the configured number of sample conditions is checked") {
  ScriptedOracle o;
  ElicitationOptions opts;
  opts.sample_conditions = 2;
  verify_factor_set(o, set_of({"a"}), {"c1", "c2", "c3", "c4"}, opts);
  CHECK(o.coverage_calls == 2);
}

TEST_CASE("full elicitation loop with statements as coverage probes") {
  ScriptedOracle o;
  o.statements.push_back(numbered("good", 0, 20));
  o.statements.push_back(numbered("bad", 0, 20));
  o.extracted = {draft("income"), draft("debt")};
  auto r = elicit(o, "loan", "approve", "reject");
  CHECK(r.positive.statements.size() == 20);
  CHECK(r.negative.statements.size() == 20);
  CHECK(r.candidates.size() == 2);
  CHECK(r.verified.report.converged);
  CHECK(o.coverage_calls == 10);
  CHECK(r.verified.report.coverage[0].condition == "good 0");
  CHECK(r.verified.report.coverage[1].condition == "bad 0");
}
