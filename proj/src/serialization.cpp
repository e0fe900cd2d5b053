#include "factorlens/serialization.hpp"

#include "factorlens/error.hpp"
#include "factorlens/util.hpp"

namespace factorlens {
namespace {

template <typename T>
T field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(std::string("missing field: ") + key);
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad field ") + key + ": " + e.what());
  }
}

template <typename T>
T field_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return field<T>(j, key);
}

std::array<double, kLevelCount> level_array(const Json& j) {
  if (!j.is_array() || j.size() != kLevelCount) throw ValidationError("expected 7 level values");
  std::array<double, kLevelCount> out{};
  for (std::size_t m = 0; m < kLevelCount; ++m) out[m] = j[m].get<double>();
  return out;
}

}  // namespace

void to_json(Json& j, const Factor& v) {
  j = Json{{"id", v.id},
           {"name", v.name},
           {"positive", v.positive_description},
           {"negative", v.negative_description}};
}
void from_json(const Json& j, Factor& v) {
  v.id = field<int>(j, "id");
  v.name = field<std::string>(j, "name");
  v.positive_description = field<std::string>(j, "positive");
  v.negative_description = field<std::string>(j, "negative");
}

void to_json(Json& j, const FactorSet& v) {
  j = Json{{"scenario", v.scenario()},
           {"outcome_positive", v.outcome_positive()},
           {"outcome_negative", v.outcome_negative()},
           {"factors", v.factors()}};
}
void from_json(const Json& j, FactorSet& v) {
  v = FactorSet(field<std::vector<Factor>>(j, "factors"), field<std::string>(j, "scenario"),
                field<std::string>(j, "outcome_positive"), field<std::string>(j, "outcome_negative"));
}

void to_json(Json& j, const FactorConfiguration& v) { j = v.bits(); }
void from_json(const Json& j, FactorConfiguration& v) {
  if (!j.is_array()) throw ValidationError("configuration must be a 0/1 array");
  v = FactorConfiguration(j.get<std::vector<int>>());
}

void to_json(Json& j, const DecisionParams& v) {
  Json gamma = Json::array();
  for (const auto& [key, value] : v.gamma) gamma.push_back(Json::array({key.first, key.second, value}));
  j = Json{{"alpha", v.alpha}, {"beta", v.beta}, {"gamma", gamma}};
}
void from_json(const Json& j, DecisionParams& v) {
  v = DecisionParams();
  v.alpha = field<double>(j, "alpha");
  v.beta = field<std::vector<double>>(j, "beta");
  for (const auto& t : field<Json>(j, "gamma")) {
    if (!t.is_array() || t.size() != 3) throw ValidationError("gamma entries are [i, j, value]");
    const int a = t[0].get<int>();
    const int b = t[1].get<int>();
    if (a >= b) throw ValidationError("gamma pair must satisfy i < j");
    v.gamma[{a, b}] = t[2].get<double>();
  }
  v.validate();
}

void to_json(Json& j, const VerbalMap& v) { j = v.values(); }
void from_json(const Json& j, VerbalMap& v) { v = VerbalMap(level_array(j)); }

void to_json(Json& j, const MonotoneBounds& v) { j = Json{{"lower", v.lower}, {"upper", v.upper}}; }
void from_json(const Json& j, MonotoneBounds& v) {
  v.lower = level_array(field<Json>(j, "lower"));
  v.upper = level_array(field<Json>(j, "upper"));
  v.validate();
}

void to_json(Json& j, const Observation& v) {
  j = Json{{"config", v.config}, {"level", ordinal(v.level)}};
}
void from_json(const Json& j, Observation& v) {
  v.config = field<FactorConfiguration>(j, "config");
  v.level = level_from_ordinal(field<int>(j, "level"));
}

void to_json(Json& j, const DatasetProvenance& v) {
  j = Json{{"backend", v.backend},       {"seed", v.seed},
           {"plan_mode", v.plan_mode},   {"budget", v.budget},
           {"started_at", v.started_at}, {"finished_at", v.finished_at},
           {"note", v.note}};
}
void from_json(const Json& j, DatasetProvenance& v) {
  v.backend = field<std::string>(j, "backend");
  v.seed = field<std::uint64_t>(j, "seed");
  v.plan_mode = field<std::string>(j, "plan_mode");
  v.budget = field<std::size_t>(j, "budget");
  v.started_at = field<std::string>(j, "started_at");
  v.finished_at = field<std::string>(j, "finished_at");
  v.note = field_or<std::string>(j, "note", "");
}

void to_json(Json& j, const BehavioralDataset& v) {
  j = Json{{"factor_set", v.factor_set},
           {"observations", v.observations},
           {"provenance", v.provenance}};
}
void from_json(const Json& j, BehavioralDataset& v) {
  v.factor_set = field<FactorSet>(j, "factor_set");
  v.observations = field<std::vector<Observation>>(j, "observations");
  v.provenance = field<DatasetProvenance>(j, "provenance");
  v.validate();
}

void to_json(Json& j, const OracleTranscript& v) {
  j = Json{{"template_id", v.template_id}, {"prompt", v.prompt},
           {"response", v.response},       {"parsed", v.parsed},
           {"timestamp", v.timestamp},     {"attempts", v.attempts}};
}
void from_json(const Json& j, OracleTranscript& v) {
  v.template_id = field<std::string>(j, "template_id");
  v.prompt = field<std::string>(j, "prompt");
  v.response = field<std::string>(j, "response");
  v.parsed = field<std::string>(j, "parsed");
  v.timestamp = field<std::string>(j, "timestamp");
  v.attempts = field<int>(j, "attempts");
}

void to_json(Json& j, const EmConfig& v) {
  j = Json{{"sigma_theta_sq", v.sigma_theta_sq},
           {"sigma_phi_sq", v.sigma_phi_sq},
           {"lambda1", v.lambda1},
           {"lambda2", v.lambda2},
           {"lambda_mr", v.lambda_mr},
           {"margin_eps", v.margin_eps},
           {"learning_rate", v.learning_rate},
           {"inner_steps", v.inner_steps},
           {"convergence_tol", v.convergence_tol},
           {"max_iters", v.max_iters},
           {"bounds", v.bounds},
           {"seed", v.seed},
           {"update_map", v.update_map},
           {"interactions", v.interactions}};
}
void from_json(const Json& j, EmConfig& v) {
  v.sigma_theta_sq = field<double>(j, "sigma_theta_sq");
  v.sigma_phi_sq = field<double>(j, "sigma_phi_sq");
  v.lambda1 = field<double>(j, "lambda1");
  v.lambda2 = field<double>(j, "lambda2");
  v.lambda_mr = field<double>(j, "lambda_mr");
  v.margin_eps = field<double>(j, "margin_eps");
  v.learning_rate = field<double>(j, "learning_rate");
  v.inner_steps = field<int>(j, "inner_steps");
  v.convergence_tol = field<double>(j, "convergence_tol");
  v.max_iters = field<int>(j, "max_iters");
  v.bounds = field<MonotoneBounds>(j, "bounds");
  v.seed = field<std::uint64_t>(j, "seed");
  v.update_map = field<bool>(j, "update_map");
  v.interactions = field<bool>(j, "interactions");
  v.validate();
}

void to_json(Json& j, const FitDiagnostics& v) {
  j = Json{{"q_values", v.q_values},
           {"marginal_log_likelihood", v.marginal_log_likelihood},
           {"iterations", v.iterations},
           {"converged", v.converged},
           {"monotonicity_violation",
            v.monotonicity_violation ? Json(*v.monotonicity_violation) : Json(nullptr)},
           {"rank_deficient", v.rank_deficient}};
}
void from_json(const Json& j, FitDiagnostics& v) {
  v.q_values = field<std::vector<double>>(j, "q_values");
  v.marginal_log_likelihood = field<double>(j, "marginal_log_likelihood");
  v.iterations = field<int>(j, "iterations");
  v.converged = field<bool>(j, "converged");
  v.monotonicity_violation.reset();
  if (j.contains("monotonicity_violation") && !j["monotonicity_violation"].is_null()) {
    v.monotonicity_violation = j["monotonicity_violation"].get<int>();
  }
  v.rank_deficient = field<bool>(j, "rank_deficient");
}

void to_json(Json& j, const Weighting& v) {
  j = v.uniform() ? Json("uniform") : Json(v.distribution);
}
void from_json(const Json& j, Weighting& v) {
  if (j.is_string() && j.get<std::string>() == "uniform") {
    v.distribution.clear();
  } else if (j.is_array()) {
    v.distribution = j.get<std::vector<double>>();
  } else {
    throw ValidationError("weighting must be \"uniform\" or an array");
  }
}

void to_json(Json& j, const RatioConstraint& v) {
  j = Json{{"anchor", v.anchor}, {"target", v.target}, {"rho", v.rho}};
}
void from_json(const Json& j, RatioConstraint& v) {
  v.anchor = field<int>(j, "anchor");
  v.target = field<int>(j, "target");
  v.rho = field<double>(j, "rho");
}

void to_json(Json& j, const CoefficientRef& v) {
  j = Json{{"which", v.which}, {"i", v.i}, {"j", v.j}};
}
void from_json(const Json& j, CoefficientRef& v) {
  v.which = field<std::string>(j, "which");
  v.i = field<int>(j, "i");
  v.j = field_or<int>(j, "j", 0);
}

void to_json(Json& j, const EditRecord& v) {
  j = Json{{"sequence", v.sequence},
           {"lineage", v.lineage},
           {"kind", to_string(v.kind)},
           {"factor", v.factor},
           {"ratio", v.ratio ? Json(*v.ratio) : Json(nullptr)},
           {"weighting", v.weighting},
           {"coefficient", v.coefficient ? Json(*v.coefficient) : Json(nullptr)},
           {"value", v.value},
           {"reverts", v.reverts},
           {"pre", v.pre},
           {"post", v.post},
           {"constraint_residuals", v.constraint_residuals},
           {"side_effect", v.side_effect},
           {"timestamp", v.timestamp},
           {"author", v.author},
           {"reverted", v.reverted}};
}
void from_json(const Json& j, EditRecord& v) {
  v.sequence = field<int>(j, "sequence");
  v.lineage = field<std::string>(j, "lineage");
  v.kind = edit_kind_from_string(field<std::string>(j, "kind"));
  v.factor = field<int>(j, "factor");
  v.ratio.reset();
  if (j.contains("ratio") && !j["ratio"].is_null()) v.ratio = j["ratio"].get<RatioConstraint>();
  v.weighting = field<Weighting>(j, "weighting");
  v.coefficient.reset();
  if (j.contains("coefficient") && !j["coefficient"].is_null()) {
    v.coefficient = j["coefficient"].get<CoefficientRef>();
  }
  v.value = field<double>(j, "value");
  v.reverts = field<int>(j, "reverts");
  v.pre = field<DecisionParams>(j, "pre");
  v.post = field<DecisionParams>(j, "post");
  v.constraint_residuals = field<std::vector<double>>(j, "constraint_residuals");
  v.side_effect = field<double>(j, "side_effect");
  v.timestamp = field<std::string>(j, "timestamp");
  v.author = field<std::string>(j, "author");
  v.reverted = field<bool>(j, "reverted");
}

void to_json(Json& j, const TrainedModel& v) {
  j = Json{{"factor_set", v.factor_set},
           {"params", v.params},
           {"trained_params", v.trained_params},
           {"map", v.map},
           {"em_config", v.em_config},
           {"diagnostics", v.diagnostics},
           {"dataset_hash", v.dataset_hash},
           {"edits", v.edits}};
}
void from_json(const Json& j, TrainedModel& v) {
  v.factor_set = field<FactorSet>(j, "factor_set");
  v.params = field<DecisionParams>(j, "params");
  v.trained_params = field<DecisionParams>(j, "trained_params");
  from_json(field<Json>(j, "map"), v.map);
  v.em_config = field<EmConfig>(j, "em_config");
  v.diagnostics = field<FitDiagnostics>(j, "diagnostics");
  v.dataset_hash = field<std::string>(j, "dataset_hash");
  v.edits = field<std::vector<EditRecord>>(j, "edits");
  v.validate();
}

void to_json(Json& j, const FactorDraft& v) {
  j = Json{{"name", v.name}, {"positive", v.positive_description}, {"negative", v.negative_description}};
}
void from_json(const Json& j, FactorDraft& v) {
  v.name = field<std::string>(j, "name");
  v.positive_description = field<std::string>(j, "positive");
  v.negative_description = field<std::string>(j, "negative");
}

void to_json(Json& j, const SyntheticOracleSpec& v) {
  Json table = Json::object();
  for (const auto& [condition, answers] : v.partition_table) {
    Json row = Json::array();
    for (auto d : answers) row.push_back(to_string(d));
    table[condition] = row;
  }
  j = Json{{"true_params", v.true_params},
           {"true_map", v.true_map},
           {"label_noise", v.label_noise},
           {"completion_correlation", v.completion_correlation},
           {"rng_seed", v.rng_seed},
           {"partition_table", table}};
}
void from_json(const Json& j, SyntheticOracleSpec& v) {
  v.true_params = field<DecisionParams>(j, "true_params");
  from_json(field<Json>(j, "true_map"), v.true_map);
  v.label_noise = field<double>(j, "label_noise");
  v.completion_correlation = field<double>(j, "completion_correlation");
  v.rng_seed = field<std::uint64_t>(j, "rng_seed");
  v.partition_table.clear();
  if (j.contains("partition_table")) {
    for (const auto& [condition, row] : j["partition_table"].items()) {
      std::vector<Determination> answers;
      for (const auto& a : row) answers.push_back(determination_from_string(a.get<std::string>()));
      v.partition_table[condition] = std::move(answers);
    }
  }
  v.validate();
}

void to_json(Json& j, const RemoteConfig& v) {
  j = Json{{"base_url", v.base_url},
           {"model", v.model},
           {"auth_token_env", v.auth_token_env},
           {"timeout_seconds", v.timeout_seconds},
           {"max_retries", v.max_retries},
           {"record_path", v.record_path}};
}
void from_json(const Json& j, RemoteConfig& v) {
  v.base_url = field<std::string>(j, "base_url");
  v.model = field<std::string>(j, "model");
  v.auth_token_env = field_or<std::string>(j, "auth_token_env", "");
  v.timeout_seconds = field_or<double>(j, "timeout_seconds", 60.0);
  v.max_retries = field_or<int>(j, "max_retries", 2);
  v.record_path = field_or<std::string>(j, "record_path", "");
}

void to_json(Json& j, const OracleBackend& v) {
  j = Json{{"kind", to_string(v.kind)}};
  switch (v.kind) {
    case BackendKind::kRemote: j["remote"] = v.remote; break;
    case BackendKind::kReplay: j["replay_path"] = v.replay_path; break;
    case BackendKind::kSynthetic:
      if (v.synthetic) j["synthetic"] = *v.synthetic;
      break;
  }
}
void from_json(const Json& j, OracleBackend& v) {
  v = OracleBackend{};
  v.kind = backend_kind_from_string(field<std::string>(j, "kind"));
  if (j.contains("remote")) v.remote = j["remote"].get<RemoteConfig>();
  if (j.contains("replay_path")) v.replay_path = j["replay_path"].get<std::string>();
  if (j.contains("synthetic")) {
    SyntheticOracleSpec spec;
    from_json(j["synthetic"], spec);
    v.synthetic = std::move(spec);
  }
}

void to_json(Json& j, const FactorVerdict& v) {
  j = Json{{"name", v.name}, {"pass", v.pass}, {"rationale", v.rationale}, {"action", to_string(v.action)}};
}
void from_json(const Json& j, FactorVerdict& v) {
  v.name = field<std::string>(j, "name");
  v.pass = field<bool>(j, "pass");
  v.rationale = field<std::string>(j, "rationale");
  const auto a = field<std::string>(j, "action");
  v.action = FactorAction::kKept;
  for (auto k : {FactorAction::kKept, FactorAction::kReformulated, FactorAction::kDiscarded,
                 FactorAction::kMerged, FactorAction::kAdded}) {
    if (to_string(k) == a) v.action = k;
  }
}

void to_json(Json& j, const OverlapFinding& v) {
  j = Json{{"first", v.first}, {"second", v.second}, {"rationale", v.rationale}, {"merged_into", v.merged_into}};
}
void from_json(const Json& j, OverlapFinding& v) {
  v.first = field<std::string>(j, "first");
  v.second = field<std::string>(j, "second");
  v.rationale = field<std::string>(j, "rationale");
  v.merged_into = field<std::string>(j, "merged_into");
}

void to_json(Json& j, const CoverageFinding& v) {
  j = Json{{"condition", v.condition},
           {"covered", v.covered},
           {"unmapped_units", v.unmapped_units},
           {"added_factors", v.added_factors}};
}
void from_json(const Json& j, CoverageFinding& v) {
  v.condition = field<std::string>(j, "condition");
  v.covered = field<bool>(j, "covered");
  v.unmapped_units = field<std::vector<std::string>>(j, "unmapped_units");
  v.added_factors = field<std::vector<std::string>>(j, "added_factors");
}

void to_json(Json& j, const VerificationReport& v) {
  j = Json{{"factors", v.factors},
           {"overlaps", v.overlaps},
           {"coverage", v.coverage},
           {"iterations", v.iterations},
           {"converged", v.converged}};
}
void from_json(const Json& j, VerificationReport& v) {
  v.factors = field<std::vector<FactorVerdict>>(j, "factors");
  v.overlaps = field<std::vector<OverlapFinding>>(j, "overlaps");
  v.coverage = field<std::vector<CoverageFinding>>(j, "coverage");
  v.iterations = field<int>(j, "iterations");
  v.converged = field<bool>(j, "converged");
}

void to_json(Json& j, const StatementBatch& v) {
  j = Json{{"outcome", v.outcome}, {"statements", v.statements}, {"transcripts", v.transcripts}};
}

void to_json(Json& j, const ConditionPartition& v) {
  Json observed = Json::object();
  for (const auto& [id, bit] : v.observed) observed[std::to_string(id)] = bit ? 1 : 0;
  j = Json{{"observed", observed},
           {"uncertain", std::vector<int>(v.uncertain.begin(), v.uncertain.end())},
           {"condition", v.condition_text}};
}
void from_json(const Json& j, ConditionPartition& v) {
  v = ConditionPartition{};
  const Json observed = field<Json>(j, "observed");
  for (const auto& [id, bit] : observed.items()) v.observed[std::stoi(id)] = bit.get<int>() != 0;
  for (int id : field<std::vector<int>>(j, "uncertain")) v.uncertain.insert(id);
  v.condition_text = field_or<std::string>(j, "condition", "");
}

void to_json(Json& j, const InferenceResult& v) {
  j = Json{{"probability", v.probability},
           {"samples_used", v.samples_used},
           {"standard_error", v.standard_error ? Json(*v.standard_error) : Json(nullptr)},
           {"per_sample_probs", v.per_sample_probs},
           {"partition", v.partition}};
}

void to_json(Json& j, const OrdinalAuditReport& v) {
  Json violations = Json::array();
  for (const auto& p : v.violations) violations.push_back(Json::array({p.dominant, p.dominated}));
  j = Json{{"comparable_pairs", v.comparable_pairs},
           {"consistent_pairs", v.consistent_pairs},
           {"ratio", v.ratio ? Json(*v.ratio) : Json(nullptr)},
           {"violations", violations}};
}

void to_json(Json& j, const AmeReport& v) {
  j = Json{{"ame", v.ame}, {"enumeration_size", v.enumeration_size}, {"weighting", v.weighting}};
}

std::string canonical_dump(const Json& j) { return j.dump(); }

std::string dataset_fingerprint(const BehavioralDataset& dataset) {
  return sha256_hex(canonical_dump(
      Json{{"factor_set", dataset.factor_set}, {"observations", dataset.observations}}));
}

std::string params_fingerprint(const DecisionParams& params) {
  return sha256_hex(canonical_dump(to_json_value(params)));
}

}  // namespace factorlens
