#include "factorlens/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "factorlens/editing.hpp"
#include "factorlens/elicitation.hpp"
#include "factorlens/em.hpp"
#include "factorlens/inference.hpp"
#include "factorlens/probing.hpp"
#include "factorlens/synthetic.hpp"

namespace factorlens {

void to_json(Json& j, const RunManifest& v) {
  j = Json{{"command", v.command},
           {"argv", v.argv},
           {"config", v.config},
           {"inputs", v.inputs},
           {"outputs", v.outputs},
           {"seed", v.seed},
           {"started_at", v.started_at},
           {"wall_time_seconds", v.wall_time_seconds}};
}

void from_json(const Json& j, RunManifest& v) {
  try {
    v.command = j.at("command").get<std::string>();
    v.argv = j.value("argv", std::vector<std::string>{});
    v.config = j.at("config");
    v.inputs = j.value("inputs", std::map<std::string, std::string>{});
    v.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    v.seed = j.value("seed", std::uint64_t{0});
    v.started_at = j.at("started_at").get<std::string>();
    v.wall_time_seconds = j.value("wall_time_seconds", 0.0);
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed run manifest: ") + e.what());
  }
}

const std::vector<std::string>& pipeline_commands() {
  static const std::vector<std::string> names{"synth", "elicit", "probe", "fit",
                                              "infer", "edit",   "audit", "report"};
  return names;
}

namespace {

const std::map<std::string, ArtifactKind>& input_roles() {
  static const std::map<std::string, ArtifactKind> roles{
      {"factors", ArtifactKind::kFactors},
      {"dataset", ArtifactKind::kDataset},
      {"model", ArtifactKind::kModel},
  };
  return roles;
}

template <typename T>
T get_or(const Json& config, const char* key, T fallback) {
  if (!config.contains(key) || config[key].is_null()) return fallback;
  try {
    return config[key].get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("bad value for ") + key + ": " + e.what());
  }
}

template <typename T>
T get_required(const Json& config, const char* key) {
  if (!config.contains(key)) throw ConfigError(std::string("missing ") + key);
  try {
    return config[key].get<T>();
  } catch (const ValidationError&) {
    throw;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("bad value for ") + key + ": " + e.what());
  }
}

struct Backend {
  std::unique_ptr<Oracle> oracle;
  std::shared_ptr<AuditLog> audit;
  std::string declared_kind;
};

Backend open_backend(const Json& config, const Clock& clock) {
  if (!config.contains("backend")) throw ConfigError("this command needs an oracle backend");
  OracleBackend spec;
  from_json(config["backend"], spec);
  Backend b;
  b.declared_kind = config["backend"].value("declared_kind", to_string(spec.kind));
  b.audit = std::make_shared<AuditLog>();
  b.oracle = make_oracle(spec, b.audit, clock);
  if (config.contains("backend_factor_set")) {
    if (auto* synthetic = dynamic_cast<SyntheticOracle*>(b.oracle.get())) {
      synthetic->set_factor_set(config["backend_factor_set"].get<FactorSet>());
    }
  }
  return b;
}

void save_transcripts(Store& store, const Backend& b, CommandResult& out) {
  auto log = b.audit->snapshot();
  if (!log.empty()) out.outputs["transcripts"] = store.save(log);
}

int factor_index(const FactorSet& fs, const Json& v, const char* what) {
  if (v.is_number_integer()) {
    const int k = v.get<int>();
    if (k < 0 || k >= fs.size()) throw DimensionError(std::string(what) + " out of range");
    return k;
  }
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (auto k = fs.find(s)) return *k;
    if (!s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      return factor_index(fs, Json(std::stoi(s)), what);
    }
    throw ValidationError(std::string("unknown factor for ") + what + ": " + s);
  }
  throw ConfigError(std::string("factor reference expected for ") + what);
}

std::string fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

// ---------------------------------------------------------------------------

void cmd_synth(const Json& config, Store& store, CommandResult& out) {
  const int n = get_required<int>(config, "n");
  const auto seed = get_or<std::uint64_t>(config, "seed", 0);
  ProblemShape shape;
  shape.alpha_bound = get_or(config, "alpha_bound", shape.alpha_bound);
  shape.beta_bound = get_or(config, "beta_bound", shape.beta_bound);
  shape.max_interactions = get_or(config, "max_interactions", shape.max_interactions);
  shape.gamma_bound = get_or(config, "gamma_bound", shape.gamma_bound);
  SyntheticProblem p = random_problem(n, seed, shape);
  p.spec.label_noise = get_or(config, "label_noise", 0.0);
  p.spec.completion_correlation = get_or(config, "completion_correlation", 0.0);
  p.spec.validate();

  out.outputs["factors"] = store.save(StoredFactorSet{p.factor_set, std::nullopt});
  Json backend{{"type", "synthetic_backend"}, {"spec", p.spec}, {"factor_set", p.factor_set}};
  out.outputs["backend"] = store.save_json(ArtifactKind::kResult, backend);
  out.display = backend;
  out.text = "synthetic problem with " + std::to_string(n) + " factors\nfactors " +
             out.outputs["factors"] + "\nbackend " + out.outputs["backend"] + "\n";
}

void cmd_elicit(const Json& config, Store& store, const Clock& clock, CommandResult& out) {
  Backend b = open_backend(config, clock);
  ElicitationOptions opts;
  opts.statement_count = get_or(config, "statement_count", opts.statement_count);
  opts.retry_cap = get_or(config, "retry_cap", opts.retry_cap);
  opts.max_factors = get_or(config, "max_factors", opts.max_factors);
  opts.iteration_cap = get_or(config, "iteration_cap", opts.iteration_cap);
  opts.sample_conditions = get_or(config, "sample_conditions", opts.sample_conditions);
  auto conditions = get_or(config, "conditions", std::vector<std::string>{});

  ElicitationResult r = elicit(*b.oracle, get_required<std::string>(config, "scenario"),
                               get_required<std::string>(config, "outcome_positive"),
                               get_required<std::string>(config, "outcome_negative"),
                               std::move(conditions), opts);
  out.outputs["factors"] = store.save(StoredFactorSet{r.verified.factor_set, r.verified.report});
  Json detail{{"type", "elicitation"},
              {"positive", r.positive},
              {"negative", r.negative},
              {"candidates", r.candidates},
              {"report", r.verified.report}};
  out.outputs["elicitation"] = store.save_json(ArtifactKind::kResult, detail);
  save_transcripts(store, b, out);

  out.display = Json{{"factor_set", r.verified.factor_set}, {"report", r.verified.report}};
  std::ostringstream os;
  os << "factor set " << out.outputs["factors"] << " ("
     << (r.verified.report.converged ? "converged" : "not converged") << " after "
     << r.verified.report.iterations << " passes)\n";
  for (const auto& f : r.verified.factor_set.factors()) {
    os << "  " << f.id << "  " << f.name << ": " << f.positive_description << " / "
       << f.negative_description << "\n";
  }
  out.text = os.str();
}

void cmd_probe(const Json& config, Store& store, const Clock& clock, CommandResult& out) {
  const StoredFactorSet fs = store.load_factor_set(get_required<std::string>(config, "factors"));
  Backend b = open_backend(config, clock);
  const auto budget = get_or<std::size_t>(config, "budget", kDefaultProbeBudget);
  const auto seed = get_or<std::uint64_t>(config, "seed", 0);
  ProbePlan plan = plan_configurations(fs.factor_set.size(), budget, seed);
  CollectOptions co;
  co.parallelism = get_or(config, "parallelism", 1);
  co.clock = clock;
  BehavioralDataset ds = collect_dataset(*b.oracle, fs.factor_set, plan, co);
  ds.provenance.backend = b.declared_kind;
  out.outputs["dataset"] = store.save(ds);
  save_transcripts(store, b, out);

  out.display = Json{{"dataset", out.outputs["dataset"]},
                     {"observations", ds.size()},
                     {"plan_mode", to_string(plan.mode)}};
  out.text = "dataset " + out.outputs["dataset"] + ": " + std::to_string(ds.size()) +
             " observations (" + to_string(plan.mode) + ")\n";
}

EmConfig em_config_of(const Json& config) {
  EmConfig cfg;
  if (config.contains("em")) {
    // partial overrides on top of the defaults
    if (!config["em"].is_object()) throw ConfigError("em must be an object");
    Json merged = to_json_value(cfg);
    merged.merge_patch(config["em"]);
    from_json(merged, cfg);
  }
  const auto ablation = get_or<std::string>(config, "ablation", "none");
  if (ablation == "no-em") {
    cfg.update_map = false;
  } else if (ablation == "no-inter") {
    cfg.interactions = false;
  } else if (ablation != "none") {
    throw ConfigError("fit ablation must be none, no-em or no-inter");
  }
  cfg.validate();
  return cfg;
}

void cmd_fit(const Json& config, Store& store, CommandResult& out) {
  const BehavioralDataset ds = store.load_dataset(get_required<std::string>(config, "dataset"));
  const EmConfig cfg = em_config_of(config);
  TrainedModel m = fit(ds, cfg);
  out.outputs["model"] = store.save(m);
  const auto& d = m.diagnostics;
  out.display = Json{{"model", out.outputs["model"]},
                     {"iterations", d.iterations},
                     {"converged", d.converged},
                     {"final_q", d.q_values.empty() ? Json(nullptr) : Json(d.q_values.back())},
                     {"marginal_log_likelihood", d.marginal_log_likelihood},
                     {"rank_deficient", d.rank_deficient}};
  out.text = "model " + out.outputs["model"] + ": " + std::to_string(d.iterations) +
             " iterations, " + (d.converged ? "converged" : "not converged") + "\n";
}

void cmd_infer(const Json& config, Store& store, const Clock& clock, CommandResult& out) {
  const TrainedModel m = store.load_model(get_required<std::string>(config, "model"));
  Backend b = open_backend(config, clock);
  InferOptions opts;
  opts.t = get_or<std::size_t>(config, "t", opts.t);
  opts.temperature = get_or(config, "temperature", opts.temperature);
  opts.seed = get_or<std::uint64_t>(config, "seed", 0);
  opts.batch = get_or<std::uint64_t>(config, "batch", 0);
  const auto ablation = get_or<std::string>(config, "ablation", "none");
  if (ablation == "no-mc") {
    opts.mode = InferenceMode::kNoMc;
  } else if (ablation != "none") {
    throw ConfigError("infer ablation must be none or no-mc");
  }
  InferenceResult r = infer(m, *b.oracle, get_required<std::string>(config, "condition"), opts);
  Json payload = to_json_value(r);
  payload["type"] = "inference";
  payload["mode"] = to_string(opts.mode);
  out.outputs["result"] = store.save_json(ArtifactKind::kResult, payload);
  save_transcripts(store, b, out);

  out.display = payload;
  std::ostringstream os;
  os << "P(" << m.factor_set.outcome_positive() << ") = " << fmt(r.probability);
  if (r.standard_error) os << " +/- " << fmt(*r.standard_error);
  os << "  (T=" << r.samples_used << ", " << r.partition.uncertain.size() << " uncertain)\n";
  out.text = os.str();
}

void cmd_edit(const Json& config, Store& store, const Clock& clock, CommandResult& out) {
  const TrainedModel m = store.load_model(get_required<std::string>(config, "model"));
  EditContext ctx{get_or<std::string>(config, "author", "cli"), clock};
  const auto op = get_required<std::string>(config, "op");
  EditResult r;
  if (op == "exclude") {
    r = exclude_factor(m, factor_index(m.factor_set, config.at("factor"), "factor"), ctx);
  } else if (op == "ratio") {
    RatioConstraint c{factor_index(m.factor_set, config.at("anchor"), "anchor"),
                      factor_index(m.factor_set, config.at("target"), "target"),
                      get_required<double>(config, "rho")};
    Weighting w = config.contains("weighting") ? config["weighting"].get<Weighting>() : Weighting{};
    r = calibrate_ratio(m, c, w, ctx);
  } else if (op == "set") {
    CoefficientRef ref = get_required<CoefficientRef>(config, "coefficient");
    r = manual_set(m, ref, get_required<double>(config, "value"), ctx);
  } else if (op == "revert") {
    const int seq = get_required<int>(config, "sequence");
    if (seq < 0 || seq >= static_cast<int>(m.edits.size())) {
      throw ValidationError("no edit with sequence " + std::to_string(seq));
    }
    r = revert(m, m.edits[static_cast<std::size_t>(seq)], ctx);
  } else {
    throw ConfigError("edit op must be exclude, ratio, set or revert");
  }
  out.outputs["edit"] = store.save(r.record);
  out.outputs["model"] = store.save(r.model);

  out.display = Json{{"model", out.outputs["model"]}, {"record", r.record}};
  std::ostringstream os;
  os << to_string(r.record.kind) << " edit #" << r.record.sequence << " -> model "
     << out.outputs["model"] << "\n";
  if (!r.record.constraint_residuals.empty()) {
    os << "  residuals:";
    for (double v : r.record.constraint_residuals) os << " " << v;
    os << "\n";
  }
  os << "  side effect: " << r.record.side_effect << "\n";
  if (r.record.kind == EditKind::kExclude) {
    if (auto err = effect_reduction_ratio(m.params, r.model.params, r.record.factor)) {
      os << "  ERR: " << fmt(*err, 2) << "\n";
      out.display["err"] = *err;
    }
  }
  out.text = os.str();
}

void cmd_audit(const Json& config, Store& store, CommandResult& out) {
  const BehavioralDataset ds = store.load_dataset(get_required<std::string>(config, "dataset"));
  auto signs = get_or(config, "signs", std::vector<int>{});
  if (!signs.empty() && static_cast<int>(signs.size()) != ds.n()) {
    throw DimensionError("signs must have one entry per factor");
  }
  for (int s : signs) {
    if (s != 1 && s != -1) throw ValidationError("signs must be +1 or -1");
  }
  OrdinalAuditReport r = ordinal_consistency_audit(ds, signs);
  Json payload = to_json_value(r);
  payload["type"] = "ordinal_audit";
  payload["dataset"] = config["dataset"];
  out.outputs["result"] = store.save_json(ArtifactKind::kResult, payload);
  out.display = payload;
  out.text = r.empty() ? std::string("no comparable pairs\n")
                       : "ordinal consistency " + fmt(*r.ratio * 100, 1) + "% over " +
                             std::to_string(r.comparable_pairs) + " pairs\n";
}

void cmd_report(const Json& config, Store& store, CommandResult& out) {
  const std::string hash = get_required<std::string>(config, "model");
  const TrainedModel m = store.load_model(hash);
  Json card = model_card(m);
  card["type"] = "model_card";
  card["model"] = hash;
  out.outputs["result"] = store.save_json(ArtifactKind::kResult, card);
  out.display = card;
  out.text = render_model_card(m, hash);
}

}  // namespace

Json resolve_inputs(const std::string& command, const Json& config, const Store& store,
                    std::map<std::string, std::string>* inputs) {
  if (!config.is_object()) throw ConfigError("command config must be an object");
  Json resolved = config;
  for (const auto& [role, kind] : input_roles()) {
    if (!resolved.contains(role) || !resolved[role].is_string()) continue;
    if (command == "synth") continue;
    const std::string hash = store.resolve(kind, resolved[role].get<std::string>());
    resolved[role] = hash;
    if (inputs) (*inputs)[role] = hash;
  }
  return resolved;
}

CommandResult run_command(const std::string& command, const Json& config, Store& store,
                          const RunContext& ctx) {
  const auto& names = pipeline_commands();
  if (std::find(names.begin(), names.end(), command) == names.end()) {
    throw ConfigError("unknown command: " + command);
  }
  const auto t0 = std::chrono::steady_clock::now();
  CommandResult out;
  out.manifest.command = command;
  out.manifest.argv = ctx.argv;
  out.manifest.started_at = ctx.started_at.empty() ? utc_now() : ctx.started_at;
  out.manifest.config = resolve_inputs(command, config, store, &out.manifest.inputs);
  out.manifest.seed = get_or<std::uint64_t>(out.manifest.config, "seed", 0);
  const Clock clock = fixed_clock(out.manifest.started_at);
  const Json& c = out.manifest.config;

  if (command == "synth") cmd_synth(c, store, out);
  else if (command == "elicit") cmd_elicit(c, store, clock, out);
  else if (command == "probe") cmd_probe(c, store, clock, out);
  else if (command == "fit") cmd_fit(c, store, out);
  else if (command == "infer") cmd_infer(c, store, clock, out);
  else if (command == "edit") cmd_edit(c, store, clock, out);
  else if (command == "audit") cmd_audit(c, store, out);
  else cmd_report(c, store, out);

  out.manifest.outputs = out.outputs;
  out.manifest.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (ctx.write_manifest) {
    out.manifest_hash = store.save_json(ArtifactKind::kManifest, to_json_value(out.manifest));
  }
  return out;
}

ReplayOutcome replay_manifest(Store& store, const std::string& ref) {
  ReplayOutcome r;
  from_json(store.load_json(ArtifactKind::kManifest, ref), r.manifest);
  Json config = r.manifest.config;
  if (config.contains("backend")) {
    OracleBackend backend;
    from_json(config["backend"], backend);
    if (backend.kind == BackendKind::kRemote) {
      if (backend.remote.record_path.empty()) {
        throw ConfigError("remote run was not recorded; it cannot be replayed offline");
      }
      OracleBackend cached;
      cached.kind = BackendKind::kReplay;
      cached.replay_path = backend.remote.record_path;
      config["backend"] = to_json_value(cached);
      config["backend"]["declared_kind"] = to_string(BackendKind::kRemote);
    }
  }

  struct LatestGuard {
    Store& s;
    ~LatestGuard() { s.set_update_latest(true); }
  } guard{store};
  store.set_update_latest(false);
  RunContext ctx{r.manifest.argv, r.manifest.started_at, false};
  CommandResult out = run_command(r.manifest.command, config, store, ctx);
  r.outputs = out.outputs;
  for (const auto& [role, hash] : r.manifest.outputs) {
    auto it = r.outputs.find(role);
    if (it == r.outputs.end() || it->second != hash) r.mismatches.push_back(role);
  }
  for (const auto& [role, hash] : r.outputs) {
    if (!r.manifest.outputs.count(role)) r.mismatches.push_back(role);
  }
  return r;
}

Json model_card(const TrainedModel& m) {
  Json factors = Json::array();
  for (const auto& f : m.factor_set.factors()) factors.push_back(f);
  return Json{{"scenario", m.factor_set.scenario()},
              {"outcome_positive", m.factor_set.outcome_positive()},
              {"outcome_negative", m.factor_set.outcome_negative()},
              {"factors", factors},
              {"alpha", m.params.alpha},
              {"beta", m.params.beta},
              {"gamma", to_json_value(m.params)["gamma"]},
              {"map", m.map},
              {"diagnostics", m.diagnostics},
              {"em_config", m.em_config},
              {"dataset_hash", m.dataset_hash},
              {"ame", ame_report(m.params).ame},
              {"edits", m.edits.size()},
              {"version", params_fingerprint(m.params)}};
}

std::string render_model_card(const TrainedModel& m, const std::string& hash) {
  std::ostringstream os;
  const auto& fs = m.factor_set;
  os << "Model " << hash << "\n";
  os << "Scenario: " << fs.scenario() << "\n";
  os << "Outcome: " << fs.outcome_positive() << " vs " << fs.outcome_negative() << "\n\n";

  const auto ame = ame_report(m.params).ame;
  std::size_t width = 6;
  for (const auto& f : fs.factors()) width = std::max(width, f.name.size());
  os << "Coefficients\n";
  os << "  " << pad("alpha", width + 4) << "  " << fmt(m.params.alpha) << "\n";
  os << "  " << pad("id", 4) << pad("factor", width) << "  " << pad("beta", 10) << "AME\n";
  for (const auto& f : fs.factors()) {
    const auto j = static_cast<std::size_t>(f.id);
    os << "  " << pad(std::to_string(f.id), 4) << pad(f.name, width) << "  "
       << pad(fmt(m.params.beta[j]), 10) << fmt(ame[j]) << "\n";
  }
  os << "\nInteractions (" << m.params.gamma.size() << " nonzero)\n";
  for (const auto& [key, g] : m.params.gamma) {
    os << "  " << fs.at(key.first).name << " x " << fs.at(key.second).name << "  " << fmt(g) << "\n";
  }
  os << "\nVerbal map\n";
  for (auto level : all_levels()) {
    os << "  " << pad(std::string(label(level)), 18) << fmt(m.map(level), 3) << "\n";
  }
  const auto& d = m.diagnostics;
  os << "\nDiagnostics\n";
  os << "  iterations        " << d.iterations << (d.converged ? " (converged)" : " (not converged)")
     << "\n";
  if (!d.q_values.empty()) os << "  final Q           " << fmt(d.q_values.back()) << "\n";
  os << "  marginal log-lik  " << fmt(d.marginal_log_likelihood) << "\n";
  if (d.rank_deficient) os << "  design is rank deficient\n";
  if (d.monotonicity_violation) os << "  Q decreased at iteration " << *d.monotonicity_violation << "\n";
  os << "\nEdits (" << m.edits.size() << ")\n";
  for (const auto& e : m.edits) {
    os << "  #" << e.sequence << " " << to_string(e.kind);
    if (e.kind == EditKind::kExclude) os << " " << fs.at(e.factor).name;
    if (e.ratio) {
      os << " " << fs.at(e.ratio->target).name << " = " << e.ratio->rho << " x "
         << fs.at(e.ratio->anchor).name;
    }
    if (e.kind == EditKind::kRevert) os << " of #" << e.reverts;
    if (e.reverted) os << " (reverted)";
    os << "  " << e.timestamp << " by " << e.author << "\n";
  }
  return os.str();
}

}  // namespace factorlens
