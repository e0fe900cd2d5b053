// factorlens command-line entry point.
//
// Exit codes: 0 ok, 1 usage, 2 validation / store / numerical, 3 backend,
// 4 solver did not converge.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "factorlens/commands.hpp"
#include "factorlens/service.hpp"

namespace fl = factorlens;
using fl::Json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitBackend = 3;
constexpr int kExitSolver = 4;

struct BackendFlags {
  std::string kind;
  std::string synthetic;
  std::string base_url;
  std::string remote_model;
  std::string auth_env = "FACTORLENS_API_KEY";
  double timeout = 60.0;
  int max_retries = 2;
  std::string record;
  std::string replay_file;

  void attach(CLI::App* cmd) {
    auto* g = cmd->add_option_group("backend");
    g->add_option("--backend", kind, "Oracle backend")
        ->check(CLI::IsMember({"remote", "replay", "synthetic"}));
    g->add_option("--synthetic", synthetic,
                  "Synthetic backend file ({spec, factor_set}) or a stored synth result");
    g->add_option("--base-url", base_url, "Chat-completion endpoint, e.g. http://host:8000/v1");
    g->add_option("--remote-model", remote_model, "Model name sent to the remote endpoint");
    g->add_option("--auth-env", auth_env, "Environment variable holding the bearer token")
        ->capture_default_str();
    g->add_option("--timeout", timeout, "Request timeout in seconds")->capture_default_str();
    g->add_option("--max-retries", max_retries, "Retries per remote request")->capture_default_str();
    g->add_option("--record", record, "Append every remote exchange to this replay file");
    g->add_option("--replay-file", replay_file, "Recorded exchanges for the replay backend");
  }

  bool given() const { return !kind.empty() || !synthetic.empty(); }

  // Writes "backend" (and "backend_factor_set" for synthetic files) into config.
  void apply(Json& config, const fl::Store& store) const {
    std::string k = kind;
    if (k.empty()) k = synthetic.empty() ? "remote" : "synthetic";
    fl::OracleBackend b;
    b.kind = fl::backend_kind_from_string(k);
    if (b.kind == fl::BackendKind::kSynthetic) {
      if (synthetic.empty()) throw fl::ConfigError("--backend synthetic needs --synthetic FILE");
      Json file = read_synthetic(store);
      fl::SyntheticOracleSpec spec;
      fl::from_json(file.at("spec"), spec);
      b.synthetic = spec;
      if (file.contains("factor_set")) config["backend_factor_set"] = file["factor_set"];
    } else if (b.kind == fl::BackendKind::kReplay) {
      b.replay_path = replay_file;
    } else {
      b.remote = fl::RemoteConfig{base_url, remote_model, auth_env, timeout, max_retries, record};
    }
    b.validate();
    config["backend"] = fl::to_json_value(b);
  }

  Json read_synthetic(const fl::Store& store) const {
    if (std::filesystem::exists(synthetic)) {
      std::ifstream in(synthetic);
      try {
        return Json::parse(in);
      } catch (const Json::exception& e) {
        throw fl::ValidationError("cannot parse " + synthetic + ": " + e.what());
      }
    }
    Json stored = store.load_json(fl::ArtifactKind::kResult, synthetic);
    if (stored.value("type", "") != "synthetic_backend") {
      throw fl::ValidationError(synthetic + " is not a synthetic backend");
    }
    return stored;
  }
};

std::string default_store() {
  if (const char* env = std::getenv("FACTORLENS_STORE")) return env;
  return "factorlens-store";
}

std::vector<int> parse_signs(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

// alpha=V | beta:I=V | gamma:I,J=V
Json parse_set(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected TARGET=VALUE");
  const std::string target = s.substr(0, eq);
  Json ref;
  const auto colon = target.find(':');
  ref["which"] = target.substr(0, colon);
  if (colon != std::string::npos) {
    const std::string idx = target.substr(colon + 1);
    const auto comma = idx.find(',');
    ref["i"] = std::stoi(idx.substr(0, comma));
    if (comma != std::string::npos) ref["j"] = std::stoi(idx.substr(comma + 1));
  }
  return Json{{"coefficient", ref}, {"value", std::stod(s.substr(eq + 1))}};
}

void print(const fl::CommandResult& r, const std::string& format) {
  if (format == "json") {
    Json out{{"outputs", r.outputs}, {"result", r.display}};
    if (!r.manifest_hash.empty()) out["manifest"] = r.manifest_hash;
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << r.text;
    if (!r.manifest_hash.empty()) std::cout << "manifest " << r.manifest_hash << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"factorlens: extract, fit, query and edit interpretable decision models"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string store_dir = default_store();
  std::string format = "text";
  app.add_option("--store", store_dir, "Artifact store directory (env FACTORLENS_STORE)")
      ->capture_default_str();
  app.add_option("--format", format, "Output format")
      ->check(CLI::IsMember({"text", "json"}))
      ->capture_default_str();

  std::vector<std::string> args(argv + 1, argv + argc);
  Json config = Json::object();
  BackendFlags backend;

  // synth
  auto* synth = app.add_subcommand("synth", "Draw a random ground-truth problem for the synthetic backend");
  int synth_n = 4;
  std::uint64_t synth_seed = 0;
  double label_noise = 0.0, correlation = 0.0, beta_bound = 2.0, gamma_bound = 1.5, alpha_bound = 1.0;
  int max_interactions = 3;
  std::string synth_out;
  synth->add_option("-n,--factors", synth_n, "Number of factors")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Seed")->capture_default_str();
  synth->add_option("--label-noise", label_noise, "Adjacent-category corruption rate")->capture_default_str();
  synth->add_option("--correlation", correlation, "Pairwise correlation of sampled bits")->capture_default_str();
  synth->add_option("--alpha-bound", alpha_bound)->capture_default_str();
  synth->add_option("--beta-bound", beta_bound)->capture_default_str();
  synth->add_option("--gamma-bound", gamma_bound)->capture_default_str();
  synth->add_option("--max-interactions", max_interactions)->capture_default_str();
  synth->add_option("-o,--out", synth_out, "Also write the backend file here");

  // elicit
  auto* elicit = app.add_subcommand("elicit", "Identify and verify binary decision factors");
  backend.attach(elicit);
  std::string scenario, positive, negative;
  std::vector<std::string> conditions;
  fl::ElicitationOptions eo;
  elicit->add_option("--scenario", scenario, "Decision scenario")->required();
  elicit->add_option("--positive", positive, "Outcome label for O=1")->required();
  elicit->add_option("--negative", negative, "Outcome label for O=0")->required();
  elicit->add_option("--condition", conditions, "Sample condition for the coverage check (repeatable)");
  elicit->add_option("--statements", eo.statement_count, "Statements per outcome")->capture_default_str();
  elicit->add_option("--retry-cap", eo.retry_cap)->capture_default_str();
  elicit->add_option("--max-factors", eo.max_factors)->capture_default_str();
  elicit->add_option("--iteration-cap", eo.iteration_cap)->capture_default_str();
  elicit->add_option("--sample-conditions", eo.sample_conditions)->capture_default_str();

  // probe
  auto* probe = app.add_subcommand("probe", "Collect verbal responses over factor configurations");
  backend.attach(probe);
  std::string factors_ref = "latest";
  std::size_t budget = fl::kDefaultProbeBudget;
  std::uint64_t seed = 0;
  int parallelism = 1;
  probe->add_option("--factors", factors_ref, "Factor set ref")->capture_default_str();
  probe->add_option("--budget", budget, "Probing budget")->capture_default_str();
  probe->add_option("--seed", seed, "Plan seed")->capture_default_str();
  probe->add_option("--parallelism", parallelism, "Concurrent oracle calls")->capture_default_str();

  // fit
  auto* fit = app.add_subcommand("fit", "Fit the decision model and verbal map by EM");
  std::string dataset_ref = "latest";
  fl::EmConfig em;
  double precision_ratio = 1.0;
  std::string fit_ablation = "none";
  fit->add_option("--dataset", dataset_ref, "Dataset ref")->capture_default_str();
  fit->add_option("--precision-ratio", precision_ratio, "tau_theta / tau_phi")->capture_default_str();
  fit->add_option("--lambda1", em.lambda1, "L1 weight on interactions")->capture_default_str();
  fit->add_option("--lambda2", em.lambda2, "L2 weight on interactions")->capture_default_str();
  fit->add_option("--lambda-mr", em.lambda_mr, "Margin-ranking weight")->capture_default_str();
  fit->add_option("--margin", em.margin_eps, "Margin-ranking margin")->capture_default_str();
  fit->add_option("--learning-rate", em.learning_rate, "Initial proximal step")->capture_default_str();
  fit->add_option("--inner-steps", em.inner_steps, "Proximal steps per M-step")->capture_default_str();
  fit->add_option("--tol", em.convergence_tol, "Convergence tolerance on |dQ|")->capture_default_str();
  fit->add_option("--max-iters", em.max_iters, "Maximum EM iterations")->capture_default_str();
  fit->add_option("--seed", seed, "Seed")->capture_default_str();
  fit->add_option("--ablation", fit_ablation)
      ->check(CLI::IsMember({"none", "no-em", "no-inter"}))
      ->capture_default_str();

  // infer
  auto* inf = app.add_subcommand("infer", "Probability of the outcome for a free-text condition");
  backend.attach(inf);
  std::string model_ref = "latest";
  std::string condition;
  std::size_t t = fl::kDefaultSamples;
  double temperature = fl::kSamplingTemperature;
  std::string infer_ablation = "none";
  std::uint64_t batch = 0;
  inf->add_option("--model", model_ref, "Model ref")->capture_default_str();
  inf->add_option("--condition", condition, "Condition text")->required();
  inf->add_option("--t", t, "Monte Carlo samples")->capture_default_str();
  inf->add_option("--temperature", temperature, "Sampling temperature")->capture_default_str();
  inf->add_option("--seed", seed, "Seed for the no-mc coin flips")->capture_default_str();
  inf->add_option("--batch", batch, "Call-index batch for the samples")->capture_default_str();
  inf->add_option("--ablation", infer_ablation)
      ->check(CLI::IsMember({"none", "no-mc"}))
      ->capture_default_str();

  // edit
  auto* edit = app.add_subcommand("edit", "Apply or revert an expert edit");
  std::string exclude, set_expr, author = "cli", weighting_file;
  std::vector<std::string> ratio;
  int revert_seq = -1;
  edit->add_option("--model", model_ref, "Model ref")->capture_default_str();
  auto* o_ex = edit->add_option("--exclude", exclude, "Remove factor K (id or name)");
  auto* o_ratio = edit->add_option("--ratio", ratio, "Make AME_J = RHO * AME_I")->expected(3);
  auto* o_set = edit->add_option("--set", set_expr, "alpha=V | beta:I=V | gamma:I,J=V");
  auto* o_rev = edit->add_option("--revert", revert_seq, "Revert edit SEQ");
  edit->add_option("--weighting", weighting_file, "JSON array of 2^N configuration weights");
  edit->add_option("--author", author)->capture_default_str();
  o_ex->excludes(o_ratio, o_set, o_rev);
  o_ratio->excludes(o_set, o_rev);
  o_set->excludes(o_rev);

  // audit
  auto* audit = app.add_subcommand("audit", "Ordinal-consistency audit of a dataset");
  std::string signs;
  audit->add_option("--dataset", dataset_ref, "Dataset ref")->capture_default_str();
  audit->add_option("--signs", signs, "Comma-separated +1/-1 per factor (default all +1)");

  // report
  auto* report = app.add_subcommand("report", "Model card");
  report->add_option("--model", model_ref, "Model ref")->capture_default_str();

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP API for the workbench");
  backend.attach(serve);
  std::string host = "127.0.0.1", cors = "*";
  int port = 8080;
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--cors-origin", cors)->capture_default_str();
  serve->add_option("--temperature", temperature)->capture_default_str();

  // replay
  auto* replay = app.add_subcommand("replay", "Re-run a manifest and compare output hashes");
  std::string manifest_ref = "latest";
  replay->add_option("manifest", manifest_ref, "Manifest ref")->capture_default_str();

  // list
  auto* list = app.add_subcommand("list", "List stored artifacts");
  std::string list_kind = "models";
  list->add_option("kind", list_kind)
      ->check(CLI::IsMember({"factors", "datasets", "models", "edits", "transcripts", "results",
                             "manifests"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    fl::Store store(store_dir);
    fl::RunContext ctx{args, "", true};
    std::string command;

    if (*synth) {
      command = "synth";
      config = Json{{"n", synth_n},
                    {"seed", synth_seed},
                    {"label_noise", label_noise},
                    {"completion_correlation", correlation},
                    {"alpha_bound", alpha_bound},
                    {"beta_bound", beta_bound},
                    {"gamma_bound", gamma_bound},
                    {"max_interactions", max_interactions}};
    } else if (*elicit) {
      command = "elicit";
      config = Json{{"scenario", scenario},
                    {"outcome_positive", positive},
                    {"outcome_negative", negative},
                    {"conditions", conditions},
                    {"statement_count", eo.statement_count},
                    {"retry_cap", eo.retry_cap},
                    {"max_factors", eo.max_factors},
                    {"iteration_cap", eo.iteration_cap},
                    {"sample_conditions", eo.sample_conditions}};
      backend.apply(config, store);
    } else if (*probe) {
      command = "probe";
      config = Json{{"factors", factors_ref}, {"budget", budget}, {"seed", seed},
                    {"parallelism", parallelism}};
      backend.apply(config, store);
    } else if (*fit) {
      command = "fit";
      if (!(precision_ratio > 0)) throw fl::ConfigError("--precision-ratio must be positive");
      em.sigma_theta_sq = 1.0;
      em.sigma_phi_sq = precision_ratio;
      em.seed = seed;
      config = Json{{"dataset", dataset_ref}, {"em", em}, {"ablation", fit_ablation}, {"seed", seed}};
    } else if (*inf) {
      command = "infer";
      config = Json{{"model", model_ref}, {"condition", condition}, {"t", t},
                    {"temperature", temperature}, {"ablation", infer_ablation}, {"seed", seed},
                    {"batch", batch}};
      backend.apply(config, store);
    } else if (*edit) {
      command = "edit";
      config = Json{{"model", model_ref}, {"author", author}};
      if (!exclude.empty()) {
        config["op"] = "exclude";
        config["factor"] = exclude;
      } else if (!ratio.empty()) {
        config["op"] = "ratio";
        config["anchor"] = ratio[0];
        config["target"] = ratio[1];
        try {
          config["rho"] = std::stod(ratio[2]);
        } catch (const std::exception&) {
          throw CLI::ValidationError("--ratio", "RHO must be a number");
        }
      } else if (!set_expr.empty()) {
        config["op"] = "set";
        config.update(parse_set(set_expr));
      } else if (revert_seq >= 0) {
        config["op"] = "revert";
        config["sequence"] = revert_seq;
      } else {
        throw CLI::ValidationError("edit", "one of --exclude, --ratio, --set, --revert is required");
      }
      if (!weighting_file.empty()) {
        std::ifstream in(weighting_file);
        config["weighting"] = Json::parse(in);
      }
    } else if (*audit) {
      command = "audit";
      config = Json{{"dataset", dataset_ref}};
      if (!signs.empty()) config["signs"] = parse_signs(signs);
    } else if (*report) {
      command = "report";
      config = Json{{"model", model_ref}};
    } else if (*serve) {
      fl::ServiceOptions so;
      so.cors_origin = cors;
      so.temperature = temperature;
      if (backend.given()) {
        Json b;
        backend.apply(b, store);
        fl::OracleBackend ob;
        fl::from_json(b["backend"], ob);
        so.sampler = fl::make_oracle(ob, std::make_shared<fl::AuditLog>());
      }
      fl::Service service(store, so);
      fl::HttpServer server(service);
      const int bound = server.bind(host, port);
      std::cout << "listening on http://" << host << ":" << bound << "/api/v1/" << std::endl;
      server.listen();
      return 0;
    } else if (*replay) {
      fl::ReplayOutcome r = fl::replay_manifest(store, manifest_ref);
      if (format == "json") {
        std::cout << Json{{"command", r.manifest.command},
                          {"recorded", r.manifest.outputs},
                          {"replayed", r.outputs},
                          {"identical", r.identical()},
                          {"mismatches", r.mismatches}}
                         .dump(2)
                  << "\n";
      } else {
        for (const auto& [role, hash] : r.manifest.outputs) {
          const bool ok = r.outputs.count(role) && r.outputs.at(role) == hash;
          std::cout << (ok ? "same  " : "DIFF  ") << role << " " << hash << "\n";
        }
        std::cout << (r.identical() ? "replay identical\n" : "replay differs\n");
      }
      return r.identical() ? 0 : kExitValidation;
    } else if (*list) {
      const auto kind = fl::artifact_kind_from_string(list_kind);
      const auto items = store.list(kind);
      if (format == "json") {
        Json arr = Json::array();
        for (const auto& a : items) arr.push_back(Json{{"hash", a.hash}, {"created_at", a.created_at}});
        std::cout << arr.dump(2) << "\n";
      } else {
        for (const auto& a : items) std::cout << a.hash << "  " << a.created_at << "\n";
      }
      return 0;
    }

    fl::CommandResult r = fl::run_command(command, config, store, ctx);
    if (*synth && !synth_out.empty()) {
      std::ofstream out(synth_out);
      out << r.display.dump(2) << "\n";
      if (!out) throw fl::StoreError("cannot write " + synth_out);
    }
    print(r, format);
    return 0;
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fl::SolverError& e) {
    std::cerr << "solver: " << e.what() << " (best residual " << e.best_residual() << ")\n";
    return kExitSolver;
  } catch (const fl::BackendError& e) {
    std::cerr << "backend: " << e.what() << "\n";
    return kExitBackend;
  } catch (const fl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const Json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}
