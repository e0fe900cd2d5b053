#include "doctest.h"

#include <atomic>
#include <thread>

#include "factorlens/commands.hpp"
#include "factorlens/editing.hpp"
#include "factorlens/error.hpp"
#include "helpers.hpp"
#include "httplib.h"

using namespace factorlens;
using testing_util::TempDir;

namespace {

// Backend config built from the stored synth result.
Json synthetic_backend(Store& store, const std::string& backend_ref) {
  const Json b = store.load_json(ArtifactKind::kResult, backend_ref);
  return Json{{"backend", {{"kind", "synthetic"}, {"synthetic", b.at("spec")}}},
              {"backend_factor_set", b.at("factor_set")}};
}

Json with(Json base, const Json& extra) {
  for (auto it = extra.begin(); it != extra.end(); ++it) base[it.key()] = it.value();
  return base;
}

struct Pipeline {
  std::map<std::string, CommandResult> runs;
  Json backend;
};

Pipeline run_pipeline(Store& store, std::uint64_t seed) {
  Pipeline p;
  RunContext ctx{{"test"}, "2026-05-05T00:00:00Z", true};
  p.runs["synth"] = run_command("synth", Json{{"n", 4}, {"seed", seed}, {"completion_correlation", 0.3}}, store, ctx);
  p.backend = synthetic_backend(store, p.runs["synth"].outputs.at("backend"));
  p.runs["probe"] = run_command("probe", with(p.backend, {{"factors", "latest"}, {"budget", 64}, {"seed", 3}}),
                                store, ctx);
  p.runs["fit"] = run_command("fit", Json{{"dataset", "latest"}, {"em", {{"max_iters", 5}}}}, store, ctx);
  p.runs["infer"] = run_command(
      "infer", with(p.backend, {{"model", "latest"}, {"condition", "f0=1"}, {"t", 20}, {"seed", 4}}), store, ctx);
  p.runs["edit"] = run_command("edit", Json{{"model", "latest"}, {"op", "exclude"}, {"factor", 0}}, store, ctx);
  p.runs["audit"] = run_command("audit", Json{{"dataset", "latest"}}, store, ctx);
  p.runs["report"] = run_command("report", Json{{"model", "latest"}}, store, ctx);
  return p;
}

struct ChatMock {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> calls{0};

  ChatMock() {
    server.Post("/v1/chat/completions", [this](const httplib::Request&, httplib::Response& res) {
      ++calls;
      nlohmann::json j{{"choices", {{{"message", {{"role", "assistant"}, {"content", "likely"}}}}}}};
      res.set_content(j.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  void stop() {
    if (thread.joinable()) {
      server.stop();
      thread.join();
    }
  }
  ~ChatMock() { stop(); }
};

}  // namespace

TEST_CASE("the full pipeline runs end to end and leaves a manifest per step") {
  TempDir dir("cmd_pipe");
  Store store(dir.path);
  auto p = run_pipeline(store, 1);

  for (const auto& [name, r] : p.runs) {
    CAPTURE(name);
    CHECK(r.manifest_hash.size() == 64);
    CHECK(r.manifest.command == name);
    CHECK(r.manifest.started_at == "2026-05-05T00:00:00Z");
    CHECK(r.manifest.outputs == r.outputs);
    CHECK_FALSE(r.text.empty());
  }
  CHECK(store.list(ArtifactKind::kManifest).size() == p.runs.size());

  const auto& probe = p.runs["probe"];
  CHECK(probe.manifest.inputs.at("factors") == p.runs["synth"].outputs.at("factors"));
  const auto ds = store.load_dataset(probe.outputs.at("dataset"));
  CHECK(ds.size() == 16);  // budget covers all 2^4 configurations
  CHECK(ds.provenance.backend == "synthetic");
  CHECK(probe.outputs.count("transcripts") == 1);

  const auto model = store.load_model(p.runs["fit"].outputs.at("model"));
  CHECK(model.n() == 4);
  CHECK(model.diagnostics.iterations <= 5);

  const Json inference = store.load_json(ArtifactKind::kResult, p.runs["infer"].outputs.at("result"));
  CHECK(inference["type"] == "inference");
  CHECK(inference["probability"].get<double>() >= 0.0);
  CHECK(inference["probability"].get<double>() <= 1.0);
  CHECK(inference["samples_used"] == 20);

  const auto edited = store.load_model(p.runs["edit"].outputs.at("model"));
  REQUIRE(edited.edits.size() == 1);
  CHECK(edited.edits[0].kind == EditKind::kExclude);
  CHECK(store.resolve(ArtifactKind::kModel, "latest") == p.runs["edit"].outputs.at("model"));
  CHECK(p.runs["edit"].display.contains("err"));

  const Json audit = store.load_json(ArtifactKind::kResult, p.runs["audit"].outputs.at("result"));
  CHECK(audit["type"] == "ordinal_audit");
  const Json card = store.load_json(ArtifactKind::kResult, p.runs["report"].outputs.at("result"));
  CHECK(card["type"] == "model_card");
  CHECK(card["edits"] == 1);
  CHECK(card["model"] == p.runs["edit"].outputs.at("model"));
}

TEST_CASE("replaying every manifest reproduces identical artifacts without moving latest") {
  TempDir dir("cmd_replay");
  Store store(dir.path);
  auto p = run_pipeline(store, 2);
  const auto latest_model = store.resolve(ArtifactKind::kModel, "latest");
  const auto latest_result = store.resolve(ArtifactKind::kResult, "latest");
  const auto manifests = store.list(ArtifactKind::kManifest).size();

  for (const auto& [name, r] : p.runs) {
    CAPTURE(name);
    auto out = replay_manifest(store, r.manifest_hash);
    CHECK(out.identical());
    CHECK(out.outputs == r.outputs);
  }
  CHECK(store.resolve(ArtifactKind::kModel, "latest") == latest_model);
  CHECK(store.resolve(ArtifactKind::kResult, "latest") == latest_result);
  CHECK(store.list(ArtifactKind::kManifest).size() == manifests);

  // saving after a replay moves latest again
  run_command("synth", Json{{"n", 3}, {"seed", 9}}, store);
  CHECK(store.resolve(ArtifactKind::kResult, "latest") != latest_result);
}

TEST_CASE("a replay flags outputs that no longer match") {
  TempDir dir("cmd_mismatch");
  Store store(dir.path);
  auto r = run_command("synth", Json{{"n", 3}, {"seed", 5}}, store);
  Json m = store.load_json(ArtifactKind::kManifest, r.manifest_hash);
  m["outputs"]["factors"] = std::string(64, 'a');
  const auto forged = store.save_json(ArtifactKind::kManifest, m);
  auto out = replay_manifest(store, forged);
  CHECK_FALSE(out.identical());
  CHECK(out.mismatches == std::vector<std::string>{"factors"});
}

TEST_CASE("a recorded remote run replays offline and an unrecorded one is refused") {
  TempDir dir("cmd_remote");
  Store store(dir.path);
  ChatMock mock;
  auto synth = run_command("synth", Json{{"n", 3}, {"seed", 6}}, store);

  Json remote{{"kind", "remote"},
              {"remote",
               {{"base_url", "http://127.0.0.1:" + std::to_string(mock.port) + "/v1"},
                {"model", "m"},
                {"auth_token_env", ""},
                {"timeout_seconds", 5.0},
                {"max_retries", 0},
                {"record_path", (dir.path / "exchanges.jsonl").string()}}}};
  auto probe = run_command("probe", Json{{"factors", "latest"}, {"backend", remote}, {"budget", 8}}, store);
  CHECK(mock.calls == 8);
  const auto ds = store.load_dataset(probe.outputs.at("dataset"));
  CHECK(ds.provenance.backend == "remote");
  for (const auto& o : ds.observations) CHECK(o.level == VerbalLevel::kLikely);

  mock.stop();
  auto out = replay_manifest(store, probe.manifest_hash);
  CHECK(out.identical());
  CHECK(mock.calls == 8);

  Json unrecorded = remote;
  unrecorded["remote"]["record_path"] = "";
  Json m = store.load_json(ArtifactKind::kManifest, probe.manifest_hash);
  m["config"]["backend"] = unrecorded;
  const auto ref = store.save_json(ArtifactKind::kManifest, m);
  CHECK_THROWS_AS(replay_manifest(store, ref), ConfigError);
}

TEST_CASE("bad configs are rejected with the right error kinds") {
  TempDir dir("cmd_bad");
  Store store(dir.path);
  CHECK_THROWS_AS(run_command("dance", Json::object(), store), ConfigError);
  CHECK_THROWS_AS(run_command("synth", Json::object(), store), ConfigError);
  CHECK_THROWS_AS(run_command("synth", Json::array(), store), ConfigError);
  CHECK_THROWS_AS(run_command("fit", Json{{"dataset", "latest"}}, store), NotFoundError);

  auto synth = run_command("synth", Json{{"n", 3}, {"seed", 7}}, store);
  const Json backend = synthetic_backend(store, synth.outputs.at("backend"));
  CHECK_THROWS_AS(run_command("probe", Json{{"factors", "latest"}}, store), ConfigError);
  run_command("probe", with(backend, {{"factors", "latest"}, {"budget", 8}}), store);
  CHECK_THROWS_AS(run_command("fit", Json{{"dataset", "latest"}, {"ablation", "nope"}}, store), ConfigError);
  CHECK_THROWS_AS(run_command("audit", Json{{"dataset", "latest"}, {"signs", {1, 1}}}, store), DimensionError);
  CHECK_THROWS_AS(run_command("audit", Json{{"dataset", "latest"}, {"signs", {1, 0, 1}}}, store), ValidationError);

  run_command("fit", Json{{"dataset", "latest"}, {"em", {{"max_iters", 2}}}}, store);
  CHECK_THROWS_AS(run_command("edit", Json{{"model", "latest"}, {"op", "melt"}}, store), ConfigError);
  CHECK_THROWS_AS(run_command("edit", Json{{"model", "latest"}, {"op", "exclude"}, {"factor", 9}}, store),
                  DimensionError);
  CHECK_THROWS_AS(run_command("edit", Json{{"model", "latest"}, {"op", "exclude"}, {"factor", "nobody"}}, store),
                  ValidationError);
  CHECK_THROWS_AS(run_command("edit", Json{{"model", "latest"}, {"op", "revert"}, {"sequence", 0}}, store),
                  ValidationError);
  CHECK_THROWS_AS(run_command("infer", with(backend, {{"model", "latest"}, {"condition", "f0=1"}, {"ablation", "x"}}),
                              store),
                  ConfigError);
}

TEST_CASE("ablation switches reach the fitter and the inference engine") {
  TempDir dir("cmd_ablate");
  Store store(dir.path);
  auto synth = run_command("synth", Json{{"n", 4}, {"seed", 8}, {"completion_correlation", 0.5}}, store);
  const Json backend = synthetic_backend(store, synth.outputs.at("backend"));
  run_command("probe", with(backend, {{"factors", "latest"}, {"budget", 64}}), store);

  auto fixed = run_command("fit", Json{{"dataset", "latest"}, {"ablation", "no-em"}, {"em", {{"max_iters", 3}}}}, store);
  const auto m_fixed = store.load_model(fixed.outputs.at("model"));
  CHECK(m_fixed.map == canonical_map());
  CHECK_FALSE(m_fixed.em_config.update_map);

  auto no_inter =
      run_command("fit", Json{{"dataset", "latest"}, {"ablation", "no-inter"}, {"em", {{"max_iters", 3}}}}, store);
  const auto m_main = store.load_model(no_inter.outputs.at("model"));
  CHECK(m_main.params.gamma.empty());

  auto base = run_command("infer", with(backend, {{"model", "latest"}, {"condition", "f0=1"}, {"t", 5}, {"ablation", "no-mc"}}),
                          store);
  auto more = run_command("infer", with(backend, {{"model", "latest"}, {"condition", "f0=1"}, {"t", 50}, {"ablation", "no-mc"}}),
                          store);
  CHECK(base.display["probability"] == more.display["probability"]);
  CHECK(base.display["mode"] == "no-mc");
}

TEST_CASE("edits by name, ratio and manual set through the command layer") {
  TempDir dir("cmd_edits");
  Store store(dir.path);
  auto synth = run_command("synth", Json{{"n", 3}, {"seed", 10}}, store);
  const Json backend = synthetic_backend(store, synth.outputs.at("backend"));
  run_command("probe", with(backend, {{"factors", "latest"}, {"budget", 64}}), store);
  run_command("fit", Json{{"dataset", "latest"}, {"em", {{"max_iters", 5}}}}, store);

  auto ratio = run_command("edit", Json{{"model", "latest"}, {"op", "ratio"}, {"anchor", "f0"}, {"target", "1"},
                                        {"rho", 2.0}, {"author", "reviewer"}},
                           store);
  const auto m1 = store.load_model(ratio.outputs.at("model"));
  const auto ame = ame_report(m1.params).ame;
  CHECK(ame[1] == doctest::Approx(2.0 * ame[0]).epsilon(1e-6));
  CHECK(m1.edits.back().author == "reviewer");

  auto set = run_command("edit", Json{{"model", "latest"}, {"op", "set"},
                                      {"coefficient", {{"which", "beta"}, {"i", 2}}}, {"value", 0.75}},
                         store);
  const auto m2 = store.load_model(set.outputs.at("model"));
  CHECK(m2.params.beta[2] == 0.75);
  CHECK(m2.edits.size() == 2);

  auto back = run_command("edit", Json{{"model", "latest"}, {"op", "revert"}, {"sequence", 1}}, store);
  const auto m3 = store.load_model(back.outputs.at("model"));
  CHECK(m3.params == m1.params);
}
