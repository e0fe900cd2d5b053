#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "factorlens/error.hpp"
#include "factorlens/oracle.hpp"
#include "factorlens/prompts.hpp"
#include "helpers.hpp"

using namespace factorlens;
using testing_util::make_factor_set;

namespace {

SyntheticOracleSpec spec_with(DecisionParams p, double noise = 0.0, double corr = 0.0,
                              std::uint64_t seed = 7) {
  SyntheticOracleSpec s;
  s.true_params = std::move(p);
  s.label_noise = noise;
  s.completion_correlation = corr;
  s.rng_seed = seed;
  return s;
}

SyntheticOracle synthetic(SyntheticOracleSpec s) {
  return SyntheticOracle(std::move(s), std::make_shared<AuditLog>());
}

DecisionParams params_for_probability(int n, double p) {
  DecisionParams d(n);
  d.alpha = std::log(p / (1 - p));
  return d;
}

// Returns responses from a queue, recording every prompt it saw.
class ScriptedCompleter : public TextCompleter {
 public:
  std::deque<std::string> replies;
  std::vector<std::string> prompts_seen;
  std::string complete(const std::string&, const std::string& prompt, double) override {
    prompts_seen.push_back(prompt);
    if (replies.empty()) throw BackendError("script exhausted");
    auto r = replies.front();
    replies.pop_front();
    return r;
  }
};

}  // namespace

TEST_CASE("synthetic elicitation picks the nearest level") {
  auto fs = make_factor_set(2);
  auto o = synthetic(spec_with(params_for_probability(2, 0.5)));
  CHECK(o.elicit_verbal(fs, FactorConfiguration::parse("10"), 0) == VerbalLevel::kNeutral);
  auto o2 = synthetic(spec_with(params_for_probability(2, 0.05)));
  CHECK(o2.elicit_verbal(fs, FactorConfiguration::parse("01"), 0) == VerbalLevel::kVeryUnlikely);
}

TEST_CASE("nearest_level breaks ties toward the lower level") {
  // binary fractions so the midpoints are exact ties
  const VerbalMap map({0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875});
  CHECK(nearest_level(map, 0.1875) == VerbalLevel::kVeryUnlikely);
  CHECK(nearest_level(map, 0.5625) == VerbalLevel::kNeutral);
  CHECK(nearest_level(map, 0.99) == VerbalLevel::kVeryLikely);
  CHECK(nearest_level(map, 0.001) == VerbalLevel::kVeryUnlikely);
  CHECK(nearest_level(canonical_map(), 0.64) == VerbalLevel::kSomewhatLikely);
}

TEST_CASE("full label noise always moves exactly one step") {
  std::mt19937_64 rng(2);
  auto fs = make_factor_set(5);
  for (int rep = 0; rep < 5; ++rep) {
    auto p = testing_util::random_params(5, rng, 3, 2.0);
    auto clean = synthetic(spec_with(p, 0.0, 0.0, 100 + rep));
    auto noisy = synthetic(spec_with(p, 1.0, 0.0, 100 + rep));
    for (std::uint32_t m = 0; m < 32; ++m) {
      FactorConfiguration c(5, m);
      const int a = ordinal(clean.elicit_verbal(fs, c, m));
      const int b = ordinal(noisy.elicit_verbal(fs, c, m));
      CHECK(std::abs(a - b) == 1);
    }
  }
}

TEST_CASE("noiseless synthetic oracle is deterministic per configuration") {
  std::mt19937_64 rng(3);
  auto fs = make_factor_set(4);
  auto o = synthetic(spec_with(testing_util::random_params(4, rng)));
  for (std::uint32_t m = 0; m < 16; ++m) {
    FactorConfiguration c(4, m);
    CHECK(o.elicit_verbal(fs, c, m) == o.elicit_verbal(fs, c, 1000 + m));
  }
}

TEST_CASE("noisy synthetic oracle is reproducible under concurrent calls") {
  std::mt19937_64 rng(4);
  auto fs = make_factor_set(6);
  auto o = synthetic(spec_with(testing_util::random_params(6, rng), 0.3));
  std::vector<VerbalLevel> serial(64), parallel(64);
  for (std::uint32_t m = 0; m < 64; ++m) serial[m] = o.elicit_verbal(fs, FactorConfiguration(6, m), m);
  std::vector<std::thread> pool;
  for (int t = 0; t < 4; ++t) {
    pool.emplace_back([&, t] {
      for (std::uint32_t m = static_cast<std::uint32_t>(t); m < 64; m += 4) {
        parallel[m] = o.elicit_verbal(fs, FactorConfiguration(6, m), m);
      }
    });
  }
  for (auto& th : pool) th.join();
  CHECK(serial == parallel);
  CHECK(o.audit().size() == 128);
}

TEST_CASE("completion with everything observed is the observation") {
  auto fs = make_factor_set(3);
  auto o = synthetic(spec_with(DecisionParams(3), 0.0, 0.5));
  PartialConfiguration obs{{0, true}, {1, false}, {2, true}};
  for (std::uint64_t i = 0; i < 10; ++i) {
    CHECK(o.sample_completion(fs, obs, "", 1.2, i) == FactorConfiguration::parse("101"));
  }
}

TEST_CASE("completions respect observed bits") {
  auto fs = make_factor_set(5);
  auto o = synthetic(spec_with(DecisionParams(5), 0.0, 0.3));
  PartialConfiguration obs{{1, true}, {3, false}};
  for (std::uint64_t i = 0; i < 200; ++i) {
    auto c = o.sample_completion(fs, obs, "", 1.2, i);
    CHECK(c.bit(1));
    CHECK_FALSE(c.bit(3));
  }
}

TEST_CASE("full completion correlation makes uncertain bits identical") {
  auto fs = make_factor_set(5);
  auto o = synthetic(spec_with(DecisionParams(5), 0.0, 1.0));
  PartialConfiguration obs{{0, true}};
  int ones = 0;
  for (std::uint64_t i = 0; i < 500; ++i) {
    auto c = o.sample_completion(fs, obs, "", 1.2, i);
    CHECK(c.bit(1) == c.bit(2));
    CHECK(c.bit(2) == c.bit(3));
    CHECK(c.bit(3) == c.bit(4));
    ones += c.bit(1);
  }
  CHECK(ones > 200);
  CHECK(ones < 300);
}

TEST_CASE("zero completion correlation passes a chi-square independence test") {
  auto fs = make_factor_set(3);
  auto o = synthetic(spec_with(DecisionParams(3), 0.0, 0.0, 99));
  const int samples = 5000;
  for (auto [a, b] : std::vector<std::pair<int, int>>{{0, 1}, {0, 2}, {1, 2}}) {
    double table[2][2] = {{0, 0}, {0, 0}};
    for (int i = 0; i < samples; ++i) {
      auto c = o.sample_completion(fs, {}, "", 1.2, static_cast<std::uint64_t>(i));
      table[c.bit(a)][c.bit(b)] += 1;
    }
    double chi2 = 0;
    for (int r = 0; r < 2; ++r)
      for (int s = 0; s < 2; ++s) {
        const double row = table[r][0] + table[r][1];
        const double col = table[0][s] + table[1][s];
        const double expected = row * col / samples;
        chi2 += (table[r][s] - expected) * (table[r][s] - expected) / expected;
      }
    CHECK(chi2 < 6.635);  // df = 1, p = 0.01
  }
}

TEST_CASE("empirical pairwise correlation matches completion_correlation") {
  auto fs = make_factor_set(2);
  for (double rho : {0.25, 0.5, 0.8}) {
    auto o = synthetic(spec_with(DecisionParams(2), 0.0, rho, 5));
    double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
    const int samples = 20000;
    for (int i = 0; i < samples; ++i) {
      auto c = o.sample_completion(fs, {}, "", 1.2, static_cast<std::uint64_t>(i));
      const double x = c.bit(0), y = c.bit(1);
      sx += x; sy += y; sxy += x * y; sxx += x * x; syy += y * y;
    }
    const double cov = sxy / samples - (sx / samples) * (sy / samples);
    const double vx = sxx / samples - (sx / samples) * (sx / samples);
    const double vy = syy / samples - (sy / samples) * (sy / samples);
    CHECK(std::abs(cov / std::sqrt(vx * vy) - rho) < 0.05);
  }
}

TEST_CASE("corrupt_labels") {
  auto fs = make_factor_set(3);
  BehavioralDataset ds;
  ds.factor_set = fs;
  std::mt19937_64 rng(8);
  for (int k = 0; k < 1000; ++k) {
    ds.observations.push_back({FactorConfiguration(3, static_cast<std::uint32_t>(k % 8)),
                               level_from_ordinal(1 + static_cast<int>(rng() % 7))});
  }
  CHECK(corrupt_labels(ds, 0.0, 1) == ds);

  auto all = corrupt_labels(ds, 1.0, 1);
  for (std::size_t k = 0; k < ds.size(); ++k) {
    CHECK(all.observations[k].config == ds.observations[k].config);
    CHECK(std::abs(ordinal(all.observations[k].level) - ordinal(ds.observations[k].level)) == 1);
  }

  auto some = corrupt_labels(ds, 0.2, 1);
  int changed = 0;
  for (std::size_t k = 0; k < ds.size(); ++k) changed += some.observations[k].level != ds.observations[k].level;
  CHECK(std::abs(changed / 1000.0 - 0.2) <= 0.04);
  CHECK(corrupt_labels(ds, 0.2, 1) == some);
  CHECK_THROWS_AS(corrupt_labels(ds, 1.5, 1), ConfigError);
}

TEST_CASE("boundary levels always move inward") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    CHECK(adjacent_level(VerbalLevel::kVeryUnlikely, rng) == VerbalLevel::kUnlikely);
    CHECK(adjacent_level(VerbalLevel::kVeryLikely, rng) == VerbalLevel::kLikely);
  }
}

TEST_CASE("synthetic factor determination") {
  auto fs = make_factor_set(3);
  auto s = spec_with(DecisionParams(3));
  s.partition_table["tabled"] = {Determination::kUndetermined, Determination::kTrue, Determination::kFalse};
  auto o = synthetic(s);
  CHECK(o.determine_factor(fs, 0, "f0=1 and f2 = 0") == Determination::kTrue);
  CHECK(o.determine_factor(fs, 1, "f0=1 and f2 = 0") == Determination::kUndetermined);
  CHECK(o.determine_factor(fs, 2, "f0=1 and f2 = 0") == Determination::kFalse);
  CHECK(o.determine_factor(fs, 1, "tabled") == Determination::kTrue);
  CHECK(o.audit().size() == 4);
}

TEST_CASE("spec validation") {
  auto s = spec_with(DecisionParams(2));
  s.label_noise = -0.1;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.label_noise = 0;
  s.completion_correlation = 1.2;
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("backend config needs exactly one kind populated") {
  OracleBackend b;
  b.kind = BackendKind::kSynthetic;
  CHECK_THROWS_AS(b.validate(), ConfigError);
  b.synthetic = spec_with(DecisionParams(2));
  CHECK_NOTHROW(b.validate());
  b.replay_path = "x";
  CHECK_THROWS_AS(b.validate(), ConfigError);
  b = {};
  b.kind = BackendKind::kRemote;
  CHECK_THROWS_AS(b.validate(), ConfigError);
  b.remote.base_url = "http://localhost:1/v1";
  CHECK_NOTHROW(b.validate());
}

// ---------------------------------------------------------------------------
// Text backends

TEST_CASE("prompted oracle reprompts once, then raises a protocol error") {
  auto fs = make_factor_set(2);
  auto script = std::make_shared<ScriptedCompleter>();
  PromptedOracle o(BackendKind::kRemote, script, std::make_shared<AuditLog>());
  script->replies = {"maybe?", "  Likely "};
  CHECK(o.elicit_verbal(fs, FactorConfiguration::parse("11"), 0) == VerbalLevel::kLikely);
  CHECK(script->prompts_seen.size() == 2);
  CHECK(script->prompts_seen[1].find("maybe?") != std::string::npos);
  auto log = o.audit().snapshot();
  REQUIRE(log.size() == 1);
  CHECK(log[0].attempts == 2);
  CHECK(log[0].parsed == "likely");

  script->replies = {"nope", "still nope"};
  try {
    o.elicit_verbal(fs, FactorConfiguration::parse("00"), 1);
    FAIL("expected a protocol error");
  } catch (const ProtocolError& e) {
    CHECK(e.raw_response() == "still nope");
  }
}

TEST_CASE("prompted completions keep observed bits and need every unknown factor") {
  auto fs = make_factor_set(3);
  auto script = std::make_shared<ScriptedCompleter>();
  PromptedOracle o(BackendKind::kRemote, script, std::make_shared<AuditLog>());
  script->replies = {R"(Sure: {"f0": 0, "f2": true})"};
  CHECK(o.sample_completion(fs, {{1, true}}, "c", 1.2, 0) == FactorConfiguration::parse("011"));
  script->replies = {R"({"f0": 1})", R"({"f0": 1, "f2": "0"})"};
  CHECK(o.sample_completion(fs, {{1, false}}, "c", 1.2, 1) == FactorConfiguration::parse("100"));
}

TEST_CASE("recording then replaying gives identical parsed results") {
  testing_util::TempDir dir("replay");
  const std::string path = (dir.path / "cache.jsonl").string();
  auto fs = make_factor_set(2);

  auto script = std::make_shared<ScriptedCompleter>();
  script->replies = {"likely", "unlikely", "likely", "1", "undetermined"};
  auto cache = std::make_shared<ReplayCache>(path);
  PromptedOracle live(BackendKind::kRemote,
                      std::make_shared<RecordingCompleter>(script, cache, fixed_clock("t0")),
                      std::make_shared<AuditLog>());
  std::vector<VerbalLevel> recorded{live.elicit_verbal(fs, FactorConfiguration::parse("11"), 0),
                                    live.elicit_verbal(fs, FactorConfiguration::parse("00"), 1),
                                    live.elicit_verbal(fs, FactorConfiguration::parse("11"), 2)};
  auto d0 = live.determine_factor(fs, 0, "cond");
  auto d1 = live.determine_factor(fs, 1, "cond");

  PromptedOracle replay(BackendKind::kReplay,
                        std::make_shared<ReplayCompleter>(std::make_shared<ReplayCache>(path)),
                        std::make_shared<AuditLog>());
  CHECK(replay.elicit_verbal(fs, FactorConfiguration::parse("11"), 0) == recorded[0]);
  CHECK(replay.elicit_verbal(fs, FactorConfiguration::parse("00"), 1) == recorded[1]);
  CHECK(replay.elicit_verbal(fs, FactorConfiguration::parse("11"), 2) == recorded[2]);
  CHECK(replay.determine_factor(fs, 0, "cond") == d0);
  CHECK(replay.determine_factor(fs, 1, "cond") == d1);
  // third identical request has no record: a miss is an error
  CHECK_THROWS_AS(replay.elicit_verbal(fs, FactorConfiguration::parse("11"), 3), BackendError);
  CHECK_THROWS_AS(replay.determine_factor(fs, 0, "other"), BackendError);
}

TEST_CASE("malformed replay cache is rejected") {
  testing_util::TempDir dir("badcache");
  const auto path = dir.path / "cache.jsonl";
  std::ofstream(path) << "{not json\n";
  CHECK_THROWS_AS(ReplayCache(path.string()), StoreError);
}

namespace {

struct MockEndpoint {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> calls{0};
  std::atomic<int> failures_before_success{0};
  std::string last_auth;
  std::string last_body;
  std::string reply = "very likely";
  int status = 200;
  bool malformed = false;
  std::mutex mu;

  MockEndpoint() {
    server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++calls;
      {
        std::lock_guard lock(mu);
        last_auth = req.get_header_value("Authorization");
        last_body = req.body;
      }
      if (failures_before_success > 0) {
        --failures_before_success;
        res.status = 503;
        return;
      }
      res.status = status;
      if (malformed) {
        res.set_content("{oops", "application/json");
        return;
      }
      nlohmann::json j{{"choices", {{{"message", {{"role", "assistant"}, {"content", reply}}}}}}};
      res.set_content(j.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~MockEndpoint() {
    server.stop();
    thread.join();
  }
  RemoteConfig config() const {
    return RemoteConfig{"http://127.0.0.1:" + std::to_string(port) + "/v1", "test-model",
                        "FACTORLENS_TEST_TOKEN", 5.0, 2, ""};
  }
};

}  // namespace

TEST_CASE("remote completer speaks chat completions") {
  MockEndpoint mock;
  ::setenv("FACTORLENS_TEST_TOKEN", "s3cret", 1);
  RemoteCompleter rc(mock.config());
  CHECK(rc.complete("verbal_probing", "hello", 0.0) == "very likely");
  CHECK(mock.last_auth == "Bearer s3cret");
  auto body = nlohmann::json::parse(mock.last_body);
  CHECK(body["model"] == "test-model");
  CHECK(body["temperature"] == 0.0);
  CHECK(body["messages"][0]["content"] == "hello");

  auto fs = make_factor_set(2);
  PromptedOracle o(BackendKind::kRemote, std::make_shared<RemoteCompleter>(mock.config()),
                   std::make_shared<AuditLog>());
  CHECK(o.elicit_verbal(fs, FactorConfiguration::parse("10"), 0) == VerbalLevel::kVeryLikely);
  auto log = o.audit().snapshot();
  REQUIRE(log.size() == 1);
  CHECK(log[0].prompt.find("s3cret") == std::string::npos);
  CHECK(log[0].response == "very likely");
}

TEST_CASE("remote completer retries transient failures") {
  MockEndpoint mock;
  mock.failures_before_success = 2;
  RemoteCompleter rc(mock.config());
  CHECK(rc.complete("t", "p", 0.0) == "very likely");
  CHECK(mock.calls == 3);

  mock.calls = 0;
  mock.failures_before_success = 3;
  CHECK_THROWS_AS(rc.complete("t", "p", 0.0), BackendError);
  CHECK(mock.calls == 3);
}

TEST_CASE("remote completer error mapping") {
  MockEndpoint mock;
  RemoteCompleter rc(mock.config());
  mock.status = 401;
  CHECK_THROWS_AS(rc.complete("t", "p", 0.0), BackendError);
  mock.status = 200;
  mock.malformed = true;
  CHECK_THROWS_AS(rc.complete("t", "p", 0.0), ProtocolError);

  RemoteConfig dead = mock.config();
  dead.base_url = "http://127.0.0.1:1/v1";
  dead.max_retries = 0;
  dead.timeout_seconds = 1.0;
  CHECK_THROWS_AS(RemoteCompleter(dead).complete("t", "p", 0.0), BackendError);
  dead.base_url = "not a url";
  CHECK_THROWS_AS(RemoteCompleter{dead}, ConfigError);
}

TEST_CASE("make_oracle records remote exchanges when asked") {
  MockEndpoint mock;
  testing_util::TempDir dir("record");
  OracleBackend b;
  b.kind = BackendKind::kRemote;
  b.remote = mock.config();
  b.remote.record_path = (dir.path / "rec.jsonl").string();
  auto fs = make_factor_set(2);
  auto live = make_oracle(b, std::make_shared<AuditLog>(), fixed_clock("t"));
  auto v = live->elicit_verbal(fs, FactorConfiguration::parse("01"), 0);

  OracleBackend r;
  r.kind = BackendKind::kReplay;
  r.replay_path = b.remote.record_path;
  auto replay = make_oracle(r, std::make_shared<AuditLog>());
  CHECK(replay->kind() == BackendKind::kReplay);
  CHECK(replay->elicit_verbal(fs, FactorConfiguration::parse("01"), 0) == v);
  CHECK(mock.calls == 1);
}
