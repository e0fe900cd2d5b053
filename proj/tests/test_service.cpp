#include "doctest.h"

#include <thread>

#include "factorlens/service.hpp"
#include "factorlens/synthetic.hpp"
#include "helpers.hpp"
#include "httplib.h"

using namespace factorlens;
using testing_util::TempDir;

namespace {

TrainedModel seeded_model(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TrainedModel m;
  m.factor_set = testing_util::make_factor_set(n);
  m.params = testing_util::random_params(n, rng, 3, 1.5);
  m.trained_params = m.params;
  return m;
}

struct Fixture {
  TempDir dir{"service"};
  Store store{dir.path};
  TrainedModel model = seeded_model(4, 11);
  std::string hash = store.save(model);
  Service service{store};

  HttpResponse call(const std::string& method, const std::string& path, const Json& body = nullptr) {
    return service.handle(method, path, body.is_null() ? std::string{} : body.dump());
  }
  std::string url(const std::string& tail = "") const { return "/api/v1/models/" + hash + tail; }
};

}  // namespace

TEST_CASE("health, listing and model cards") {
  Fixture f;
  auto health = f.call("GET", "/api/v1/health");
  CHECK(health.status == 200);
  CHECK(health.body["status"] == "ok");

  auto list = f.call("GET", "/api/v1/models");
  REQUIRE(list.status == 200);
  REQUIRE(list.body["models"].size() == 1);
  CHECK(list.body["models"][0]["hash"] == f.hash);
  CHECK(list.body["models"][0]["n"] == 4);

  auto card = f.call("GET", f.url());
  REQUIRE(card.status == 200);
  CHECK(card.body["hash"] == f.hash);
  CHECK(card.body["version"] == params_fingerprint(f.model.params));
  CHECK(card.body["pending"].is_null());
  CHECK(card.body["factors"].size() == 4);

  // short prefixes and latest resolve to the same model
  CHECK(f.call("GET", "/api/v1/models/" + f.hash.substr(0, 12)).body["hash"] == f.hash);
  CHECK(f.call("GET", "/api/v1/models/latest").body["hash"] == f.hash);
}

TEST_CASE("AME endpoint matches the library") {
  Fixture f;
  auto r = f.call("GET", f.url("/ame"));
  REQUIRE(r.status == 200);
  const auto expect = ame_report(f.model.params).ame;
  REQUIRE(r.body["ame"].size() == expect.size());
  for (std::size_t j = 0; j < expect.size(); ++j) CHECK(r.body["ame"][j].get<double>() == expect[j]);
}

TEST_CASE("full configurations predict the sigmoid of the logit") {
  Fixture f;
  auto r = f.call("POST", f.url("/predict"), Json{{"config", {1, 0, 1, 0}}});
  REQUIRE(r.status == 200);
  const auto c = FactorConfiguration::parse("1010");
  const double z = testing_util::reference_logit(f.model.params, c.bits());
  CHECK(r.body["logit"].get<double>() == doctest::Approx(z).epsilon(1e-14));
  CHECK(r.body["probability"].get<double>() == doctest::Approx(testing_util::reference_sigmoid(z)).epsilon(1e-14));
  CHECK(f.call("POST", f.url("/predict"), Json{{"config", {1, 0}}}).status == 422);
  CHECK(f.call("POST", f.url("/predict"), Json::object()).status == 422);
}

TEST_CASE("partial what-ifs are averaged exactly over the unset factors") {
  Fixture f;
  auto r = f.call("POST", f.url("/predict"), Json{{"partial", {{"f0", 1}, {"2", false}, {"f3", nullptr}}}});
  REQUIRE(r.status == 200);
  CHECK(r.body["method"] == "enumeration");
  double expect = 0;
  for (int b1 = 0; b1 < 2; ++b1) {
    for (int b3 = 0; b3 < 2; ++b3) {
      expect += testing_util::reference_sigmoid(testing_util::reference_logit(f.model.params, {1, b1, 0, b3})) / 4;
    }
  }
  CHECK(r.body["probability"].get<double>() == doctest::Approx(expect).epsilon(1e-13));
  CHECK(r.body["samples_used"] == 4);
  CHECK(f.call("POST", f.url("/predict"), Json{{"partial", {{"nobody", 1}}}}).status == 422);
}

TEST_CASE("a live sampler switches partial what-ifs to Monte Carlo") {
  TempDir dir("service_mc");
  Store store(dir.path);
  const auto hash = store.save(seeded_model(4, 12));
  ServiceOptions opts;
  SyntheticOracleSpec spec;
  spec.true_params = DecisionParams(4);
  opts.sampler = std::make_shared<SyntheticOracle>(spec, std::make_shared<AuditLog>());
  Service svc(store, opts);
  auto r = svc.handle("POST", "/api/v1/models/" + hash + "/predict", R"({"partial":{"0":1},"t":30,"seed":2})");
  REQUIRE(r.status == 200);
  CHECK(r.body["method"] == "monte-carlo");
  CHECK(r.body["samples_used"] == 30);
  CHECK(r.body["standard_error"].is_number());
}

TEST_CASE("previewing an exclusion makes what-ifs blind to that factor and commits to the edit log") {
  Fixture f;
  const std::string version = params_fingerprint(f.model.params);
  auto pv = f.call("POST", f.url("/preview"), Json{{"edit", {{"kind", "exclude"}, {"factor", "f1"}}}});
  REQUIRE(pv.status == 200);
  CHECK(pv.body["version"] == version);
  CHECK(pv.body["working_version"] != version);
  CHECK(pv.body["ame_after"][1].get<double>() == 0.0);
  CHECK(pv.body["ame_before"][1].get<double>() != 0.0);
  for (std::uint32_t rest = 0; rest < 8; ++rest) {
    Json off = Json::array(), on = Json::array();
    for (int j = 0, b = 0; j < 4; ++j) {
      const int bit = j == 1 ? 0 : static_cast<int>((rest >> b++) & 1U);
      off.push_back(bit);
      on.push_back(j == 1 ? 1 : bit);
    }
    const auto p0 = f.call("POST", f.url("/predict"), Json{{"config", off}}).body["probability"].get<double>();
    const auto p1 = f.call("POST", f.url("/predict"), Json{{"config", on}}).body["probability"].get<double>();
    CHECK(p0 == p1);
  }

  // the committed model is unchanged until commit
  CHECK(f.call("GET", f.url()).body["version"] == version);
  CHECK(f.call("GET", f.url()).body["pending"].is_object());
  CHECK(f.call("GET", f.url("/ame")).body["version"] == pv.body["working_version"]);

  auto stale = f.call("POST", f.url("/commit"), Json{{"version", "0000"}});
  CHECK(stale.status == 409);
  CHECK(stale.body["error"] == "conflict");

  auto done = f.call("POST", f.url("/commit"), Json{{"version", version}});
  REQUIRE(done.status == 200);
  const std::string next = done.body["model"];
  CHECK(next != f.hash);
  CHECK(done.body["previous"] == f.hash);
  const auto stored = f.store.load_model(next);
  REQUIRE(stored.edits.size() == 1);
  CHECK(stored.edits.back().kind == EditKind::kExclude);
  CHECK(stored.edits.back().factor == 1);
  CHECK(stored.edits.back().author == "workbench");
  CHECK(f.store.load_edit(done.body["edit"]) == stored.edits.back());
  CHECK(done.body["version"] == params_fingerprint(stored.params));

  auto edits = f.call("GET", "/api/v1/models/" + next + "/edits");
  CHECK(edits.body["edits"].size() == 1);

  // the old model is superseded
  CHECK(f.call("POST", f.url("/commit"), Json{{"version", version}}).status == 409);
  CHECK(f.call("GET", f.url()).body["successor"] == next);
}

TEST_CASE("ratio and manual-set previews, discard and revert") {
  Fixture f;
  auto pv = f.call("POST", f.url("/preview"),
                   Json{{"edit", {{"kind", "ratio"}, {"anchor", 0}, {"target", "f2"}, {"rho", 1.5}}}});
  REQUIRE(pv.status == 200);
  CHECK(pv.body["ame_after"][2].get<double>() ==
        doctest::Approx(1.5 * pv.body["ame_after"][0].get<double>()).epsilon(1e-6));

  auto drop = f.call("DELETE", f.url("/preview"));
  CHECK(drop.status == 200);
  CHECK(drop.body["pending"].is_null());
  CHECK(f.call("POST", f.url("/commit"), Json{{"version", params_fingerprint(f.model.params)}}).status == 422);

  auto set = f.call("POST", f.url("/preview"),
                    Json{{"edit", {{"kind", "manual-set"}, {"which", "gamma"}, {"i", "f0"}, {"j", 3}, {"value", 0.5}}}});
  REQUIRE(set.status == 200);
  auto c1 = f.call("POST", f.url("/commit"), Json{{"version", params_fingerprint(f.model.params)}});
  REQUIRE(c1.status == 200);
  const std::string m1 = c1.body["model"];
  CHECK(f.store.load_model(m1).params.interaction(0, 3) == 0.5);

  auto rv = f.service.handle("POST", "/api/v1/models/" + m1 + "/revert",
                             Json{{"sequence", 0}, {"version", c1.body["version"]}}.dump());
  REQUIRE(rv.status == 200);
  const auto reverted = f.store.load_model(rv.body["model"]);
  CHECK(reverted.params == f.model.params);
  CHECK(reverted.edits.size() == 2);
  CHECK(f.service.handle("POST", "/api/v1/models/" + m1 + "/revert",
                         Json{{"sequence", 5}, {"version", c1.body["version"]}}.dump())
            .status == 409);  // m1 was superseded by the revert
}

TEST_CASE("errors map to HTTP statuses") {
  Fixture f;
  CHECK(f.call("GET", "/api/v2/health").status == 404);
  CHECK(f.call("GET", "/api/v1/nothing").status == 404);
  CHECK(f.call("POST", "/api/v1/health").status == 405);
  CHECK(f.call("DELETE", "/api/v1/models").status == 405);
  CHECK(f.call("GET", "/api/v1/models/" + std::string(64, 'f')).status == 404);
  CHECK(f.call("GET", f.url("/bogus")).status == 404);
  CHECK(f.call("PUT", f.url("/predict")).status == 405);
  CHECK(f.call("GET", f.url("/ame/more")).status == 404);
  CHECK(f.service.handle("POST", f.url("/predict"), "{nope").status == 400);
  CHECK(f.call("POST", f.url("/preview"), Json::object()).status == 422);
  CHECK(f.call("POST", f.url("/preview"), Json{{"edit", {{"kind", "melt"}}}}).status == 422);
  CHECK(f.call("POST", f.url("/preview"), Json{{"edit", {{"kind", "exclude"}, {"factor", "zz"}}}}).status == 422);
  CHECK(f.call("POST", f.url("/commit"), Json::object()).status == 422);
}

TEST_CASE("a ratio the solver cannot meet is a 422 with the residual") {
  TempDir dir("service_solver");
  Store store(dir.path);
  TrainedModel flat = seeded_model(3, 13);
  flat.params = DecisionParams(3);
  flat.trained_params = flat.params;
  const auto hash = store.save(flat);
  Service svc(store);
  auto r = svc.handle("POST", "/api/v1/models/" + hash + "/preview",
                      R"({"edit":{"kind":"ratio","anchor":0,"target":1,"rho":2.0}})");
  CHECK(r.status == 422);
}

TEST_CASE("the API is served over HTTP with CORS headers") {
  Fixture f;
  HttpServer server(f.service);
  const int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread t([&] { server.listen(); });

  httplib::Client client("127.0.0.1", port);
  httplib::Result res;
  for (int i = 0; i < 50 && !(res = client.Get("/api/v1/health")); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
  CHECK(Json::parse(res->body)["status"] == "ok");

  auto pred = client.Post(f.url("/predict"), R"({"config":[0,0,0,0]})", "application/json");
  REQUIRE(pred);
  CHECK(pred->status == 200);
  CHECK(Json::parse(pred->body)["probability"].get<double>() ==
        doctest::Approx(testing_util::reference_sigmoid(f.model.params.alpha)).epsilon(1e-14));

  auto missing = client.Get("/api/v1/models/" + std::string(64, 'e'));
  REQUIRE(missing);
  CHECK(missing->status == 404);

  auto pre = client.Options("/api/v1/models");
  REQUIRE(pre);
  CHECK(pre->status == 204);

  server.stop();
  t.join();
}
