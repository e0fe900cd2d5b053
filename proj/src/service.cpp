#include "factorlens/service.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "httplib.h"

#include "factorlens/commands.hpp"
#include "factorlens/error.hpp"
#include "factorlens/inference.hpp"

namespace factorlens {
namespace {

class HttpError : public std::runtime_error {
 public:
  HttpError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream ss(path.substr(0, path.find('?')));
  std::string part;
  while (std::getline(ss, part, '/')) {
    if (!part.empty()) parts.push_back(part);
  }
  return parts;
}

int factor_ref(const FactorSet& fs, const Json& j) {
  if (j.is_number_integer()) return j.get<int>();
  if (j.is_string()) {
    if (auto id = fs.find(j.get<std::string>())) return *id;
    throw ValidationError("unknown factor: " + j.get<std::string>());
  }
  throw ValidationError("factor must be an id or a name");
}

Json error_body(const std::string& kind, const std::string& message) {
  return Json{{"error", kind}, {"message", message}};
}

}  // namespace

Service::Service(Store& store, ServiceOptions options) : store_(store), options_(std::move(options)) {}

Service::Session& Service::session(const std::string& hash) {
  auto it = sessions_.find(hash);
  if (it == sessions_.end()) it = sessions_.emplace(hash, Session{store_.load_model(hash), std::nullopt, std::nullopt}).first;
  return it->second;
}

HttpResponse Service::handle(const std::string& method, const std::string& path, const std::string& body) {
  std::lock_guard lock(mu_);
  try {
    Json parsed = Json::object();
    if (!body.empty()) {
      try {
        parsed = Json::parse(body);
      } catch (const nlohmann::json::exception& e) {
        return {400, error_body("bad_request", std::string("malformed JSON: ") + e.what())};
      }
    }
    return route(method, path, parsed);
  } catch (const HttpError& e) {
    return {e.status(), error_body(e.status() == 409 ? "conflict" : "error", e.what())};
  } catch (const NotFoundError& e) {
    return {404, error_body("not_found", e.what())};
  } catch (const SolverError& e) {
    Json b = error_body("solver", e.what());
    b["best_residual"] = e.best_residual();
    return {422, b};
  } catch (const ValidationError& e) {
    return {422, error_body("invalid", e.what())};
  } catch (const BackendError& e) {
    return {502, error_body("backend", e.what())};
  } catch (const nlohmann::json::exception& e) {
    return {422, error_body("invalid", e.what())};
  } catch (const std::exception& e) {
    return {500, error_body("internal", e.what())};
  }
}

HttpResponse Service::route(const std::string& method, const std::string& path, const Json& body) {
  const auto parts = split_path(path);
  if (parts.size() < 3 || parts[0] != "api" || parts[1] != "v1") throw HttpError(404, "no such endpoint: " + path);
  if (parts.size() == 3 && parts[2] == "health") {
    if (method != "GET") throw HttpError(405, "method not allowed");
    return {200, Json{{"status", "ok"}}};
  }
  if (parts[2] != "models") throw HttpError(404, "no such endpoint: " + path);
  if (parts.size() == 3) {
    if (method != "GET") throw HttpError(405, "method not allowed");
    Json list = Json::array();
    for (const auto& info : store_.list(ArtifactKind::kModel)) {
      const TrainedModel m = store_.load_model(info.hash);
      list.push_back(Json{{"hash", info.hash},
                          {"created_at", info.created_at},
                          {"n", m.n()},
                          {"scenario", m.factor_set.scenario()},
                          {"edits", m.edits.size()},
                          {"version", params_fingerprint(m.params)}});
    }
    return {200, Json{{"models", list}}};
  }

  const std::string hash = store_.resolve(ArtifactKind::kModel, parts[3]);
  Session& s = session(hash);
  const std::string action = parts.size() > 4 ? parts[4] : "";
  if (parts.size() > 5) throw HttpError(404, "no such endpoint: " + path);

  if (action.empty() && method == "GET") return {200, model_card(hash, s)};
  if (action == "ame" && method == "GET") {
    const DecisionParams& p = s.pending ? s.pending->model.params : s.model.params;
    Json b = to_json_value(ame_report(p));
    b["version"] = params_fingerprint(p);
    return {200, b};
  }
  if (action == "predict" && method == "POST") return {200, predict(s, body)};
  if (action == "preview" && method == "POST") return {200, preview(s, body)};
  if (action == "preview" && method == "DELETE") {
    s.pending.reset();
    return {200, Json{{"version", params_fingerprint(s.model.params)}, {"pending", nullptr}}};
  }
  if (action == "commit" && method == "POST") return {200, commit(hash, s, body)};
  if (action == "revert" && method == "POST") return {200, revert_edit(hash, s, body)};
  if (action == "edits" && method == "GET") {
    return {200, Json{{"edits", s.model.edits}, {"version", params_fingerprint(s.model.params)}}};
  }
  throw HttpError(action.empty() || action == "ame" || action == "predict" || action == "preview" ||
                          action == "commit" || action == "revert" || action == "edits"
                      ? 405
                      : 404,
                  "no such endpoint: " + method + " " + path);
}

Json Service::model_card(const std::string& hash, const Session& s) const {
  Json card = factorlens::model_card(s.model);
  card["hash"] = hash;
  card["successor"] = s.successor ? Json(*s.successor) : Json(nullptr);
  if (s.pending) {
    card["pending"] = Json{{"record", s.pending->record},
                           {"working_version", params_fingerprint(s.pending->model.params)}};
  } else {
    card["pending"] = nullptr;
  }
  return card;
}

Json Service::predict(const Session& s, const Json& body) {
  const TrainedModel& committed = s.model;
  TrainedModel working = s.pending ? s.pending->model : committed;
  const int n = working.n();
  Json out{{"version", params_fingerprint(working.params)}};
  if (body.contains("config")) {
    const auto config = body["config"].get<FactorConfiguration>();
    if (config.size() != n) throw DimensionError("config must have " + std::to_string(n) + " bits");
    out["probability"] = factorlens::predict(working.params, config);
    out["logit"] = logit_of(working.params, config);
    return out;
  }
  if (!body.contains("partial")) throw ValidationError("predict needs \"config\" or \"partial\"");
  ConditionPartition part;
  part.condition_text = body.value("condition", "");
  for (const auto& [key, value] : body["partial"].items()) {
    const int id = factor_ref(working.factor_set, std::all_of(key.begin(), key.end(), ::isdigit) && !key.empty()
                                                      ? Json(std::stoi(key))
                                                      : Json(key));
    if (id < 0 || id >= n) throw DimensionError("factor id out of range");
    if (value.is_null()) continue;
    part.observed[id] = value.is_boolean() ? value.get<bool>() : value.get<int>() != 0;
  }
  for (int j = 0; j < n; ++j) {
    if (!part.observed.contains(j)) part.uncertain.insert(j);
  }
  const auto t = body.value("t", static_cast<std::size_t>(kDefaultSamples));
  const auto seed = body.value("seed", std::uint64_t{0});
  if (options_.sampler && !part.uncertain.empty()) {
    auto samples = sample_joint_completions(*options_.sampler, working.factor_set, part, t,
                                            options_.temperature, seed);
    out.update(to_json_value(marginalize(working, samples, part)));
    out["method"] = "monte-carlo";
    return out;
  }
  // Exact uniform marginal over the uncertain factors.
  std::vector<int> free(part.uncertain.begin(), part.uncertain.end());
  std::uint32_t base = 0;
  for (const auto& [id, bit] : part.observed) {
    if (bit) base |= 1u << id;
  }
  double total = 0.0;
  const std::uint64_t count = std::uint64_t{1} << free.size();
  for (std::uint64_t c = 0; c < count; ++c) {
    std::uint32_t mask = base;
    for (std::size_t q = 0; q < free.size(); ++q) {
      if ((c >> q) & 1u) mask |= 1u << free[q];
    }
    total += factorlens::predict(working.params, FactorConfiguration(n, mask));
  }
  out["probability"] = total / static_cast<double>(count);
  out["standard_error"] = nullptr;
  out["samples_used"] = count;
  out["partition"] = part;
  out["method"] = "enumeration";
  return out;
}

Json Service::preview(Session& s, const Json& body) {
  if (!body.contains("edit")) throw ValidationError("preview needs an \"edit\" object");
  const Json& e = body["edit"];
  const std::string kind = e.value("kind", "");
  const EditContext ctx{body.value("author", options_.author), system_clock()};
  const FactorSet& fs = s.model.factor_set;
  EditResult r;
  if (kind == "exclude") {
    r = exclude_factor(s.model, factor_ref(fs, e.at("factor")), ctx);
  } else if (kind == "ratio") {
    RatioConstraint c{factor_ref(fs, e.at("anchor")), factor_ref(fs, e.at("target")), e.at("rho").get<double>()};
    Weighting w;
    if (e.contains("weighting")) w = e["weighting"].get<Weighting>();
    r = calibrate_ratio(s.model, c, w, ctx);
  } else if (kind == "manual-set") {
    CoefficientRef ref{e.at("which").get<std::string>(), 0, 0};
    if (e.contains("i")) ref.i = factor_ref(fs, e["i"]);
    if (e.contains("j")) ref.j = factor_ref(fs, e["j"]);
    r = manual_set(s.model, ref, e.at("value").get<double>(), ctx);
  } else {
    throw ValidationError("edit kind must be exclude, ratio or manual-set");
  }
  s.pending = r;
  return Json{{"record", r.record},
              {"ame_before", ame_report(s.model.params).ame},
              {"ame_after", ame_report(r.model.params).ame},
              {"version", params_fingerprint(s.model.params)},
              {"working_version", params_fingerprint(r.model.params)}};
}

void Service::check_version(const Session& s, const Json& body) const {
  if (!body.contains("version") || !body["version"].is_string()) {
    throw ValidationError("request must quote the committed \"version\"");
  }
  if (s.successor) throw HttpError(409, "model was superseded by " + *s.successor);
  if (body["version"].get<std::string>() != params_fingerprint(s.model.params)) {
    throw HttpError(409, "stale version; reload the model");
  }
}

Json Service::commit(const std::string& hash, Session& s, const Json& body) {
  check_version(s, body);
  if (!s.pending) throw ValidationError("nothing to commit; preview an edit first");
  const EditResult r = *s.pending;
  const std::string edit_hash = store_.save(r.record);
  const std::string next = store_.save(r.model);
  s.pending.reset();
  if (next != hash) {
    s.successor = next;
    sessions_.insert_or_assign(next, Session{r.model, std::nullopt, std::nullopt});
  }
  return Json{{"model", next},
              {"previous", hash},
              {"edit", edit_hash},
              {"record", r.record},
              {"version", params_fingerprint(r.model.params)}};
}

Json Service::revert_edit(const std::string& hash, Session& s, const Json& body) {
  check_version(s, body);
  const int seq = body.at("sequence").get<int>();
  if (seq < 0 || seq >= static_cast<int>(s.model.edits.size())) throw ValidationError("no edit with that sequence number");
  const EditResult r = revert(s.model, s.model.edits[static_cast<std::size_t>(seq)],
                              EditContext{body.value("author", options_.author), system_clock()});
  const std::string edit_hash = store_.save(r.record);
  const std::string next = store_.save(r.model);
  s.pending.reset();
  if (next != hash) {
    s.successor = next;
    sessions_.insert_or_assign(next, Session{r.model, std::nullopt, std::nullopt});
  }
  return Json{{"model", next},
              {"previous", hash},
              {"edit", edit_hash},
              {"record", r.record},
              {"version", params_fingerprint(r.model.params)}};
}

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;
  explicit Impl(Service& s) : service(s) {}
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {
  auto& svc = impl_->service;
  const std::string origin = svc.options().cors_origin;
  auto cors = [origin](httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type, Authorization");
  };
  auto dispatch = [&svc, cors](const httplib::Request& req, httplib::Response& res) {
    const HttpResponse r = svc.handle(req.method, req.path, req.body);
    cors(res);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  const std::string pattern = R"(/api/v1(/.*)?)";
  impl_->server.Get(pattern, dispatch);
  impl_->server.Post(pattern, dispatch);
  impl_->server.Delete(pattern, dispatch);
  impl_->server.Options(pattern, [cors](const httplib::Request&, httplib::Response& res) {
    cors(res);
    res.status = 204;
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p < 0) throw BackendError("cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port)) throw BackendError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace factorlens
