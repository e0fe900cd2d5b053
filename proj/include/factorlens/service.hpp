#pragma once
// HTTP+JSON API over the store for model inspection, what-if prediction and
// live edits. Service::handle is the whole API without sockets; HttpServer
// puts it on a port.
//
//   GET    /api/v1/health
//   GET    /api/v1/models
//   GET    /api/v1/models/{ref}
//   GET    /api/v1/models/{ref}/ame
//   POST   /api/v1/models/{ref}/predict   {config} | {partial, t, seed, condition}
//   POST   /api/v1/models/{ref}/preview   {edit}
//   DELETE /api/v1/models/{ref}/preview
//   POST   /api/v1/models/{ref}/commit    {version}
//   POST   /api/v1/models/{ref}/revert    {sequence, version}
//   GET    /api/v1/models/{ref}/edits
//
// Every model response carries "version", the hash of the parameters it was
// computed from. Commits and reverts must quote the committed version; a
// stale one is rejected with 409.

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "factorlens/editing.hpp"
#include "factorlens/oracle.hpp"
#include "factorlens/store.hpp"

namespace factorlens {

struct HttpResponse {
  int status = 200;
  Json body;
};

struct ServiceOptions {
  std::string cors_origin = "*";
  std::string author = "workbench";
  // Live sampler for partial what-if queries; without one, uncertain factors
  // are marginalized exactly under a uniform distribution.
  std::shared_ptr<Oracle> sampler;
  double temperature = kSamplingTemperature;
};

class Service {
 public:
  explicit Service(Store& store, ServiceOptions options = {});

  HttpResponse handle(const std::string& method, const std::string& path, const std::string& body);
  const ServiceOptions& options() const noexcept { return options_; }

 private:
  struct Session {
    TrainedModel model;
    std::optional<EditResult> pending;
    std::optional<std::string> successor;  // set once a commit moved past it
  };

  Session& session(const std::string& ref);
  HttpResponse route(const std::string& method, const std::string& path, const Json& body);
  Json model_card(const std::string& hash, const Session& s) const;
  Json predict(const Session& s, const Json& body);
  Json preview(Session& s, const Json& body);
  Json commit(const std::string& hash, Session& s, const Json& body);
  Json revert_edit(const std::string& hash, Session& s, const Json& body);
  void check_version(const Session& s, const Json& body) const;

  Store& store_;
  ServiceOptions options_;
  std::mutex mu_;
  std::map<std::string, Session> sessions_;
};

class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Returns the bound port (an ephemeral one when port is 0).
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace factorlens
