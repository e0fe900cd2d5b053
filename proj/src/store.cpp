#include "factorlens/store.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "factorlens/error.hpp"

namespace fs = std::filesystem;

namespace factorlens {
namespace {

constexpr std::size_t kMinPrefix = 8;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw NotFoundError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write to a sibling temp file, then rename over the target.
void write_atomic(const fs::path& p, const std::string& data) {
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError("cannot write " + tmp.string());
    out << data;
    out.flush();
    if (!out) throw StoreError("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) throw StoreError("cannot move " + tmp.string() + " into place: " + ec.message());
}

bool is_hex(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
  });
}

}  // namespace

std::string to_string(ArtifactKind kind) {
  switch (kind) {
    case ArtifactKind::kFactors: return "factors";
    case ArtifactKind::kDataset: return "dataset";
    case ArtifactKind::kModel: return "model";
    case ArtifactKind::kEdit: return "edit";
    case ArtifactKind::kTranscripts: return "transcripts";
    case ArtifactKind::kResult: return "result";
    case ArtifactKind::kManifest: return "manifest";
  }
  return "factors";
}

ArtifactKind artifact_kind_from_string(const std::string& s) {
  for (auto k : {ArtifactKind::kFactors, ArtifactKind::kDataset, ArtifactKind::kModel,
                 ArtifactKind::kEdit, ArtifactKind::kTranscripts, ArtifactKind::kResult,
                 ArtifactKind::kManifest}) {
    if (to_string(k) == s || directory_of(k) == s) return k;
  }
  throw ValidationError("unknown artifact kind: " + s);
}

std::string directory_of(ArtifactKind kind) {
  switch (kind) {
    case ArtifactKind::kFactors: return "factors";
    case ArtifactKind::kDataset: return "datasets";
    case ArtifactKind::kModel: return "models";
    case ArtifactKind::kEdit: return "edits";
    case ArtifactKind::kTranscripts: return "transcripts";
    case ArtifactKind::kResult: return "results";
    case ArtifactKind::kManifest: return "manifests";
  }
  return "factors";
}

std::string content_hash(const Json& payload) { return sha256_hex(canonical_dump(payload)); }

Store::Store(fs::path root, Clock clock) : root_(std::move(root)), clock_(std::move(clock)) {}

std::string Store::save_json(ArtifactKind kind, const Json& payload) {
  const std::string hash = content_hash(payload);
  std::error_code ec;
  fs::create_directories(dir(kind), ec);
  if (ec) throw StoreError("cannot create " + dir(kind).string() + ": " + ec.message());
  const fs::path target = dir(kind) / (hash + ".json");
  if (!fs::exists(target)) {
    Json env{{"schema_version", kSchemaVersion},
             {"kind", to_string(kind)},
             {"content_hash", hash},
             {"created_at", clock_ ? clock_() : utc_now()},
             {"payload", payload}};
    write_atomic(target, env.dump(2) + "\n");
  }
  if (update_latest_) write_atomic(dir(kind) / "latest", hash + "\n");
  return hash;
}

std::string Store::resolve(ArtifactKind kind, const std::string& ref) const {
  if (ref.empty() || ref == "latest") {
    const fs::path p = dir(kind) / "latest";
    if (!fs::exists(p)) throw NotFoundError("no " + to_string(kind) + " artifact saved yet");
    std::string h = read_file(p);
    while (!h.empty() && (h.back() == '\n' || h.back() == '\r' || h.back() == ' ')) h.pop_back();
    return h;
  }
  if (!is_hex(ref)) throw NotFoundError("bad artifact reference: " + ref);
  if (ref.size() == 64) {
    if (!fs::exists(dir(kind) / (ref + ".json"))) throw NotFoundError(to_string(kind) + " " + ref + " not found");
    return ref;
  }
  if (ref.size() < kMinPrefix) throw NotFoundError("hash prefix must have at least 8 characters");
  std::string match;
  for (const auto& info : list(kind)) {
    if (info.hash.starts_with(ref)) {
      if (!match.empty()) throw NotFoundError("ambiguous hash prefix: " + ref);
      match = info.hash;
    }
  }
  if (match.empty()) throw NotFoundError(to_string(kind) + " " + ref + " not found");
  return match;
}

Envelope Store::load_envelope(ArtifactKind kind, const std::string& ref) const {
  const std::string hash = resolve(kind, ref);
  const std::string text = read_file(dir(kind) / (hash + ".json"));
  Json env;
  try {
    env = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw StoreError("artifact " + hash + " is not valid JSON: " + e.what());
  }
  if (!env.is_object() || !env.contains("schema_version") || !env["schema_version"].is_number_integer()) {
    throw StoreError("artifact " + hash + " has no schema version");
  }
  Envelope out;
  out.schema_version = env["schema_version"].get<int>();
  if (out.schema_version != kSchemaVersion) {
    throw MigrationError("artifact " + hash + " uses schema version " +
                         std::to_string(out.schema_version) + "; this build reads version " +
                         std::to_string(kSchemaVersion) + " and no migration is available");
  }
  out.kind = env.value("kind", "");
  if (out.kind != to_string(kind)) throw StoreError("artifact " + hash + " is a " + out.kind + ", not a " + to_string(kind));
  out.content_hash = env.value("content_hash", "");
  out.created_at = env.value("created_at", "");
  if (!env.contains("payload")) throw StoreError("artifact " + hash + " has no payload");
  out.payload = env["payload"];
  const std::string actual = content_hash(out.payload);
  if (actual != out.content_hash || actual != hash) {
    throw StoreError("hash mismatch for " + to_string(kind) + " " + hash + ": payload hashes to " + actual);
  }
  return out;
}

std::vector<ArtifactInfo> Store::list(ArtifactKind kind) const {
  std::vector<ArtifactInfo> out;
  if (!fs::exists(dir(kind))) return out;
  for (const auto& e : fs::directory_iterator(dir(kind))) {
    if (e.path().extension() != ".json") continue;
    const std::string hash = e.path().stem().string();
    if (!is_hex(hash) || hash.size() != 64) continue;
    std::string created;
    try {
      created = Json::parse(read_file(e.path())).value("created_at", "");
    } catch (const std::exception&) {
    }
    out.push_back({hash, created});
  }
  std::sort(out.begin(), out.end(), [](const ArtifactInfo& a, const ArtifactInfo& b) {
    return a.created_at != b.created_at ? a.created_at < b.created_at : a.hash < b.hash;
  });
  return out;
}

bool Store::exists(ArtifactKind kind, const std::string& hash) const {
  return fs::exists(dir(kind) / (hash + ".json"));
}

std::string Store::save(const StoredFactorSet& v) {
  v.factor_set.validate();
  return save_json(ArtifactKind::kFactors,
                   Json{{"factor_set", v.factor_set}, {"report", v.report ? Json(*v.report) : Json(nullptr)}});
}

std::string Store::save(const BehavioralDataset& dataset) {
  dataset.validate();
  return save_json(ArtifactKind::kDataset, to_json_value(dataset));
}

std::string Store::save(const TrainedModel& model) {
  model.validate();
  return save_json(ArtifactKind::kModel, to_json_value(model));
}

std::string Store::save(const EditRecord& record) {
  record.pre.validate();
  record.post.validate();
  return save_json(ArtifactKind::kEdit, to_json_value(record));
}

std::string Store::save(const std::vector<OracleTranscript>& transcripts) {
  return save_json(ArtifactKind::kTranscripts, Json(transcripts));
}

namespace {
template <typename F>
auto gate(const std::string& what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw ValidationError(what + " failed validation: " + e.what());
  }
}
}  // namespace

StoredFactorSet Store::load_factor_set(const std::string& ref) const {
  const Json j = load_json(ArtifactKind::kFactors, ref);
  return gate("factor set", [&] {
    StoredFactorSet out{j.at("factor_set").get<FactorSet>(), std::nullopt};
    out.factor_set.validate();
    if (j.contains("report") && !j["report"].is_null()) out.report = j["report"].get<VerificationReport>();
    return out;
  });
}

BehavioralDataset Store::load_dataset(const std::string& ref) const {
  const Json j = load_json(ArtifactKind::kDataset, ref);
  return gate("dataset", [&] { return j.get<BehavioralDataset>(); });
}

TrainedModel Store::load_model(const std::string& ref) const {
  const Json j = load_json(ArtifactKind::kModel, ref);
  return gate("model", [&] {
    TrainedModel m;
    from_json(j, m);
    return m;
  });
}

EditRecord Store::load_edit(const std::string& ref) const {
  const Json j = load_json(ArtifactKind::kEdit, ref);
  return gate("edit record", [&] { return j.get<EditRecord>(); });
}

std::vector<OracleTranscript> Store::load_transcripts(const std::string& ref) const {
  const Json j = load_json(ArtifactKind::kTranscripts, ref);
  return gate("transcripts", [&] { return j.get<std::vector<OracleTranscript>>(); });
}

}  // namespace factorlens
