#pragma once
// Content-addressed artifact store. Each artifact is a JSON envelope
//   {schema_version, kind, content_hash, created_at, payload}
// written to <root>/<kind dir>/<hash>.json, with a `latest` pointer per kind.
// The hash covers the canonical payload only, so identical payloads share a
// file regardless of when they were saved.

#include <filesystem>
#include <string>
#include <vector>

#include "factorlens/dataset.hpp"
#include "factorlens/elicitation.hpp"
#include "factorlens/error.hpp"
#include "factorlens/model.hpp"
#include "factorlens/oracle.hpp"
#include "factorlens/serialization.hpp"
#include "factorlens/util.hpp"

namespace factorlens {

inline constexpr int kSchemaVersion = 1;

enum class ArtifactKind { kFactors, kDataset, kModel, kEdit, kTranscripts, kResult, kManifest };
std::string to_string(ArtifactKind kind);
ArtifactKind artifact_kind_from_string(const std::string& s);
std::string directory_of(ArtifactKind kind);

// Envelope written with a schema version this build cannot read.
class MigrationError : public StoreError {
 public:
  using StoreError::StoreError;
};

struct Envelope {
  int schema_version = kSchemaVersion;
  std::string kind;
  std::string content_hash;
  std::string created_at;
  Json payload;
};

struct ArtifactInfo {
  std::string hash;
  std::string created_at;
};

struct StoredFactorSet {
  FactorSet factor_set;
  std::optional<VerificationReport> report;
};

class Store {
 public:
  explicit Store(std::filesystem::path root, Clock clock = system_clock());

  const std::filesystem::path& root() const noexcept { return root_; }
  // When false, saves leave the `latest` pointers alone (used by replays).
  void set_update_latest(bool on) noexcept { update_latest_ = on; }

  std::string save_json(ArtifactKind kind, const Json& payload);
  // ref is "latest", a full hash, or a unique hash prefix of 8+ characters.
  Envelope load_envelope(ArtifactKind kind, const std::string& ref) const;
  Json load_json(ArtifactKind kind, const std::string& ref) const { return load_envelope(kind, ref).payload; }
  std::string resolve(ArtifactKind kind, const std::string& ref) const;
  std::vector<ArtifactInfo> list(ArtifactKind kind) const;
  bool exists(ArtifactKind kind, const std::string& hash) const;

  // Typed helpers validate before writing and after reading.
  std::string save(const StoredFactorSet& fs);
  std::string save(const BehavioralDataset& dataset);
  std::string save(const TrainedModel& model);
  std::string save(const EditRecord& record);
  std::string save(const std::vector<OracleTranscript>& transcripts);

  StoredFactorSet load_factor_set(const std::string& ref) const;
  BehavioralDataset load_dataset(const std::string& ref) const;
  TrainedModel load_model(const std::string& ref) const;
  EditRecord load_edit(const std::string& ref) const;
  std::vector<OracleTranscript> load_transcripts(const std::string& ref) const;

 private:
  std::filesystem::path dir(ArtifactKind kind) const { return root_ / directory_of(kind); }

  std::filesystem::path root_;
  Clock clock_;
  bool update_latest_ = true;
};

std::string content_hash(const Json& payload);

}  // namespace factorlens
