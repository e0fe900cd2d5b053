#pragma once
// Pipeline commands shared by the CLI and the replay path. A command is a
// name plus a JSON config; input references in the config are resolved to
// full hashes before the run so the stored manifest pins exactly what was
// read. Every run uses a clock frozen at its start, which is what lets a
// replay reproduce timestamped artifacts byte for byte.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "factorlens/store.hpp"

namespace factorlens {

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  Json config;                                // inputs resolved to full hashes
  std::map<std::string, std::string> inputs;  // role -> hash
  std::map<std::string, std::string> outputs; // role -> hash
  std::uint64_t seed = 0;
  std::string started_at;
  double wall_time_seconds = 0.0;
};

void to_json(Json& j, const RunManifest& v);
void from_json(const Json& j, RunManifest& v);

struct RunContext {
  std::vector<std::string> argv;
  std::string started_at;  // empty: now
  bool write_manifest = true;
};

struct CommandResult {
  std::map<std::string, std::string> outputs;
  Json display;
  std::string text;           // human-readable rendering
  std::string manifest_hash;  // empty when no manifest was written
  RunManifest manifest;
};

// synth elicit probe fit infer edit audit report
const std::vector<std::string>& pipeline_commands();

// Replaces store references (factors, dataset, model, edit refs) with full
// hashes and records them as inputs.
Json resolve_inputs(const std::string& command, const Json& config, const Store& store,
                    std::map<std::string, std::string>* inputs = nullptr);

CommandResult run_command(const std::string& command, const Json& config, Store& store,
                          const RunContext& ctx = {});

struct ReplayOutcome {
  RunManifest manifest;
  std::map<std::string, std::string> outputs;
  std::vector<std::string> mismatches;  // roles whose hash differs
  bool identical() const noexcept { return mismatches.empty(); }
};

// Re-executes a stored manifest with its recorded start time and without
// moving `latest` pointers. A remote backend that recorded its exchanges is
// served from that recording.
ReplayOutcome replay_manifest(Store& store, const std::string& ref);

Json model_card(const TrainedModel& model);
std::string render_model_card(const TrainedModel& model, const std::string& hash);

}  // namespace factorlens
