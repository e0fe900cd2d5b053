#pragma once
// JSON forms of the domain types. Doubles are written with the shortest
// representation that round-trips; interaction terms are [i, j, value]
// triplets in canonical pair order.

#include <string>

#include "json.hpp"

#include "factorlens/dataset.hpp"
#include "factorlens/editing.hpp"
#include "factorlens/elicitation.hpp"
#include "factorlens/inference.hpp"
#include "factorlens/model.hpp"
#include "factorlens/oracle.hpp"
#include "factorlens/probing.hpp"

namespace factorlens {

using Json = nlohmann::json;

void to_json(Json& j, const Factor& v);
void from_json(const Json& j, Factor& v);
void to_json(Json& j, const FactorSet& v);
void from_json(const Json& j, FactorSet& v);
void to_json(Json& j, const FactorConfiguration& v);
void from_json(const Json& j, FactorConfiguration& v);
void to_json(Json& j, const DecisionParams& v);
void from_json(const Json& j, DecisionParams& v);
void to_json(Json& j, const VerbalMap& v);
void from_json(const Json& j, VerbalMap& v);
void to_json(Json& j, const MonotoneBounds& v);
void from_json(const Json& j, MonotoneBounds& v);
void to_json(Json& j, const Observation& v);
void from_json(const Json& j, Observation& v);
void to_json(Json& j, const DatasetProvenance& v);
void from_json(const Json& j, DatasetProvenance& v);
void to_json(Json& j, const BehavioralDataset& v);
void from_json(const Json& j, BehavioralDataset& v);
void to_json(Json& j, const OracleTranscript& v);
void from_json(const Json& j, OracleTranscript& v);
void to_json(Json& j, const EmConfig& v);
void from_json(const Json& j, EmConfig& v);
void to_json(Json& j, const FitDiagnostics& v);
void from_json(const Json& j, FitDiagnostics& v);
void to_json(Json& j, const Weighting& v);
void from_json(const Json& j, Weighting& v);
void to_json(Json& j, const RatioConstraint& v);
void from_json(const Json& j, RatioConstraint& v);
void to_json(Json& j, const CoefficientRef& v);
void from_json(const Json& j, CoefficientRef& v);
void to_json(Json& j, const EditRecord& v);
void from_json(const Json& j, EditRecord& v);
void to_json(Json& j, const TrainedModel& v);
void from_json(const Json& j, TrainedModel& v);
void to_json(Json& j, const FactorDraft& v);
void from_json(const Json& j, FactorDraft& v);
void to_json(Json& j, const SyntheticOracleSpec& v);
void from_json(const Json& j, SyntheticOracleSpec& v);
void to_json(Json& j, const RemoteConfig& v);
void from_json(const Json& j, RemoteConfig& v);
void to_json(Json& j, const OracleBackend& v);
void from_json(const Json& j, OracleBackend& v);
void to_json(Json& j, const FactorVerdict& v);
void from_json(const Json& j, FactorVerdict& v);
void to_json(Json& j, const OverlapFinding& v);
void from_json(const Json& j, OverlapFinding& v);
void to_json(Json& j, const CoverageFinding& v);
void from_json(const Json& j, CoverageFinding& v);
void to_json(Json& j, const VerificationReport& v);
void from_json(const Json& j, VerificationReport& v);
void to_json(Json& j, const StatementBatch& v);
void to_json(Json& j, const ConditionPartition& v);
void from_json(const Json& j, ConditionPartition& v);
void to_json(Json& j, const InferenceResult& v);
void to_json(Json& j, const OrdinalAuditReport& v);
void to_json(Json& j, const AmeReport& v);

template <typename T>
Json to_json_value(const T& v) {
  Json j;
  to_json(j, v);
  return j;
}

// Compact dump with sorted keys; the basis of every content hash.
std::string canonical_dump(const Json& j);

// Hash of the factor set and observations (provenance excluded).
std::string dataset_fingerprint(const BehavioralDataset& dataset);
std::string params_fingerprint(const DecisionParams& params);

}  // namespace factorlens
