#pragma once
// Behavioral dataset: (configuration, verbal level) observations collected by
// probing the oracle.

#include <cstdint>
#include <string>
#include <vector>

#include "factorlens/factor_core.hpp"
#include "factorlens/verbal_scale.hpp"

namespace factorlens {

struct Observation {
  FactorConfiguration config;
  VerbalLevel level = VerbalLevel::kNeutral;

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct DatasetProvenance {
  std::string backend;  // remote | replay | synthetic
  std::uint64_t seed = 0;
  std::string plan_mode;  // exhaustive | sampled
  std::size_t budget = 0;
  std::string started_at;
  std::string finished_at;
  std::string note;

  friend bool operator==(const DatasetProvenance&, const DatasetProvenance&) = default;
};

struct BehavioralDataset {
  FactorSet factor_set;
  std::vector<Observation> observations;
  DatasetProvenance provenance;

  int n() const noexcept { return factor_set.size(); }
  std::size_t size() const noexcept { return observations.size(); }
  // K >= 1 and every configuration has N bits.
  void validate() const;

  friend bool operator==(const BehavioralDataset&, const BehavioralDataset&) = default;
};

}  // namespace factorlens
