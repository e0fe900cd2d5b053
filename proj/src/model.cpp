#include "factorlens/model.hpp"

#include <cmath>

#include "factorlens/error.hpp"
#include "factorlens/serialization.hpp"
#include "factorlens/util.hpp"

namespace factorlens {

void Weighting::validate(int n) const {
  if (uniform()) return;
  if (n < 1 || n > kMaxFactors) throw DimensionError("weighting needs 1 <= N <= 20");
  if (distribution.size() != (std::size_t{1} << n)) {
    throw DimensionError("weighting must have 2^N entries, got " +
                         std::to_string(distribution.size()));
  }
  double total = 0.0;
  for (double w : distribution) {
    if (!std::isfinite(w) || w < 0) throw ValidationError("weighting entries must be finite and non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("weighting does not sum to 1");
}

double Weighting::weight(std::uint32_t mask, int n) const {
  if (uniform()) return std::ldexp(1.0, -n);
  return distribution.at(mask);
}

void RatioConstraint::validate(int n) const {
  if (anchor < 0 || anchor >= n || target < 0 || target >= n) {
    throw ValidationError("ratio constraint refers to an unknown factor");
  }
  if (anchor == target) throw ValidationError("ratio constraint needs two distinct factors");
  if (!std::isfinite(rho) || !(rho > 0)) throw ValidationError("ratio rho must be positive");
}

std::string to_string(EditKind kind) {
  switch (kind) {
    case EditKind::kExclude: return "exclude";
    case EditKind::kRatio: return "ratio";
    case EditKind::kManualSet: return "manual-set";
    case EditKind::kRevert: return "revert";
  }
  return "exclude";
}

EditKind edit_kind_from_string(const std::string& s) {
  if (s == "exclude") return EditKind::kExclude;
  if (s == "ratio") return EditKind::kRatio;
  if (s == "manual-set") return EditKind::kManualSet;
  if (s == "revert") return EditKind::kRevert;
  throw ValidationError("unknown edit kind: " + s);
}

std::string TrainedModel::lineage() const {
  return sha256_hex(canonical_dump(to_json_value(factor_set)) + "|" +
                    canonical_dump(to_json_value(trained_params)) + "|" + dataset_hash);
}

void TrainedModel::validate() const {
  factor_set.validate();
  const int n = factor_set.size();
  if (params.size() != n || trained_params.size() != n) {
    throw DimensionError("model parameters do not match the factor set");
  }
  params.validate();
  trained_params.validate();
  em_config.validate();
  VerbalMap check(map.values());
  (void)check;
  const std::string id = lineage();
  for (std::size_t s = 0; s < edits.size(); ++s) {
    const auto& e = edits[s];
    if (e.sequence != static_cast<int>(s)) throw LineageError("edit sequence numbers are not contiguous");
    if (e.lineage != id) throw LineageError("edit " + std::to_string(s) + " belongs to another model");
  }
}

}  // namespace factorlens
