#pragma once
// TrainedModel and the records that travel with it: EM configuration, fit
// diagnostics and the edit history.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "factorlens/factor_core.hpp"
#include "factorlens/verbal_scale.hpp"

namespace factorlens {

struct EmConfig {
  double sigma_theta_sq = 1.0;  // model variance (precision ratio 1.0)
  double sigma_phi_sq = 1.0;    // verbal variance
  double lambda1 = 0.01;        // L1 on gamma
  double lambda2 = 0.001;       // L2 on gamma
  double lambda_mr = 0.1;       // margin-ranking weight
  double margin_eps = 0.05;
  double learning_rate = 0.05;
  int inner_steps = 200;
  double convergence_tol = 1e-4;
  int max_iters = 100;
  MonotoneBounds bounds = default_bounds();
  std::uint64_t seed = 0;
  bool update_map = true;    // false: verbal map stays canonical
  bool interactions = true;  // false: gamma fixed at zero

  void validate() const;
  friend bool operator==(const EmConfig&, const EmConfig&) = default;
};

struct FitDiagnostics {
  std::vector<double> q_values;  // penalized Q after each E-step
  double marginal_log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  std::optional<int> monotonicity_violation;  // iteration where Q dropped
  bool rank_deficient = false;

  friend bool operator==(const FitDiagnostics&, const FitDiagnostics&) = default;
};

// Distribution over full configurations {0,1}^N indexed by mask; empty means
// uniform. Complement weights for a factor are its marginal over the others.
struct Weighting {
  std::vector<double> distribution;

  bool uniform() const noexcept { return distribution.empty(); }
  void validate(int n) const;
  double weight(std::uint32_t mask, int n) const;

  friend bool operator==(const Weighting&, const Weighting&) = default;
};

struct RatioConstraint {
  int anchor = 0;  // i
  int target = 1;  // j, with AME_j = rho * AME_i
  double rho = 1.0;

  void validate(int n) const;
  friend bool operator==(const RatioConstraint&, const RatioConstraint&) = default;
};

enum class EditKind { kExclude, kRatio, kManualSet, kRevert };
std::string to_string(EditKind kind);
EditKind edit_kind_from_string(const std::string& s);

// Coefficient addressed by a manual edit: "alpha", "beta" (i) or "gamma" (i, j).
struct CoefficientRef {
  std::string which = "beta";
  int i = 0;
  int j = 0;
  friend bool operator==(const CoefficientRef&, const CoefficientRef&) = default;
};

struct EditRecord {
  int sequence = 0;  // position in the model's edit history
  std::string lineage;  // hash of the trained parameters this history grows from
  EditKind kind = EditKind::kExclude;
  int factor = -1;                        // exclude
  std::optional<RatioConstraint> ratio;   // ratio
  Weighting weighting;                    // ratio
  std::optional<CoefficientRef> coefficient;  // manual-set
  double value = 0.0;                     // manual-set
  int reverts = -1;                       // revert: sequence of the undone edit
  DecisionParams pre;
  DecisionParams post;
  std::vector<double> constraint_residuals;
  double side_effect = 0.0;  // sum over untouched factors of (delta AME)^2
  std::string timestamp;
  std::string author;
  bool reverted = false;

  friend bool operator==(const EditRecord&, const EditRecord&) = default;
};

struct TrainedModel {
  FactorSet factor_set;
  DecisionParams params;          // current (possibly edited)
  DecisionParams trained_params;  // snapshot straight out of fit
  VerbalMap map = canonical_map();
  EmConfig em_config;
  FitDiagnostics diagnostics;
  std::string dataset_hash;
  std::vector<EditRecord> edits;

  int n() const noexcept { return factor_set.size(); }
  // Lineage id shared by every edit of this model.
  std::string lineage() const;
  void validate() const;

  friend bool operator==(const TrainedModel&, const TrainedModel&) = default;
};

}  // namespace factorlens
