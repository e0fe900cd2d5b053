#pragma once
// Expert interventions on a trained decision model: average marginal effects,
// exact factor exclusion, ratio-constrained recalibration, manual coefficient
// edits and reverts. Every edit appends one EditRecord to the model.

#include <optional>
#include <string>
#include <vector>

#include "factorlens/model.hpp"
#include "factorlens/util.hpp"

namespace factorlens {

// Mean over complements of P(f_k = 1, x) - P(f_k = 0, x), exact enumeration.
double average_marginal_effect(const DecisionParams& params, int k, const Weighting& weighting = {});

struct AmeReport {
  std::vector<double> ame;
  std::size_t enumeration_size = 0;  // 2^(N-1)
  Weighting weighting;
};
AmeReport ame_report(const DecisionParams& params, const Weighting& weighting = {});

// Gradient of AME_k in dense parameter order.
std::vector<double> ame_gradient(const DecisionParams& params, int k, const Weighting& weighting = {});

// Mean logit over the weighting distribution of full configurations.
double expected_logit(const DecisionParams& params, const Weighting& weighting = {});
std::vector<double> expected_logit_gradient(int n, const Weighting& weighting = {});

// Mean over complements of |P(f_k = 1, x) - P(f_k = 0, x)|.
double mean_absolute_effect(const DecisionParams& params, int k);

// 1 - mean|dP|_after / mean|dP|_before; empty when the factor had no effect
// before.
std::optional<double> effect_reduction_ratio(const DecisionParams& before,
                                             const DecisionParams& after, int k);
std::optional<double> effect_reduction_ratio(const TrainedModel& before, const TrainedModel& after,
                                             int k);

struct EditContext {
  std::string author = "local";
  Clock clock = system_clock();
};

struct SqpOptions {
  int max_iterations = 500;
  double internal_tolerance = 1e-8;
  double reported_tolerance = 1e-6;
  double hessian_damping = 1e-6;
};

struct EditResult {
  TrainedModel model;
  EditRecord record;
};

// beta_k = 0 and every interaction touching k removed.
DecisionParams excluded_params(const DecisionParams& params, int k);
EditResult exclude_factor(const TrainedModel& model, int k, const EditContext& ctx = {});

struct RatioSolution {
  DecisionParams params;
  std::vector<double> residuals;  // [mean-logit drift, AME_target - rho * AME_anchor]
  double objective = 0.0;
  int iterations = 0;
};

// Throws SolverError (with the best residual) if the constraints cannot be
// met within the iteration cap, InfeasibleError if the anchor AME collapses.
RatioSolution solve_ratio(const DecisionParams& params, const RatioConstraint& constraint,
                          const Weighting& weighting = {}, const SqpOptions& options = {});
EditResult calibrate_ratio(const TrainedModel& model, const RatioConstraint& constraint,
                           const Weighting& weighting = {}, const EditContext& ctx = {},
                           const SqpOptions& options = {});

DecisionParams with_coefficient(const DecisionParams& params, const CoefficientRef& ref,
                                double value);
EditResult manual_set(const TrainedModel& model, const CoefficientRef& ref, double value,
                      const EditContext& ctx = {});

// Only the most recent edit that is still in effect can be reverted.
EditResult revert(const TrainedModel& model, const EditRecord& edit, const EditContext& ctx = {});

// Re-executes the edit log from the trained snapshot, checking every record
// bit for bit. Returns the final parameters; throws LineageError on mismatch.
DecisionParams replay_edits(const TrainedModel& model);

// Sum over factors outside `touched` of (AME_after - AME_before)^2.
double side_effect(const DecisionParams& before, const DecisionParams& after,
                   const std::vector<int>& touched, const Weighting& weighting = {});

}  // namespace factorlens
