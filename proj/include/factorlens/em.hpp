#pragma once
// Joint EM estimation of the decision model and the verbal map.
//
// Generative story in logit space, per observation k:
//   Z_k ~ N(theta . x_k, sigma_theta^2)            (decision model)
//   logit(phi(V_k)) | Z_k ~ N(Z_k, sigma_phi^2)    (verbal response)
// The posterior of Z_k is Gaussian with a shared variance, so the E-step is
// closed form. The theta M-step is proximal gradient on squared error plus a
// margin-ranking hinge and an elastic net on the interactions; the phi M-step
// averages posterior means per level and projects onto monotone bands.

#include <vector>

#include "factorlens/dataset.hpp"
#include "factorlens/model.hpp"

namespace factorlens {

struct PosteriorSummary {
  std::vector<double> means;  // posterior mean logits, one per observation
  double variance = 0.0;      // shared posterior variance
};

// Weight on the model logit in the posterior mean.
double model_weight(const EmConfig& cfg);
double posterior_variance(const EmConfig& cfg);

PosteriorSummary e_step(const DecisionParams& params, const VerbalMap& map,
                        const BehavioralDataset& dataset, const EmConfig& cfg);

// sign(phi0(V_k) - 0.5) for each observation; neutral gives 0.
std::vector<int> directional_signs(const VerbalMap& initial_map, const BehavioralDataset& dataset);

// Composite M-step objective pieces, exposed for tests.
struct ThetaObjective {
  double mse = 0.0;
  double margin_ranking = 0.0;  // already averaged over K, not yet weighted
  double l1 = 0.0;              // lambda1 * |gamma|_1
  double l2 = 0.0;              // lambda2 * |gamma|_2^2
  double smooth(const EmConfig& cfg) const { return mse + cfg.lambda_mr * margin_ranking + l2; }
  double total(const EmConfig& cfg) const { return smooth(cfg) + l1; }
};

ThetaObjective theta_objective(const DecisionParams& params, const PosteriorSummary& posterior,
                               const BehavioralDataset& dataset, const std::vector<int>& signs,
                               const EmConfig& cfg);

// Gradient of the smooth part (mse + lambda_mr * L_MR + l2) in dense
// parameter order.
std::vector<double> theta_smooth_gradient(const DecisionParams& params,
                                          const PosteriorSummary& posterior,
                                          const BehavioralDataset& dataset,
                                          const std::vector<int>& signs, const EmConfig& cfg);

DecisionParams m_step_params(const PosteriorSummary& posterior, const BehavioralDataset& dataset,
                             const DecisionParams& params_init, const std::vector<int>& signs,
                             const EmConfig& cfg);

VerbalMap m_step_map(const PosteriorSummary& posterior, const BehavioralDataset& dataset,
                     const VerbalMap& previous, const EmConfig& cfg);

// Expected complete-data log-likelihood.
double q_value(const DecisionParams& params, const VerbalMap& map,
               const PosteriorSummary& posterior, const BehavioralDataset& dataset,
               const EmConfig& cfg);

// q_value minus the M-step penalties expressed in log-likelihood units; the
// quantity EM is guaranteed not to decrease.
double penalized_q_value(const DecisionParams& params, const VerbalMap& map,
                         const PosteriorSummary& posterior, const BehavioralDataset& dataset,
                         const std::vector<int>& signs, const EmConfig& cfg);

double marginal_log_likelihood(const DecisionParams& params, const VerbalMap& map,
                               const BehavioralDataset& dataset, const EmConfig& cfg);

// Ridge (1e-6) least squares of logit(phi0(V)) on the design; the EM start.
DecisionParams initial_params(const BehavioralDataset& dataset, const VerbalMap& map,
                              const EmConfig& cfg, bool* rank_deficient = nullptr);

TrainedModel fit(const BehavioralDataset& dataset, const EmConfig& cfg);

}  // namespace factorlens
