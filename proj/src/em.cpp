#include "factorlens/em.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "factorlens/error.hpp"
#include "factorlens/serialization.hpp"

namespace factorlens {
namespace {

constexpr double kInitRidge = 1e-6;
constexpr double kMonotoneSlack = 1e-9;
constexpr double kMinStep = 1e-12;

struct Design {
  int n = 0;
  bool interactions = true;
  Eigen::MatrixXd x;  // K x dim

  Eigen::Index dim() const { return x.cols(); }
  Eigen::Index gamma_begin() const { return 1 + n; }
};

Design build_design(const BehavioralDataset& ds, bool interactions) {
  Design d;
  d.n = ds.n();
  d.interactions = interactions;
  const auto full = static_cast<Eigen::Index>(feature_count(d.n));
  const Eigen::Index dim = interactions ? full : 1 + d.n;
  d.x.resize(static_cast<Eigen::Index>(ds.size()), dim);
  for (std::size_t k = 0; k < ds.size(); ++k) {
    const auto feats = expand_features(ds.observations[k].config, d.n);
    for (Eigen::Index c = 0; c < dim; ++c) d.x(static_cast<Eigen::Index>(k), c) = feats[static_cast<std::size_t>(c)];
  }
  return d;
}

Eigen::VectorXd to_vector(const DecisionParams& p, const Design& d) {
  const auto dense = p.to_dense();
  Eigen::VectorXd w(d.dim());
  for (Eigen::Index c = 0; c < d.dim(); ++c) w(c) = dense[static_cast<std::size_t>(c)];
  return w;
}

DecisionParams from_vector(const Eigen::VectorXd& w, const Design& d) {
  std::vector<double> dense(feature_count(d.n), 0.0);
  for (Eigen::Index c = 0; c < d.dim(); ++c) dense[static_cast<std::size_t>(c)] = w(c);
  return DecisionParams::from_dense(d.n, dense);
}

Eigen::VectorXd verbal_logits(const VerbalMap& map, const BehavioralDataset& ds) {
  Eigen::VectorXd l(static_cast<Eigen::Index>(ds.size()));
  for (std::size_t k = 0; k < ds.size(); ++k) {
    l(static_cast<Eigen::Index>(k)) = verbal_to_logit(map, ds.observations[k].level);
  }
  return l;
}

Eigen::VectorXd as_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

struct Objective {
  double mse = 0, mr = 0, l1 = 0, l2 = 0;
  double smooth(const EmConfig& c) const { return mse + c.lambda_mr * mr + l2; }
  double total(const EmConfig& c) const { return smooth(c) + l1; }
};

Objective evaluate(const Eigen::VectorXd& w, const Design& d, const Eigen::VectorXd& target,
                   const std::vector<int>& signs, const EmConfig& cfg) {
  Objective o;
  const Eigen::VectorXd z = d.x * w;
  const auto k = static_cast<double>(z.size());
  o.mse = (target - z).squaredNorm() / k;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double y = signs[static_cast<std::size_t>(i)];
    o.mr += std::max(0.0, -y * (sigmoid(z(i)) - 0.5) + cfg.margin_eps);
  }
  o.mr /= k;
  const auto g = w.tail(d.dim() - d.gamma_begin());
  o.l1 = cfg.lambda1 * g.lpNorm<1>();
  o.l2 = cfg.lambda2 * g.squaredNorm();
  return o;
}

Eigen::VectorXd smooth_gradient(const Eigen::VectorXd& w, const Design& d,
                                const Eigen::VectorXd& target, const std::vector<int>& signs,
                                const EmConfig& cfg) {
  const Eigen::VectorXd z = d.x * w;
  const auto k = static_cast<double>(z.size());
  Eigen::VectorXd coeff = -(2.0 / k) * (target - z);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double y = signs[static_cast<std::size_t>(i)];
    if (y == 0) continue;
    const double s = sigmoid(z(i));
    if (-y * (s - 0.5) + cfg.margin_eps > 0) coeff(i) += cfg.lambda_mr * (-y * s * (1 - s)) / k;
  }
  Eigen::VectorXd grad = d.x.transpose() * coeff;
  grad.tail(d.dim() - d.gamma_begin()) += 2.0 * cfg.lambda2 * w.tail(d.dim() - d.gamma_begin());
  return grad;
}

void check_signs(const std::vector<int>& signs, const BehavioralDataset& ds) {
  if (signs.size() != ds.size()) throw DimensionError("directional sign vector length differs from K");
}

double theta_part(const Eigen::VectorXd& z_model, const PosteriorSummary& post,
                  const EmConfig& cfg) {
  const auto k = static_cast<double>(post.means.size());
  const double sq = (as_vector(post.means) - z_model).squaredNorm();
  return -0.5 * k * std::log(2 * std::numbers::pi * cfg.sigma_theta_sq) -
         (sq + k * post.variance) / (2 * cfg.sigma_theta_sq);
}

double phi_part(const VerbalMap& map, const PosteriorSummary& post, const BehavioralDataset& ds,
                const EmConfig& cfg) {
  const auto k = static_cast<double>(post.means.size());
  const double sq = (verbal_logits(map, ds) - as_vector(post.means)).squaredNorm();
  return -0.5 * k * std::log(2 * std::numbers::pi * cfg.sigma_phi_sq) -
         (sq + k * post.variance) / (2 * cfg.sigma_phi_sq);
}

}  // namespace

void EmConfig::validate() const {
  if (!(sigma_theta_sq > 0) || !(sigma_phi_sq > 0)) throw ConfigError("EM variances must be positive");
  if (lambda1 < 0 || lambda2 < 0 || lambda_mr < 0) throw ConfigError("EM penalty weights must be non-negative");
  if (!(margin_eps > 0)) throw ConfigError("margin epsilon must be positive");
  if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
  if (inner_steps < 1) throw ConfigError("inner_steps must be at least 1");
  if (!(convergence_tol > 0)) throw ConfigError("convergence tolerance must be positive");
  if (max_iters < 1) throw ConfigError("max_iters must be at least 1");
  bounds.validate();
}

double model_weight(const EmConfig& cfg) {
  return cfg.sigma_phi_sq / (cfg.sigma_theta_sq + cfg.sigma_phi_sq);
}

double posterior_variance(const EmConfig& cfg) {
  return cfg.sigma_theta_sq * cfg.sigma_phi_sq / (cfg.sigma_theta_sq + cfg.sigma_phi_sq);
}

PosteriorSummary e_step(const DecisionParams& params, const VerbalMap& map,
                        const BehavioralDataset& dataset, const EmConfig& cfg) {
  if (dataset.observations.empty()) throw ValidationError("E-step needs at least one observation");
  if (params.size() != dataset.n()) throw DimensionError("parameters do not match the dataset's N");
  const double lambda = model_weight(cfg);
  PosteriorSummary post;
  post.variance = posterior_variance(cfg);
  post.means.reserve(dataset.size());
  for (const auto& o : dataset.observations) {
    post.means.push_back(lambda * logit_of(params, o.config) +
                         (1 - lambda) * verbal_to_logit(map, o.level));
  }
  return post;
}

std::vector<int> directional_signs(const VerbalMap& initial_map, const BehavioralDataset& dataset) {
  std::vector<int> signs;
  signs.reserve(dataset.size());
  for (const auto& o : dataset.observations) {
    const double d = initial_map(o.level) - 0.5;
    signs.push_back(d > 0 ? 1 : (d < 0 ? -1 : 0));
  }
  return signs;
}

ThetaObjective theta_objective(const DecisionParams& params, const PosteriorSummary& posterior,
                               const BehavioralDataset& dataset, const std::vector<int>& signs,
                               const EmConfig& cfg) {
  check_signs(signs, dataset);
  const Design d = build_design(dataset, cfg.interactions);
  const Objective o = evaluate(to_vector(params, d), d, as_vector(posterior.means), signs, cfg);
  return ThetaObjective{o.mse, o.mr, o.l1, o.l2};
}

std::vector<double> theta_smooth_gradient(const DecisionParams& params,
                                          const PosteriorSummary& posterior,
                                          const BehavioralDataset& dataset,
                                          const std::vector<int>& signs, const EmConfig& cfg) {
  check_signs(signs, dataset);
  const Design d = build_design(dataset, cfg.interactions);
  const Eigen::VectorXd g =
      smooth_gradient(to_vector(params, d), d, as_vector(posterior.means), signs, cfg);
  std::vector<double> out(feature_count(d.n), 0.0);
  for (Eigen::Index c = 0; c < d.dim(); ++c) out[static_cast<std::size_t>(c)] = g(c);
  return out;
}

DecisionParams m_step_params(const PosteriorSummary& posterior, const BehavioralDataset& dataset,
                             const DecisionParams& params_init, const std::vector<int>& signs,
                             const EmConfig& cfg) {
  check_signs(signs, dataset);
  if (posterior.means.size() != dataset.size()) throw DimensionError("posterior length differs from K");
  const Design d = build_design(dataset, cfg.interactions);
  const Eigen::VectorXd target = as_vector(posterior.means);
  Eigen::VectorXd w = to_vector(params_init, d);

  // Interactions already at zero stay there for the whole M-step.
  std::vector<bool> frozen(static_cast<std::size_t>(d.dim()), false);
  for (Eigen::Index c = d.gamma_begin(); c < d.dim(); ++c) frozen[static_cast<std::size_t>(c)] = w(c) == 0.0;

  double eta = cfg.learning_rate;
  Objective current = evaluate(w, d, target, signs, cfg);
  for (int step = 0; step < cfg.inner_steps; ++step) {
    const Eigen::VectorXd grad = smooth_gradient(w, d, target, signs, cfg);
    if (!grad.allFinite()) {
      throw NumericalError("non-finite M-step gradient at inner iteration " + std::to_string(step));
    }
    bool accepted = false;
    while (eta >= kMinStep) {
      Eigen::VectorXd next = w - eta * grad;
      for (Eigen::Index c = d.gamma_begin(); c < d.dim(); ++c) {
        if (frozen[static_cast<std::size_t>(c)]) {
          next(c) = 0.0;
          continue;
        }
        const double shrunk = std::abs(next(c)) - eta * cfg.lambda1;
        next(c) = shrunk > 0 ? std::copysign(shrunk, next(c)) : 0.0;
      }
      const Eigen::VectorXd delta = next - w;
      const Objective trial = evaluate(next, d, target, signs, cfg);
      // Proximal sufficient-decrease test; it implies the full objective
      // does not increase.
      const double model = current.smooth(cfg) + grad.dot(delta) + delta.squaredNorm() / (2 * eta);
      if (trial.smooth(cfg) <= model && trial.total(cfg) <= current.total(cfg)) {
        for (Eigen::Index c = d.gamma_begin(); c < d.dim(); ++c) {
          if (next(c) == 0.0) frozen[static_cast<std::size_t>(c)] = true;
        }
        const bool stalled = delta.lpNorm<Eigen::Infinity>() == 0.0;
        w = std::move(next);
        current = trial;
        accepted = !stalled;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) break;
  }
  return from_vector(w, d);
}

VerbalMap m_step_map(const PosteriorSummary& posterior, const BehavioralDataset& dataset,
                     const VerbalMap& previous, const EmConfig& cfg) {
  if (posterior.means.size() != dataset.size()) throw DimensionError("posterior length differs from K");
  std::array<double, kLevelCount> sum{};
  std::array<std::size_t, kLevelCount> count{};
  for (std::size_t k = 0; k < dataset.size(); ++k) {
    const auto m = static_cast<std::size_t>(slot(dataset.observations[k].level));
    sum[m] += posterior.means[k];
    ++count[m];
  }
  std::array<double, kLevelCount> candidate = previous.values();
  for (std::size_t m = 0; m < kLevelCount; ++m) {
    if (count[m] > 0) candidate[m] = sigmoid(sum[m] / static_cast<double>(count[m]));
  }
  return enforce_monotone(candidate, cfg.bounds);
}

double q_value(const DecisionParams& params, const VerbalMap& map,
               const PosteriorSummary& posterior, const BehavioralDataset& dataset,
               const EmConfig& cfg) {
  if (posterior.means.size() != dataset.size()) throw DimensionError("posterior length differs from K");
  Eigen::VectorXd z(static_cast<Eigen::Index>(dataset.size()));
  for (std::size_t k = 0; k < dataset.size(); ++k) {
    z(static_cast<Eigen::Index>(k)) = logit_of(params, dataset.observations[k].config);
  }
  return theta_part(z, posterior, cfg) + phi_part(map, posterior, dataset, cfg);
}

double penalized_q_value(const DecisionParams& params, const VerbalMap& map,
                         const PosteriorSummary& posterior, const BehavioralDataset& dataset,
                         const std::vector<int>& signs, const EmConfig& cfg) {
  const ThetaObjective o = theta_objective(params, posterior, dataset, signs, cfg);
  const auto k = static_cast<double>(dataset.size());
  const double penalty = cfg.lambda_mr * o.margin_ranking + o.l1 + o.l2;
  return q_value(params, map, posterior, dataset, cfg) - k / (2 * cfg.sigma_theta_sq) * penalty;
}

double marginal_log_likelihood(const DecisionParams& params, const VerbalMap& map,
                               const BehavioralDataset& dataset, const EmConfig& cfg) {
  const double s = cfg.sigma_theta_sq + cfg.sigma_phi_sq;
  double sq = 0.0;
  for (const auto& o : dataset.observations) {
    const double r = verbal_to_logit(map, o.level) - logit_of(params, o.config);
    sq += r * r;
  }
  const auto k = static_cast<double>(dataset.size());
  return -0.5 * k * std::log(2 * std::numbers::pi * s) - sq / (2 * s);
}

DecisionParams initial_params(const BehavioralDataset& dataset, const VerbalMap& map,
                              const EmConfig& cfg, bool* rank_deficient) {
  const Design d = build_design(dataset, cfg.interactions);
  const Eigen::VectorXd t = verbal_logits(map, dataset);
  Eigen::MatrixXd gram = d.x.transpose() * d.x;
  if (rank_deficient) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d.x);
    *rank_deficient = qr.rank() < d.dim();
  }
  gram.diagonal().array() += kInitRidge;
  const Eigen::VectorXd w = gram.ldlt().solve(d.x.transpose() * t);
  if (!w.allFinite()) throw NumericalError("initial least-squares fit produced non-finite parameters");
  return from_vector(w, d);
}

TrainedModel fit(const BehavioralDataset& dataset, const EmConfig& cfg) {
  dataset.validate();
  cfg.validate();

  TrainedModel model;
  model.factor_set = dataset.factor_set;
  model.em_config = cfg;
  model.dataset_hash = dataset_fingerprint(dataset);

  VerbalMap map = enforce_monotone(canonical_map().values(), cfg.bounds);
  const std::vector<int> signs = directional_signs(map, dataset);
  bool rank_deficient = false;
  DecisionParams params = initial_params(dataset, map, cfg, &rank_deficient);
  model.diagnostics.rank_deficient = rank_deficient;

  PosteriorSummary post = e_step(params, map, dataset, cfg);
  double q = penalized_q_value(params, map, post, dataset, signs, cfg);
  model.diagnostics.q_values.push_back(q);

  for (int it = 1; it <= cfg.max_iters; ++it) {
    DecisionParams next_params = m_step_params(post, dataset, params, signs, cfg);
    VerbalMap next_map = map;
    if (cfg.update_map) {
      next_map = m_step_map(post, dataset, map, cfg);
      // Generalized EM: never accept a map that lowers its share of Q.
      if (phi_part(next_map, post, dataset, cfg) < phi_part(map, post, dataset, cfg)) next_map = map;
    }
    params = std::move(next_params);
    map = next_map;
    post = e_step(params, map, dataset, cfg);
    const double q_next = penalized_q_value(params, map, post, dataset, signs, cfg);
    model.diagnostics.q_values.push_back(q_next);
    model.diagnostics.iterations = it;
    if (q_next < q - kMonotoneSlack) {
      model.diagnostics.monotonicity_violation = it;
      model.diagnostics.converged = false;
      break;
    }
    if (std::abs(q_next - q) < cfg.convergence_tol) {
      model.diagnostics.converged = true;
      break;
    }
    q = q_next;
  }

  model.params = params;
  model.trained_params = params;
  model.map = map;
  model.diagnostics.marginal_log_likelihood = marginal_log_likelihood(params, map, dataset, cfg);
  return model;
}

}  // namespace factorlens
