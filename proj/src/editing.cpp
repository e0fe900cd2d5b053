#include "factorlens/editing.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "factorlens/error.hpp"

namespace factorlens {
namespace {

constexpr double kDegenerateAnchor = 1e-9;
constexpr double kArmijo = 1e-4;

void check_factor(const DecisionParams& params, int k) {
  if (k < 0 || k >= params.size()) {
    throw ValidationError("factor id " + std::to_string(k) + " out of range");
  }
}

void check_weighting(const DecisionParams& params, const Weighting& w) {
  if (params.size() < 1 || params.size() > kMaxFactors) throw DimensionError("model must have 1..20 factors");
  w.validate(params.size());
}

// Weight of complement x (bit k cleared) in the marginal over factors != k.
double complement_weight(const Weighting& w, std::uint32_t x0, int k, int n) {
  if (w.uniform()) return std::ldexp(1.0, -(n - 1));
  return w.distribution[x0] + w.distribution[x0 | (1u << k)];
}

Eigen::VectorXd dense_vector(const DecisionParams& p) {
  const auto d = p.to_dense();
  return Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
}

DecisionParams params_of(const Eigen::VectorXd& v, int n) {
  return DecisionParams::from_dense(n, std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

Eigen::VectorXd features_of(int n, std::uint32_t mask) {
  const auto f = expand_features(FactorConfiguration(n, mask), n);
  return Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
}

struct AmeJet {
  Eigen::VectorXd values;    // N
  Eigen::MatrixXd jacobian;  // N x D
};

AmeJet ame_jet(const DecisionParams& p, const Weighting& w) {
  const int n = p.size();
  const auto dim = static_cast<Eigen::Index>(feature_count(n));
  const std::uint32_t total = 1u << n;
  std::vector<double> z(total);
  for (std::uint32_t m = 0; m < total; ++m) z[m] = logit_of(p, FactorConfiguration(n, m));
  AmeJet jet;
  jet.values = Eigen::VectorXd::Zero(n);
  jet.jacobian = Eigen::MatrixXd::Zero(n, dim);
  for (int k = 0; k < n; ++k) {
    const std::uint32_t bit = 1u << k;
    for (std::uint32_t x0 = 0; x0 < total; ++x0) {
      if (x0 & bit) continue;
      const double wt = complement_weight(w, x0, k, n);
      if (wt == 0.0) continue;
      const std::uint32_t x1 = x0 | bit;
      const double s1 = sigmoid(z[x1]);
      const double s0 = sigmoid(z[x0]);
      jet.values(k) += wt * (s1 - s0);
      jet.jacobian.row(k) += wt * (s1 * (1 - s1) * features_of(n, x1) - s0 * (1 - s0) * features_of(n, x0)).transpose();
    }
  }
  return jet;
}

std::string now(const EditContext& ctx) { return ctx.clock ? ctx.clock() : utc_now(); }

EditResult append_edit(const TrainedModel& model, EditRecord record, DecisionParams post) {
  EditResult out{model, std::move(record)};
  out.record.sequence = static_cast<int>(model.edits.size());
  out.record.lineage = model.lineage();
  out.record.pre = model.params;
  out.record.post = post;
  out.model.params = std::move(post);
  out.model.edits.push_back(out.record);
  return out;
}

std::vector<int> others(int n, std::initializer_list<int> touched) {
  std::vector<int> out;
  for (int j = 0; j < n; ++j) {
    bool skip = false;
    for (int t : touched) skip = skip || t == j;
    if (!skip) out.push_back(j);
  }
  return out;
}

}  // namespace

double average_marginal_effect(const DecisionParams& params, int k, const Weighting& weighting) {
  check_factor(params, k);
  check_weighting(params, weighting);
  const int n = params.size();
  const std::uint32_t bit = 1u << k;
  double ame = 0.0;
  for (std::uint32_t x0 = 0; x0 < (1u << n); ++x0) {
    if (x0 & bit) continue;
    const double wt = complement_weight(weighting, x0, k, n);
    ame += wt * (predict(params, FactorConfiguration(n, x0 | bit)) - predict(params, FactorConfiguration(n, x0)));
  }
  return ame;
}

AmeReport ame_report(const DecisionParams& params, const Weighting& weighting) {
  AmeReport r;
  r.weighting = weighting;
  r.enumeration_size = std::size_t{1} << (params.size() - 1);
  for (int k = 0; k < params.size(); ++k) r.ame.push_back(average_marginal_effect(params, k, weighting));
  return r;
}

std::vector<double> ame_gradient(const DecisionParams& params, int k, const Weighting& weighting) {
  check_factor(params, k);
  check_weighting(params, weighting);
  const AmeJet jet = ame_jet(params, weighting);
  const Eigen::VectorXd row = jet.jacobian.row(k).transpose();
  return {row.data(), row.data() + row.size()};
}

double expected_logit(const DecisionParams& params, const Weighting& weighting) {
  check_weighting(params, weighting);
  const int n = params.size();
  double ez = 0.0;
  for (std::uint32_t m = 0; m < (1u << n); ++m) {
    ez += weighting.weight(m, n) * logit_of(params, FactorConfiguration(n, m));
  }
  return ez;
}

std::vector<double> expected_logit_gradient(int n, const Weighting& weighting) {
  if (n < 1 || n > kMaxFactors) throw DimensionError("model must have 1..20 factors");
  weighting.validate(n);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(feature_count(n)));
  for (std::uint32_t m = 0; m < (1u << n); ++m) g += weighting.weight(m, n) * features_of(n, m);
  return {g.data(), g.data() + g.size()};
}

double mean_absolute_effect(const DecisionParams& params, int k) {
  check_factor(params, k);
  const int n = params.size();
  const std::uint32_t bit = 1u << k;
  double sum = 0.0;
  for (std::uint32_t x0 = 0; x0 < (1u << n); ++x0) {
    if (x0 & bit) continue;
    sum += std::abs(predict(params, FactorConfiguration(n, x0 | bit)) -
                    predict(params, FactorConfiguration(n, x0)));
  }
  return std::ldexp(sum, -(n - 1));
}

std::optional<double> effect_reduction_ratio(const DecisionParams& before,
                                             const DecisionParams& after, int k) {
  if (before.size() != after.size()) throw DimensionError("models do not share a factor set");
  const double b = mean_absolute_effect(before, k);
  if (b == 0.0) return std::nullopt;
  return 1.0 - mean_absolute_effect(after, k) / b;
}

std::optional<double> effect_reduction_ratio(const TrainedModel& before, const TrainedModel& after,
                                             int k) {
  if (!(before.factor_set == after.factor_set)) throw ValidationError("models do not share a factor set");
  return effect_reduction_ratio(before.params, after.params, k);
}

double side_effect(const DecisionParams& before, const DecisionParams& after,
                   const std::vector<int>& touched, const Weighting& weighting) {
  if (before.size() != after.size()) throw DimensionError("parameter sizes differ");
  double total = 0.0;
  for (int j = 0; j < before.size(); ++j) {
    if (std::find(touched.begin(), touched.end(), j) != touched.end()) continue;
    const double d = average_marginal_effect(after, j, weighting) - average_marginal_effect(before, j, weighting);
    total += d * d;
  }
  return total;
}

DecisionParams excluded_params(const DecisionParams& params, int k) {
  check_factor(params, k);
  DecisionParams out = params;
  out.beta[static_cast<std::size_t>(k)] = 0.0;
  std::erase_if(out.gamma, [k](const auto& kv) { return kv.first.first == k || kv.first.second == k; });
  return out;
}

EditResult exclude_factor(const TrainedModel& model, int k, const EditContext& ctx) {
  DecisionParams post = excluded_params(model.params, k);
  EditRecord rec;
  rec.kind = EditKind::kExclude;
  rec.factor = k;
  rec.side_effect = side_effect(model.params, post, {k});
  rec.timestamp = now(ctx);
  rec.author = ctx.author;
  return append_edit(model, std::move(rec), std::move(post));
}

RatioSolution solve_ratio(const DecisionParams& params, const RatioConstraint& constraint,
                          const Weighting& weighting, const SqpOptions& options) {
  const int n = params.size();
  constraint.validate(n);
  check_weighting(params, weighting);
  const int ia = constraint.anchor;
  const int it = constraint.target;
  const double rho = constraint.rho;
  const auto dim = static_cast<Eigen::Index>(feature_count(n));
  const std::vector<int> free_factors = others(n, {ia, it});

  const std::vector<double> ez_grad_v = expected_logit_gradient(n, weighting);
  const Eigen::Map<const Eigen::VectorXd> ez_grad(ez_grad_v.data(), dim);
  const Eigen::VectorXd theta0 = dense_vector(params);
  const double ez0 = ez_grad.dot(theta0);
  const AmeJet jet0 = ame_jet(params, weighting);

  struct Eval {
    AmeJet jet;
    Eigen::VectorXd r;  // side-effect residuals
    Eigen::Vector2d c;  // constraints
    double f = 0.0;     // 0.5 |r|^2
  };
  auto evaluate = [&](const Eigen::VectorXd& theta) {
    Eval e;
    e.jet = ame_jet(params_of(theta, n), weighting);
    e.r.resize(static_cast<Eigen::Index>(free_factors.size()));
    for (std::size_t q = 0; q < free_factors.size(); ++q) {
      const int j = free_factors[q];
      e.r(static_cast<Eigen::Index>(q)) = e.jet.values(j) - jet0.values(j);
    }
    e.c(0) = ez_grad.dot(theta) - ez0;
    e.c(1) = e.jet.values(it) - rho * e.jet.values(ia);
    e.f = 0.5 * e.r.squaredNorm();
    return e;
  };

  RatioSolution sol;
  Eigen::VectorXd theta = theta0;
  Eval cur = evaluate(theta);
  if (cur.c.lpNorm<Eigen::Infinity>() <= 1e-12) {
    if (std::abs(cur.jet.values(ia)) <= kDegenerateAnchor) {
      throw InfeasibleError("anchor effect is zero; the ratio constraint is ill-posed", 0.0);
    }
    sol.params = params;
    sol.residuals = {cur.c(0), cur.c(1)};
    return sol;
  }

  Eigen::VectorXd best_theta = theta;
  double best_residual = cur.c.lpNorm<Eigen::Infinity>();
  double nu = 1.0;
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    Eigen::MatrixXd jr(static_cast<Eigen::Index>(free_factors.size()), dim);
    for (std::size_t q = 0; q < free_factors.size(); ++q) {
      jr.row(static_cast<Eigen::Index>(q)) = cur.jet.jacobian.row(free_factors[q]);
    }
    Eigen::MatrixXd a(2, dim);
    a.row(0) = ez_grad.transpose();
    a.row(1) = cur.jet.jacobian.row(it) - rho * cur.jet.jacobian.row(ia);
    const Eigen::VectorXd g = jr.transpose() * cur.r;
    Eigen::MatrixXd h = jr.transpose() * jr;
    h.diagonal().array() += options.hessian_damping;

    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(dim + 2, dim + 2);
    kkt.topLeftCorner(dim, dim) = h;
    kkt.topRightCorner(dim, 2) = a.transpose();
    kkt.bottomLeftCorner(2, dim) = a;
    Eigen::VectorXd rhs(dim + 2);
    rhs.head(dim) = -g;
    rhs.tail(2) = -cur.c;
    const Eigen::VectorXd sol_kkt = kkt.colPivHouseholderQr().solve(rhs);
    if (!sol_kkt.allFinite()) break;
    const Eigen::VectorXd d = sol_kkt.head(dim);
    const Eigen::VectorXd lambda = sol_kkt.tail(2);

    const double cnorm = cur.c.lpNorm<Eigen::Infinity>();
    if (cnorm <= options.internal_tolerance &&
        d.lpNorm<Eigen::Infinity>() <= 1e-10 * (1.0 + theta.lpNorm<Eigen::Infinity>())) {
      break;
    }

    nu = std::max(nu, lambda.lpNorm<Eigen::Infinity>() + 1e-3);
    const double merit = cur.f + nu * cur.c.lpNorm<1>();
    const double slope = g.dot(d) - nu * cur.c.lpNorm<1>();
    double step = 1.0;
    bool accepted = false;
    while (step > 1e-12) {
      Eigen::VectorXd trial = theta + step * d;
      Eval e = evaluate(trial);
      if (e.f + nu * e.c.lpNorm<1>() <= merit + kArmijo * step * std::min(slope, 0.0)) {
        theta = std::move(trial);
        cur = std::move(e);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // Merit stalled: take a minimum-norm step back onto the constraints.
      const Eigen::VectorXd restore = -a.transpose() * (a * a.transpose()).ldlt().solve(cur.c);
      theta += restore;
      cur = evaluate(theta);
    }
    const double res = cur.c.lpNorm<Eigen::Infinity>();
    if (res < best_residual || (res <= options.internal_tolerance && res <= best_residual * 10)) {
      best_residual = std::min(best_residual, res);
      best_theta = theta;
    }
  }

  // Polish feasibility with a few Gauss-Newton projections.
  theta = best_theta;
  cur = evaluate(theta);
  for (int p = 0; p < 20 && cur.c.lpNorm<Eigen::Infinity>() > 1e-13; ++p) {
    Eigen::MatrixXd a(2, dim);
    a.row(0) = ez_grad.transpose();
    a.row(1) = cur.jet.jacobian.row(it) - rho * cur.jet.jacobian.row(ia);
    const Eigen::VectorXd restore = -a.transpose() * (a * a.transpose()).ldlt().solve(cur.c);
    if (!restore.allFinite()) break;
    Eval e = evaluate(theta + restore);
    if (e.c.lpNorm<Eigen::Infinity>() >= cur.c.lpNorm<Eigen::Infinity>()) break;
    theta += restore;
    cur = std::move(e);
  }

  const double residual = cur.c.lpNorm<Eigen::Infinity>();
  if (std::abs(cur.jet.values(ia)) <= kDegenerateAnchor) {
    throw InfeasibleError("anchor effect collapsed to zero; the ratio constraint is ill-posed", residual);
  }
  if (!(residual <= options.reported_tolerance)) {
    throw SolverError("ratio calibration did not converge", residual);
  }
  sol.params = params_of(theta, n);
  sol.residuals = {cur.c(0), cur.c(1)};
  sol.objective = 2.0 * cur.f;
  sol.iterations = iter;
  return sol;
}

EditResult calibrate_ratio(const TrainedModel& model, const RatioConstraint& constraint,
                           const Weighting& weighting, const EditContext& ctx,
                           const SqpOptions& options) {
  RatioSolution sol = solve_ratio(model.params, constraint, weighting, options);
  EditRecord rec;
  rec.kind = EditKind::kRatio;
  rec.ratio = constraint;
  rec.weighting = weighting;
  rec.constraint_residuals = sol.residuals;
  rec.side_effect = side_effect(model.params, sol.params, {constraint.anchor, constraint.target}, weighting);
  rec.timestamp = now(ctx);
  rec.author = ctx.author;
  return append_edit(model, std::move(rec), std::move(sol.params));
}

DecisionParams with_coefficient(const DecisionParams& params, const CoefficientRef& ref,
                                double value) {
  if (!std::isfinite(value)) throw ValidationError("coefficient value must be finite");
  DecisionParams out = params;
  if (ref.which == "alpha") {
    out.alpha = value;
  } else if (ref.which == "beta") {
    check_factor(params, ref.i);
    out.beta[static_cast<std::size_t>(ref.i)] = value;
  } else if (ref.which == "gamma") {
    check_factor(params, ref.i);
    check_factor(params, ref.j);
    if (ref.i == ref.j) throw ValidationError("interaction needs two distinct factors");
    out.set_interaction(ref.i, ref.j, value);
  } else {
    throw ValidationError("coefficient must be alpha, beta or gamma");
  }
  return out;
}

EditResult manual_set(const TrainedModel& model, const CoefficientRef& ref, double value,
                      const EditContext& ctx) {
  DecisionParams post = with_coefficient(model.params, ref, value);
  std::vector<int> touched;
  if (ref.which == "beta") touched = {ref.i};
  if (ref.which == "gamma") touched = {ref.i, ref.j};
  EditRecord rec;
  rec.kind = EditKind::kManualSet;
  rec.coefficient = ref;
  rec.value = value;
  rec.side_effect = side_effect(model.params, post, touched);
  rec.timestamp = now(ctx);
  rec.author = ctx.author;
  return append_edit(model, std::move(rec), std::move(post));
}

EditResult revert(const TrainedModel& model, const EditRecord& edit, const EditContext& ctx) {
  if (edit.lineage != model.lineage()) throw LineageError("edit belongs to a different model");
  if (edit.sequence < 0 || edit.sequence >= static_cast<int>(model.edits.size()) ||
      !(model.edits[static_cast<std::size_t>(edit.sequence)] == edit)) {
    throw LineageError("edit is not part of this model's history");
  }
  if (edit.kind == EditKind::kRevert) throw LineageError("a revert record cannot be reverted");
  if (edit.reverted) throw LineageError("edit " + std::to_string(edit.sequence) + " is already reverted");
  int head = -1;
  for (const auto& e : model.edits) {
    if (e.kind != EditKind::kRevert && !e.reverted) head = e.sequence;
  }
  if (head != edit.sequence) throw LineageError("only the most recent active edit can be reverted");
  if (!(model.params == edit.post)) throw LineageError("current parameters do not match the edit's result");

  EditRecord rec;
  rec.kind = EditKind::kRevert;
  rec.reverts = edit.sequence;
  rec.timestamp = now(ctx);
  rec.author = ctx.author;
  EditResult out = append_edit(model, std::move(rec), edit.pre);
  out.model.edits[static_cast<std::size_t>(edit.sequence)].reverted = true;
  return out;
}

DecisionParams replay_edits(const TrainedModel& model) {
  DecisionParams current = model.trained_params;
  const std::string id = model.lineage();
  for (const auto& e : model.edits) {
    if (e.lineage != id) throw LineageError("edit " + std::to_string(e.sequence) + " has a foreign lineage");
    if (!(e.pre == current)) throw LineageError("edit " + std::to_string(e.sequence) + " does not start from the replayed state");
    DecisionParams next;
    switch (e.kind) {
      case EditKind::kExclude: next = excluded_params(current, e.factor); break;
      case EditKind::kRatio:
        if (!e.ratio) throw LineageError("ratio edit without a constraint");
        next = solve_ratio(current, *e.ratio, e.weighting).params;
        break;
      case EditKind::kManualSet:
        if (!e.coefficient) throw LineageError("manual edit without a coefficient");
        next = with_coefficient(current, *e.coefficient, e.value);
        break;
      case EditKind::kRevert: {
        if (e.reverts < 0 || e.reverts >= e.sequence) throw LineageError("revert points outside the history");
        next = model.edits[static_cast<std::size_t>(e.reverts)].pre;
        break;
      }
    }
    if (!(next == e.post)) throw LineageError("replay of edit " + std::to_string(e.sequence) + " diverged");
    current = std::move(next);
  }
  if (!(current == model.params)) throw LineageError("replayed parameters differ from the current ones");
  return current;
}

}  // namespace factorlens
