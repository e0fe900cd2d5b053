#include "factorlens/synthetic.hpp"

#include <set>

#include "factorlens/error.hpp"

namespace factorlens {

SyntheticProblem random_problem(int n, std::uint64_t seed, const ProblemShape& shape) {
  if (n < 1 || n > kMaxFactors) throw DimensionError("synthetic problems need 1..20 factors");
  auto rng = stream_rng(seed, 0x73796e7468ULL);
  auto uniform = [&](double bound) { return (2 * uniform01(rng) - 1) * bound; };

  std::vector<Factor> factors;
  for (int j = 0; j < n; ++j) {
    const std::string name = "f" + std::to_string(j);
    factors.push_back({j, name, name + " present", name + " absent"});
  }
  SyntheticProblem p{FactorSet(std::move(factors), "synthetic scenario", "yes", "no"), {}};
  p.spec.true_params = DecisionParams(n);
  p.spec.true_params.alpha = uniform(shape.alpha_bound);
  for (auto& b : p.spec.true_params.beta) b = uniform(shape.beta_bound);
  const int pairs = n * (n - 1) / 2;
  std::set<std::size_t> chosen;
  while (static_cast<int>(chosen.size()) < std::min(shape.max_interactions, pairs)) {
    chosen.insert(static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(pairs)));
  }
  for (std::size_t idx : chosen) {
    const auto [i, j] = pair_at(idx, n);
    double g = 0.0;
    while (g == 0.0) g = uniform(shape.gamma_bound);
    p.spec.true_params.set_interaction(i, j, g);
  }
  p.spec.rng_seed = seed;
  return p;
}

}  // namespace factorlens
