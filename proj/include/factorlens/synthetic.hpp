#pragma once
// Random ground-truth problems for the synthetic backend.

#include <cstdint>

#include "factorlens/oracle.hpp"

namespace factorlens {

struct SyntheticProblem {
  FactorSet factor_set;
  SyntheticOracleSpec spec;
};

struct ProblemShape {
  double alpha_bound = 1.0;  // alpha ~ U[-a, a]
  double beta_bound = 2.0;   // beta_j ~ U[-b, b]
  int max_interactions = 3;  // distinct pairs, gamma ~ U[-g, g]
  double gamma_bound = 1.5;
};

// Factors are named f0..f{n-1}; the verbal map is canonical.
SyntheticProblem random_problem(int n, std::uint64_t seed, const ProblemShape& shape = {});

}  // namespace factorlens
