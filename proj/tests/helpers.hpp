#pragma once
// Shared fixtures for the unit tests.

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "factorlens/factor_core.hpp"

namespace testing_util {

inline factorlens::FactorSet make_factor_set(int n) {
  std::vector<factorlens::Factor> fs;
  for (int j = 0; j < n; ++j) {
    const std::string name = "f" + std::to_string(j);
    fs.push_back({j, name, name + " yes", name + " no"});
  }
  return factorlens::FactorSet(std::move(fs), "test scenario", "approve", "reject");
}

inline factorlens::DecisionParams random_params(int n, std::mt19937_64& rng, int max_gamma = 3,
                                                double scale = 1.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  factorlens::DecisionParams p(n);
  p.alpha = u(rng) * 0.5;
  for (auto& b : p.beta) b = u(rng);
  for (int g = 0; g < max_gamma && n > 1; ++g) {
    int i = static_cast<int>(rng() % static_cast<unsigned>(n));
    int j = static_cast<int>(rng() % static_cast<unsigned>(n));
    if (i == j) continue;
    p.set_interaction(i, j, u(rng));
  }
  return p;
}

// Straight-line logit from the definition, for comparing against the library.
inline double reference_logit(const factorlens::DecisionParams& p, const std::vector<int>& f) {
  double z = p.alpha;
  const int n = static_cast<int>(f.size());
  for (int j = 0; j < n; ++j) z += p.beta[static_cast<std::size_t>(j)] * f[static_cast<std::size_t>(j)];
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) z += p.interaction(i, j) * f[static_cast<std::size_t>(i)] * f[static_cast<std::size_t>(j)];
  return z;
}

inline double reference_sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline std::vector<int> bits_of(std::uint32_t mask, int n) {
  std::vector<int> b(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) b[static_cast<std::size_t>(j)] = (mask >> j) & 1U;
  return b;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("factorlens_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace testing_util
