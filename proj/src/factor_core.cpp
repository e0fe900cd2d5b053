#include "factorlens/factor_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "factorlens/error.hpp"

namespace factorlens {

FactorSet::FactorSet(std::vector<Factor> factors, std::string scenario,
                     std::string outcome_positive, std::string outcome_negative)
    : factors_(std::move(factors)),
      scenario_(std::move(scenario)),
      outcome_positive_(std::move(outcome_positive)),
      outcome_negative_(std::move(outcome_negative)) {}

std::optional<int> FactorSet::find(const std::string& name) const {
  for (const auto& f : factors_) {
    if (f.name == name) return f.id;
  }
  return std::nullopt;
}

void FactorSet::validate() const {
  if (factors_.empty() || size() > kMaxFactors) {
    throw ValidationError("factor set must hold between 1 and 20 factors, got " +
                          std::to_string(factors_.size()));
  }
  std::set<std::string> names;
  for (int j = 0; j < size(); ++j) {
    const Factor& f = factors_[static_cast<std::size_t>(j)];
    if (f.id != j) {
      throw ValidationError("factor ids must be 0..N-1 in order; position " +
                            std::to_string(j) + " has id " + std::to_string(f.id));
    }
    if (f.name.empty()) throw ValidationError("factor " + std::to_string(j) + " has no name");
    if (!names.insert(f.name).second) throw ValidationError("duplicate factor name: " + f.name);
    if (f.positive_description.empty() || f.negative_description.empty()) {
      throw ValidationError("factor " + f.name + " is missing a polarity description");
    }
    if (f.positive_description == f.negative_description) {
      throw ValidationError("factor " + f.name + " has identical polarity descriptions");
    }
  }
}

FactorConfiguration::FactorConfiguration(int n, std::uint32_t mask) : n_(n), mask_(mask) {
  if (n < 0 || n > kMaxFactors) throw DimensionError("configuration length out of range");
  if (n < 32 && (mask >> n) != 0) throw DimensionError("configuration mask has bits beyond n");
}

FactorConfiguration::FactorConfiguration(const std::vector<int>& bits)
    : n_(static_cast<int>(bits.size())) {
  if (n_ > kMaxFactors) throw DimensionError("configuration longer than 20 factors");
  for (int j = 0; j < n_; ++j) {
    const int b = bits[static_cast<std::size_t>(j)];
    if (b != 0 && b != 1) throw ValidationError("configuration bits must be 0 or 1");
    if (b) mask_ |= (1u << j);
  }
}

FactorConfiguration FactorConfiguration::parse(const std::string& bits) {
  std::vector<int> v;
  v.reserve(bits.size());
  for (char c : bits) {
    if (c != '0' && c != '1') throw ValidationError("configuration string must be 0/1: " + bits);
    v.push_back(c == '1');
  }
  return FactorConfiguration(v);
}

bool FactorConfiguration::bit(int j) const {
  if (j < 0 || j >= n_) throw DimensionError("factor index out of range");
  return (mask_ >> j) & 1u;
}

FactorConfiguration FactorConfiguration::with(int j, bool value) const {
  if (j < 0 || j >= n_) throw DimensionError("factor index out of range");
  const std::uint32_t m = value ? (mask_ | (1u << j)) : (mask_ & ~(1u << j));
  return FactorConfiguration(n_, m);
}

std::vector<int> FactorConfiguration::bits() const {
  std::vector<int> v(static_cast<std::size_t>(n_));
  for (int j = 0; j < n_; ++j) v[static_cast<std::size_t>(j)] = (mask_ >> j) & 1u;
  return v;
}

std::string FactorConfiguration::to_string() const {
  std::string s(static_cast<std::size_t>(n_), '0');
  for (int j = 0; j < n_; ++j) {
    if ((mask_ >> j) & 1u) s[static_cast<std::size_t>(j)] = '1';
  }
  return s;
}

double DecisionParams::interaction(int i, int j) const {
  if (i > j) std::swap(i, j);
  auto it = gamma.find({i, j});
  return it == gamma.end() ? 0.0 : it->second;
}

void DecisionParams::set_interaction(int i, int j, double value) {
  if (i == j || i < 0 || j < 0 || i >= size() || j >= size()) {
    throw DimensionError("interaction index out of range");
  }
  if (i > j) std::swap(i, j);
  if (value == 0.0) {
    gamma.erase({i, j});
  } else {
    gamma[{i, j}] = value;
  }
}

std::size_t feature_count(int n) {
  const auto un = static_cast<std::size_t>(n);
  return 1 + un + un * (un - 1) / 2;
}

std::size_t pair_index(int i, int j, int n) {
  // Offset of row i in the upper triangle plus column offset.
  const auto ui = static_cast<std::size_t>(i);
  const auto un = static_cast<std::size_t>(n);
  return ui * (2 * un - ui - 1) / 2 + static_cast<std::size_t>(j - i - 1);
}

InteractionKey pair_at(std::size_t index, int n) {
  for (int i = 0; i < n - 1; ++i) {
    const auto row = static_cast<std::size_t>(n - i - 1);
    if (index < row) return {i, i + 1 + static_cast<int>(index)};
    index -= row;
  }
  throw DimensionError("pair index out of range");
}

std::vector<double> DecisionParams::to_dense() const {
  const int n = size();
  std::vector<double> out(feature_count(n), 0.0);
  out[0] = alpha;
  for (int j = 0; j < n; ++j) out[1 + static_cast<std::size_t>(j)] = beta[static_cast<std::size_t>(j)];
  for (const auto& [key, value] : gamma) {
    out[1 + static_cast<std::size_t>(n) + pair_index(key.first, key.second, n)] = value;
  }
  return out;
}

DecisionParams DecisionParams::from_dense(int n, std::span<const double> dense) {
  if (dense.size() != feature_count(n)) throw DimensionError("dense parameter vector has wrong length");
  DecisionParams p(n);
  p.alpha = dense[0];
  for (int j = 0; j < n; ++j) p.beta[static_cast<std::size_t>(j)] = dense[1 + static_cast<std::size_t>(j)];
  const std::size_t offset = 1 + static_cast<std::size_t>(n);
  for (std::size_t k = 0; offset + k < dense.size(); ++k) {
    if (dense[offset + k] != 0.0) p.gamma[pair_at(k, n)] = dense[offset + k];
  }
  return p;
}

DecisionParams DecisionParams::negated() const {
  DecisionParams p = *this;
  p.alpha = -p.alpha;
  for (double& b : p.beta) b = -b;
  for (auto& [key, value] : p.gamma) value = -value;
  return p;
}

void DecisionParams::validate() const {
  const int n = size();
  if (n < 1 || n > kMaxFactors) throw ValidationError("parameter dimension must be in 1..20");
  if (!std::isfinite(alpha)) throw ValidationError("alpha is not finite");
  for (double b : beta) {
    if (!std::isfinite(b)) throw ValidationError("beta contains a non-finite value");
  }
  for (const auto& [key, value] : gamma) {
    const auto [i, j] = key;
    if (!(0 <= i && i < j && j < n)) {
      throw ValidationError("gamma key (" + std::to_string(i) + "," + std::to_string(j) +
                            ") outside 0 <= i < j < N");
    }
    if (!std::isfinite(value)) throw ValidationError("gamma contains a non-finite value");
    if (value == 0.0) throw ValidationError("gamma holds an explicit zero");
  }
}

std::vector<double> expand_features(const FactorConfiguration& config, int n) {
  if (config.size() != n) {
    throw DimensionError("configuration has " + std::to_string(config.size()) +
                         " bits, expected " + std::to_string(n));
  }
  std::vector<double> x(feature_count(n), 0.0);
  x[0] = 1.0;
  const std::uint32_t m = config.mask();
  std::size_t k = 1 + static_cast<std::size_t>(n);
  for (int j = 0; j < n; ++j) x[1 + static_cast<std::size_t>(j)] = (m >> j) & 1u;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j, ++k) x[k] = ((m >> i) & (m >> j) & 1u) ? 1.0 : 0.0;
  }
  return x;
}

double logit_of(const DecisionParams& params, const FactorConfiguration& config) {
  if (config.size() != params.size()) {
    throw DimensionError("configuration has " + std::to_string(config.size()) +
                         " bits, parameters expect " + std::to_string(params.size()));
  }
  const std::uint32_t m = config.mask();
  double z = params.alpha;
  for (int j = 0; j < params.size(); ++j) {
    if ((m >> j) & 1u) z += params.beta[static_cast<std::size_t>(j)];
  }
  for (const auto& [key, value] : params.gamma) {
    if (((m >> key.first) & (m >> key.second) & 1u) != 0) z += value;
  }
  return z;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double predict(const DecisionParams& params, const FactorConfiguration& config) {
  // Keep the result inside the open interval even when exp() saturates.
  return std::clamp(sigmoid(logit_of(params, config)), std::numeric_limits<double>::min(),
                    std::nextafter(1.0, 0.0));
}

}  // namespace factorlens
