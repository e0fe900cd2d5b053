#pragma once
// Binary decision factors and the logistic decision model
//
//   P(O=1 | f) = sigmoid(alpha + sum_j beta_j f_j + sum_{i<j} gamma_ij f_i f_j)
//
// Interaction pairs use lexicographic (i, j), i < j ordering everywhere: in the
// augmented feature vector, in dense parameter vectors and in serialization.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace factorlens {

inline constexpr int kMaxFactors = 20;

struct Factor {
  int id = 0;
  std::string name;
  std::string positive_description;  // meaning of value 1
  std::string negative_description;  // meaning of value 0

  friend bool operator==(const Factor&, const Factor&) = default;
};

class FactorSet {
 public:
  FactorSet() = default;
  FactorSet(std::vector<Factor> factors, std::string scenario,
            std::string outcome_positive, std::string outcome_negative);

  int size() const noexcept { return static_cast<int>(factors_.size()); }
  const std::vector<Factor>& factors() const noexcept { return factors_; }
  const Factor& at(int id) const { return factors_.at(static_cast<std::size_t>(id)); }
  const std::string& scenario() const noexcept { return scenario_; }
  const std::string& outcome_positive() const noexcept { return outcome_positive_; }
  const std::string& outcome_negative() const noexcept { return outcome_negative_; }
  std::optional<int> find(const std::string& name) const;

  // Throws ValidationError unless 1 <= N <= 20, ids are 0..N-1 in order,
  // names are non-empty and unique, descriptions non-empty and distinct.
  void validate() const;

  friend bool operator==(const FactorSet&, const FactorSet&) = default;

 private:
  std::vector<Factor> factors_;
  std::string scenario_;
  std::string outcome_positive_;
  std::string outcome_negative_;
};

// Fixed-length bit vector over N <= 20 factors; bit j is factor j.
class FactorConfiguration {
 public:
  FactorConfiguration() = default;
  FactorConfiguration(int n, std::uint32_t mask);
  explicit FactorConfiguration(const std::vector<int>& bits);

  // "0101" -> factor 0 = 0, factor 1 = 1, ...
  static FactorConfiguration parse(const std::string& bits);

  int size() const noexcept { return n_; }
  std::uint32_t mask() const noexcept { return mask_; }
  bool bit(int j) const;
  FactorConfiguration with(int j, bool value) const;
  std::vector<int> bits() const;
  std::string to_string() const;

  friend bool operator==(const FactorConfiguration&, const FactorConfiguration&) = default;
  friend auto operator<=>(const FactorConfiguration&, const FactorConfiguration&) = default;

 private:
  int n_ = 0;
  std::uint32_t mask_ = 0;
};

using InteractionKey = std::pair<int, int>;

struct DecisionParams {
  double alpha = 0.0;
  std::vector<double> beta;
  std::map<InteractionKey, double> gamma;  // absent key == 0

  DecisionParams() = default;
  explicit DecisionParams(int n) : beta(static_cast<std::size_t>(n), 0.0) {}

  int size() const noexcept { return static_cast<int>(beta.size()); }
  double interaction(int i, int j) const;
  // Stores value under (min, max); a zero value erases the key.
  void set_interaction(int i, int j, double value);

  // (alpha, beta_0..beta_{N-1}, gamma pairs in canonical order)
  std::vector<double> to_dense() const;
  static DecisionParams from_dense(int n, std::span<const double> dense);

  DecisionParams negated() const;

  // Keys in range, i < j, finite values, no explicit zero gammas.
  void validate() const;

  friend bool operator==(const DecisionParams&, const DecisionParams&) = default;
};

std::size_t feature_count(int n);
std::size_t pair_index(int i, int j, int n);
InteractionKey pair_at(std::size_t index, int n);

// Augmented feature vector: 1, f_1..f_N, f_i*f_j in canonical pair order.
std::vector<double> expand_features(const FactorConfiguration& config, int n);

double logit_of(const DecisionParams& params, const FactorConfiguration& config);
double predict(const DecisionParams& params, const FactorConfiguration& config);

double sigmoid(double z);
double logit(double p);

}  // namespace factorlens
