#include "doctest.h"

#include <cmath>
#include <random>

#include "factorlens/error.hpp"
#include "factorlens/verbal_scale.hpp"

using namespace factorlens;

namespace {
bool strictly_increasing(const std::array<double, kLevelCount>& v) {
  for (int m = 0; m + 1 < kLevelCount; ++m)
    if (!(v[static_cast<std::size_t>(m)] < v[static_cast<std::size_t>(m + 1)])) return false;
  return true;
}
}  // namespace

TEST_CASE("canonical map values") {
  const auto map = canonical_map();
  CHECK(map(VerbalLevel::kNeutral) == 0.50);
  CHECK(map(VerbalLevel::kVeryUnlikely) == 0.05);
  CHECK(map.values() == std::array<double, 7>{0.05, 0.15, 0.30, 0.50, 0.70, 0.85, 0.95});
  CHECK(strictly_increasing(map.values()));
}

TEST_CASE("level labels are a bijection") {
  for (auto level : all_levels()) {
    CHECK(parse_level(label(level)) == level);
    CHECK(level_from_ordinal(ordinal(level)) == level);
  }
  CHECK(parse_level("  Very Likely ") == VerbalLevel::kVeryLikely);
  CHECK_FALSE(parse_level("likely-ish").has_value());
  CHECK_THROWS(level_from_ordinal(8));
}

TEST_CASE("VerbalMap rejects invalid arrays") {
  CHECK_THROWS_AS(VerbalMap({0.1, 0.2, 0.3, 0.3, 0.5, 0.6, 0.7}), ValidationError);
  CHECK_THROWS_AS(VerbalMap({0.0, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7}), ValidationError);
  CHECK_THROWS_AS(VerbalMap({0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 1.0}), ValidationError);
  CHECK_THROWS_AS(VerbalMap({0.2, 0.1, 0.3, 0.4, 0.5, 0.6, 0.7}), ValidationError);
}

TEST_CASE("enforce_monotone leaves a feasible candidate unchanged") {
  const auto b = default_bounds();
  const auto c = canonical_map().values();
  CHECK(enforce_monotone(c, b).values() == c);
  std::array<double, 7> shifted{0.06, 0.16, 0.29, 0.52, 0.68, 0.86, 0.94};
  CHECK(enforce_monotone(shifted, b).values() == shifted);
}

TEST_CASE("enforce_monotone repairs an inversion by clipping") {
  const auto b = default_bounds();
  auto c = canonical_map().values();
  c[3] = 0.75;  // neutral above somewhat likely
  const auto out = enforce_monotone(c, b).values();
  CHECK(out[3] == b.upper[3]);
  CHECK(out[3] < out[4]);
  CHECK(strictly_increasing(out));
}

TEST_CASE("enforce_monotone property over random candidates") {
  const auto b = default_bounds();
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.001, 0.999);
  for (int rep = 0; rep < 1000; ++rep) {
    std::array<double, 7> c{};
    for (auto& v : c) v = u(rng);
    const auto out = enforce_monotone(c, b).values();
    CHECK(strictly_increasing(out));
    for (std::size_t m = 0; m < 7; ++m) {
      CHECK(out[m] >= b.lower[m] - 1e-12);
      CHECK(out[m] <= b.upper[m] + 1e-12);
      if (m + 1 < 7) CHECK(out[m + 1] - out[m] >= kMinLevelGap - 1e-12);
    }
    CHECK(enforce_monotone(out, b).values() == out);
  }
}

TEST_CASE("enforce_monotone separates values pinned to a shared band edge") {
  const auto b = default_bounds();
  auto c = canonical_map().values();
  c[1] = 0.9;  // clips to upper[1] which equals lower[2]
  c[2] = 0.0 + 1e-6;
  const auto out = enforce_monotone(c, b).values();
  CHECK(strictly_increasing(out));
  CHECK(out[2] - out[1] >= kMinLevelGap - 1e-12);
}

TEST_CASE("bounds validation") {
  auto b = default_bounds();
  CHECK_NOTHROW(b.validate());
  b.lower[2] = b.upper[2];
  CHECK_THROWS_AS(b.validate(), ValidationError);
  b = default_bounds();
  b.upper[2] = b.lower[3] + 0.05;
  CHECK_THROWS_AS(enforce_monotone(canonical_map().values(), b), ValidationError);
}

TEST_CASE("default bands have half-width 0.08 around canonical values") {
  const auto b = default_bounds();
  const auto c = canonical_map().values();
  for (std::size_t m = 0; m < 7; ++m) {
    CHECK(b.lower[m] <= c[m]);
    CHECK(b.upper[m] >= c[m]);
    CHECK(c[m] - b.lower[m] <= 0.08 + 1e-12);
    CHECK(b.upper[m] - c[m] <= 0.08 + 1e-12);
  }
  CHECK(b.upper[3] == doctest::Approx(0.58));
  CHECK(b.upper[0] == doctest::Approx(0.10));  // midpoint of 0.05 and 0.15
}

TEST_CASE("verbal_to_logit") {
  const auto map = canonical_map();
  CHECK(verbal_to_logit(map, VerbalLevel::kNeutral) == 0.0);
  CHECK(verbal_to_logit(map, VerbalLevel::kVeryLikely) == doctest::Approx(std::log(0.95 / 0.05)).epsilon(1e-14));
  CHECK(verbal_to_logit(map, VerbalLevel::kVeryLikely) == doctest::Approx(2.9444).epsilon(1e-4));
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    std::array<double, 7> c{};
    std::uniform_real_distribution<double> u(0.01, 0.99);
    for (auto& v : c) v = u(rng);
    const auto m = enforce_monotone(c, default_bounds());
    for (int k = 1; k < 7; ++k) {
      CHECK(verbal_to_logit(m, level_from_ordinal(k)) < verbal_to_logit(m, level_from_ordinal(k + 1)));
    }
    for (auto level : all_levels()) {
      CHECK(std::abs(1 / (1 + std::exp(-verbal_to_logit(m, level))) - m(level)) < 1e-12);
    }
  }
}
