#include "factorlens/verbal_scale.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "factorlens/error.hpp"
#include "factorlens/factor_core.hpp"

namespace factorlens {
namespace {

constexpr std::array<std::string_view, kLevelCount> kLabels = {
    "very unlikely", "unlikely", "somewhat unlikely", "neutral",
    "somewhat likely", "likely", "very likely"};

constexpr std::array<double, kLevelCount> kCanonical = {0.05, 0.15, 0.30, 0.50,
                                                        0.70, 0.85, 0.95};

constexpr double kBandHalfWidth = 0.08;
constexpr double kOuterFloor = 0.005;
constexpr double kOuterCeiling = 0.995;
constexpr double kOverlapTolerance = 1e-12;

}  // namespace

int ordinal(VerbalLevel level) noexcept { return static_cast<int>(level); }

VerbalLevel level_from_ordinal(int ordinal) {
  if (ordinal < 1 || ordinal > kLevelCount) {
    throw ValidationError("verbal level ordinal must be in 1..7, got " + std::to_string(ordinal));
  }
  return static_cast<VerbalLevel>(ordinal);
}

std::string_view label(VerbalLevel level) noexcept {
  return kLabels[static_cast<std::size_t>(slot(level))];
}

std::optional<VerbalLevel> parse_level(std::string_view text) {
  auto b = text.begin();
  auto e = text.end();
  while (b != e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e != b && std::isspace(static_cast<unsigned char>(*(e - 1)))) --e;
  std::string lowered(b, e);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (int m = 0; m < kLevelCount; ++m) {
    if (lowered == kLabels[static_cast<std::size_t>(m)]) return static_cast<VerbalLevel>(m + 1);
  }
  return std::nullopt;
}

const std::array<VerbalLevel, kLevelCount>& all_levels() noexcept {
  static const std::array<VerbalLevel, kLevelCount> levels = {
      VerbalLevel::kVeryUnlikely, VerbalLevel::kUnlikely,       VerbalLevel::kSomewhatUnlikely,
      VerbalLevel::kNeutral,      VerbalLevel::kSomewhatLikely, VerbalLevel::kLikely,
      VerbalLevel::kVeryLikely};
  return levels;
}

VerbalMap::VerbalMap(const std::array<double, kLevelCount>& values) : values_(values) {
  for (int m = 0; m < kLevelCount; ++m) {
    const double v = values_[static_cast<std::size_t>(m)];
    if (!(v > 0.0 && v < 1.0)) {
      throw ValidationError("verbal map value for '" + std::string(kLabels[static_cast<std::size_t>(m)]) +
                            "' is outside (0,1)");
    }
    // Compare with a hair of slack so values produced by enforce_monotone
    // (exactly one gap apart) are accepted after floating-point rounding.
    if (m > 0 && v - values_[static_cast<std::size_t>(m - 1)] < kMinLevelGap * (1 - 1e-9)) {
      throw ValidationError("verbal map is not strictly increasing at '" +
                            std::string(kLabels[static_cast<std::size_t>(m)]) + "'");
    }
  }
}

void MonotoneBounds::validate() const {
  for (int m = 0; m < kLevelCount; ++m) {
    const auto um = static_cast<std::size_t>(m);
    if (!(lower[um] > 0.0 && upper[um] < 1.0)) throw ConfigError("monotone bounds must lie in (0,1)");
    if (upper[um] - lower[um] < 2 * kMinLevelGap) {
      throw ConfigError("monotone band " + std::to_string(m + 1) + " is narrower than two level gaps");
    }
    if (m + 1 < kLevelCount && upper[um] > lower[um + 1] + kOverlapTolerance) {
      throw ConfigError("monotone band " + std::to_string(m + 1) + " overlaps the next band");
    }
  }
}

VerbalMap canonical_map() { return VerbalMap(kCanonical); }

MonotoneBounds default_bounds() {
  MonotoneBounds b{};
  for (int m = 0; m < kLevelCount; ++m) {
    const auto um = static_cast<std::size_t>(m);
    double lo = kCanonical[um] - kBandHalfWidth;
    double hi = kCanonical[um] + kBandHalfWidth;
    if (m > 0) lo = std::max(lo, 0.5 * (kCanonical[um - 1] + kCanonical[um]));
    if (m + 1 < kLevelCount) hi = std::min(hi, 0.5 * (kCanonical[um] + kCanonical[um + 1]));
    b.lower[um] = std::max(lo, kOuterFloor);
    b.upper[um] = std::min(hi, kOuterCeiling);
  }
  return b;
}

VerbalMap enforce_monotone(const std::array<double, kLevelCount>& candidate,
                           const MonotoneBounds& bounds) {
  bounds.validate();
  std::array<double, kLevelCount> v{};
  for (std::size_t m = 0; m < kLevelCount; ++m) {
    if (!std::isfinite(candidate[m])) throw NumericalError("verbal map candidate is not finite");
    v[m] = std::clamp(candidate[m], bounds.lower[m], bounds.upper[m]);
  }
  for (std::size_t m = 1; m < kLevelCount; ++m) {
    if (v[m] - v[m - 1] < kMinLevelGap) {
      v[m - 1] = std::min(v[m - 1], bounds.upper[m - 1] - 0.5 * kMinLevelGap);
      v[m] = std::max(v[m], bounds.lower[m] + 0.5 * kMinLevelGap);
    }
  }
  return VerbalMap(v);
}

double verbal_to_logit(const VerbalMap& map, VerbalLevel level) { return logit(map(level)); }

}  // namespace factorlens
