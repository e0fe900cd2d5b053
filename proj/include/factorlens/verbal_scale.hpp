#pragma once
// Seven-level verbal probability scale and the learnable map from levels to
// probabilities. Levels are ordered v1 (very unlikely) .. v7 (very likely).

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace factorlens {

inline constexpr int kLevelCount = 7;

enum class VerbalLevel : int {
  kVeryUnlikely = 1,
  kUnlikely = 2,
  kSomewhatUnlikely = 3,
  kNeutral = 4,
  kSomewhatLikely = 5,
  kLikely = 6,
  kVeryLikely = 7,
};

int ordinal(VerbalLevel level) noexcept;
// 0-based slot for array indexing.
inline int slot(VerbalLevel level) noexcept { return ordinal(level) - 1; }
VerbalLevel level_from_ordinal(int ordinal);
std::string_view label(VerbalLevel level) noexcept;
// Case-insensitive exact match after trimming whitespace.
std::optional<VerbalLevel> parse_level(std::string_view text);
const std::array<VerbalLevel, kLevelCount>& all_levels() noexcept;

// Minimum separation between adjacent levels in a valid map.
inline constexpr double kMinLevelGap = 1e-3;

class VerbalMap {
 public:
  // Throws ValidationError unless strictly increasing (gap >= kMinLevelGap)
  // and inside (0, 1).
  explicit VerbalMap(const std::array<double, kLevelCount>& values);

  double operator()(VerbalLevel level) const noexcept {
    return values_[static_cast<std::size_t>(slot(level))];
  }
  const std::array<double, kLevelCount>& values() const noexcept { return values_; }

  friend bool operator==(const VerbalMap&, const VerbalMap&) = default;

 private:
  std::array<double, kLevelCount> values_;
};

struct MonotoneBounds {
  std::array<double, kLevelCount> lower;
  std::array<double, kLevelCount> upper;

  // lower < upper with width >= 2 * kMinLevelGap, upper[m] <= lower[m+1]
  // (up to a 1e-12 overlap tolerance), everything in (0, 1).
  void validate() const;

  friend bool operator==(const MonotoneBounds&, const MonotoneBounds&) = default;
};

// very unlikely .. very likely = 0.05 0.15 0.30 0.50 0.70 0.85 0.95
VerbalMap canonical_map();

// Windows of half-width 0.08 around the canonical values; neighbouring
// windows are cut at the midpoint between their centres.
MonotoneBounds default_bounds();

// Clip each candidate into its band, then separate any adjacent pair closer
// than kMinLevelGap by moving both to half a gap either side of their shared
// band edge. Values already feasible are returned untouched.
VerbalMap enforce_monotone(const std::array<double, kLevelCount>& candidate,
                           const MonotoneBounds& bounds);

double verbal_to_logit(const VerbalMap& map, VerbalLevel level);

}  // namespace factorlens
