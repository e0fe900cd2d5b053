#pragma once
// Small shared helpers: content hashing, reproducible RNG streams, clocks.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>

namespace factorlens {

// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

// Independent generator for (seed, stream); the same pair always yields the
// same sequence regardless of which thread asks for it.
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream);

// Uniform draw in [0, 1).
double uniform01(std::mt19937_64& rng);

// ISO-8601 UTC timestamps. Commands run against an injectable clock so a
// replayed run stamps its artifacts with the original time.
using Clock = std::function<std::string()>;
std::string utc_now();
Clock system_clock();
Clock fixed_clock(std::string timestamp);

}  // namespace factorlens
