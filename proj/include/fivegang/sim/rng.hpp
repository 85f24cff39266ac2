#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace fivegang::sim {

/// splitmix64 finalizer; used to derive seeds, not as a generator.
constexpr std::uint64_t mix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// 64-bit FNV-1a. Stable across platforms, unlike std::hash.
constexpr std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char c : s) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001B3ull;
    }
    return h;
}

/// Seed of the independent stream owned by `entity` under scenario seed `seed`.
/// Adding entities never perturbs the draws of existing ones.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view entity)
{
    return mix64(seed ^ mix64(fnv1a(entity)));
}

/// Converts 64 random bits to a double uniform in [0, 1).
constexpr double to_unit(std::uint64_t bits)
{
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Per-entity random stream. Wraps mt19937_64 and exposes the handful of
/// draws the simulator needs with a platform-independent mapping.
class RngStream
{
public:
    using result_type = std::uint64_t;

    RngStream() : RngStream(0) {}
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}
    RngStream(std::uint64_t scenario_seed, std::string_view entity)
        : engine_(derive_seed(scenario_seed, entity))
    {
    }

    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }
    result_type operator()() { return engine_(); }

    double uniform() { return to_unit(engine_()); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    bool bernoulli(double p) { return p >= 1.0 || (p > 0.0 && uniform() < p); }
    std::uint8_t byte() { return static_cast<std::uint8_t>(engine_() >> 56); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

    double normal(double mean = 0.0, double stddev = 1.0)
    {
        // Box-Muller on two fresh draws; 1 - u keeps the log argument in (0, 1].
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::mt19937_64 engine_;
};

/// Counter-based standard normal: a pure function of (seed, counter, lane).
inline double hashed_normal(std::uint64_t seed, std::uint64_t counter, std::uint64_t lane)
{
    const std::uint64_t a = mix64(seed ^ mix64(counter * 0x100000001B3ull + lane));
    const std::uint64_t b = mix64(a ^ 0xD1B54A32D192ED03ull);
    const double u1 = 1.0 - to_unit(a);
    const double u2 = to_unit(b);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace fivegang::sim
