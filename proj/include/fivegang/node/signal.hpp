#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fivegang/sim/rng.hpp"
#include "fivegang/sim/time.hpp"

namespace fivegang::node {

using sim::SimTime;

inline constexpr std::size_t kChannels = 9;
inline constexpr std::array<std::string_view, kChannels> kChannelNames{"ax", "ay", "az", "gx", "gy", "gz",
                                                                      "mx", "my", "mz"};

inline std::optional<std::size_t> channel_index(std::string_view name)
{
    for (std::size_t i = 0; i < kChannels; ++i)
        if (kChannelNames[i] == name)
            return i;
    return std::nullopt;
}

/// One 9-DoF reading: accelerometer (m/s^2), gyroscope (rad/s) and the
/// unit-normalized magnetic field direction.
struct SensorFrame
{
    SimTime t;
    std::array<double, 3> accel{};
    std::array<double, 3> gyro{};
    std::array<double, 3> mag{};

    double channel(std::size_t i) const
    {
        return i < 3 ? accel[i] : i < 6 ? gyro[i - 3] : mag[i - 6];
    }
    double& channel(std::size_t i) { return i < 3 ? accel[i] : i < 6 ? gyro[i - 3] : mag[i - 6]; }

    friend bool operator==(const SensorFrame&, const SensorFrame&) = default;
};

struct Sinusoid
{
    double frequency_hz = 0.0;
    double amplitude = 0.0;
    double phase = 0.0;

    /// The sinusoid whose samples over an n-sample window at `sample_rate_hz`
    /// are exactly DCT-II basis vector `bin`, scaled by `amplitude`.
    static Sinusoid dct_bin(double bin, double amplitude, double sample_rate_hz, std::size_t n)
    {
        const double nn = static_cast<double>(n);
        return {bin * sample_rate_hz / (2.0 * nn), amplitude, std::numbers::pi * bin / (2.0 * nn)};
    }
};

struct ChannelSignal
{
    double offset = 0.0;
    std::vector<Sinusoid> components;
    double noise_sd = 0.0;
};

/// Additive step on one channel over [from_us, to_us).
struct Anomaly
{
    std::int64_t from_us = 0;
    std::int64_t to_us = 0;
    std::size_t channel = 0;
    double amplitude = 0.0;
};

/// Synthetic machine signal: per-channel offset plus a sinusoid mixture plus
/// counter-hashed Gaussian noise. Evaluation is a pure function of time.
struct SignalSpec
{
    double sample_rate_hz = 1000.0;
    std::uint64_t seed = 0;
    std::array<ChannelSignal, kChannels> channels{};
    std::vector<Anomaly> anomalies;
    bool normalize_mag = true;

    std::int64_t period_us() const { return static_cast<std::int64_t>(std::llround(1e6 / sample_rate_hz)); }

    /// Noise-free value of one channel, anomalies included.
    double analytic(std::size_t ch, SimTime t) const
    {
        const double ts = t.seconds();
        const auto& c = channels[ch];
        double v = c.offset;
        for (const auto& s : c.components)
            v += s.amplitude * std::cos(2.0 * std::numbers::pi * s.frequency_hz * ts + s.phase);
        for (const auto& a : anomalies)
            if (a.channel == ch && t.us >= a.from_us && t.us < a.to_us)
                v += a.amplitude;
        return v;
    }

    SensorFrame evaluate(SimTime t, bool with_noise = true) const
    {
        SensorFrame f;
        f.t = t;
        for (std::size_t ch = 0; ch < kChannels; ++ch) {
            double v = analytic(ch, t);
            if (with_noise && channels[ch].noise_sd > 0.0)
                v += channels[ch].noise_sd * sim::hashed_normal(seed, static_cast<std::uint64_t>(t.us), ch);
            f.channel(ch) = v;
        }
        if (normalize_mag) {
            const double norm = std::hypot(f.mag[0], f.mag[1], f.mag[2]);
            if (norm > 0.0)
                for (auto& m : f.mag)
                    m /= norm;
        }
        return f;
    }
};

} // namespace fivegang::node
