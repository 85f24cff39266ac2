#pragma once

#include <compare>
#include <cstdint>
#include <ostream>

namespace fivegang::sim {

/// Integer microseconds since scenario start.
struct SimTime
{
    std::int64_t us = 0;

    constexpr SimTime() = default;
    constexpr explicit SimTime(std::int64_t micros) : us(micros) {}

    static constexpr SimTime zero() { return SimTime{0}; }
    static constexpr SimTime from_ms(std::int64_t ms) { return SimTime{ms * 1000}; }
    static constexpr SimTime from_s(std::int64_t s) { return SimTime{s * 1'000'000}; }

    constexpr double seconds() const { return static_cast<double>(us) * 1e-6; }

    friend constexpr auto operator<=>(SimTime, SimTime) = default;
    friend constexpr SimTime operator+(SimTime t, std::int64_t d) { return SimTime{t.us + d}; }
    friend constexpr std::int64_t operator-(SimTime a, SimTime b) { return a.us - b.us; }
    friend std::ostream& operator<<(std::ostream& os, SimTime t) { return os << t.us << "us"; }
};

} // namespace fivegang::sim
