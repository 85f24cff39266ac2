#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "fivegang/errors.hpp"

namespace fivegang::gf256 {

/// Reduction polynomial x^8 + x^4 + x^3 + x + 1.
inline constexpr unsigned kPolynomial = 0x11B;

namespace detail {

struct Tables
{
    std::array<std::uint8_t, 512> exp{};
    std::array<std::uint8_t, 256> log{};
};

// 0x03 generates the multiplicative group under 0x11B (0x02 does not).
constexpr Tables build_tables()
{
    Tables t;
    unsigned x = 1;
    for (unsigned i = 0; i < 255; ++i) {
        t.exp[i] = static_cast<std::uint8_t>(x);
        t.log[x] = static_cast<std::uint8_t>(i);
        unsigned doubled = x << 1;
        if (doubled & 0x100)
            doubled ^= kPolynomial;
        x ^= doubled; // x * 3 = x * 2 + x
    }
    for (unsigned i = 255; i < 512; ++i)
        t.exp[i] = t.exp[i - 255];
    return t;
}

inline constexpr Tables kTables = build_tables();

} // namespace detail

constexpr std::uint8_t add(std::uint8_t a, std::uint8_t b) { return a ^ b; }

constexpr std::uint8_t mul(std::uint8_t a, std::uint8_t b)
{
    if (a == 0 || b == 0)
        return 0;
    return detail::kTables.exp[unsigned{detail::kTables.log[a]} + detail::kTables.log[b]];
}

inline std::uint8_t inv(std::uint8_t a)
{
    if (a == 0)
        throw DivisionByZero("gf256::inv(0)");
    return detail::kTables.exp[255u - detail::kTables.log[a]];
}

inline std::uint8_t div(std::uint8_t a, std::uint8_t b) { return mul(a, inv(b)); }

/// dst[i] ^= c * src[i]
inline void mul_add(std::span<std::uint8_t> dst, std::span<const std::uint8_t> src, std::uint8_t c)
{
    if (c == 0)
        return;
    const unsigned lc = detail::kTables.log[c];
    for (std::size_t i = 0; i < dst.size(); ++i)
        if (src[i] != 0)
            dst[i] ^= detail::kTables.exp[lc + detail::kTables.log[src[i]]];
}

/// v[i] *= c
inline void scale(std::span<std::uint8_t> v, std::uint8_t c)
{
    for (auto& x : v)
        x = mul(x, c);
}

} // namespace fivegang::gf256
