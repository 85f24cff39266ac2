#pragma once

// Independent reference implementations used only by tests. Nothing here
// shares code with the library paths it checks.

#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

/// Shift-and-add multiplication in GF(2^8) modulo 0x11B.
inline std::uint8_t gf_mul(std::uint8_t a, std::uint8_t b)
{
    unsigned product = 0;
    for (int bit = 0; bit < 8; ++bit)
        if (b & (1u << bit))
            product ^= unsigned{a} << bit;
    for (int deg = 15; deg >= 8; --deg)
        if (product & (1u << deg))
            product ^= 0x11Bu << (deg - 8);
    return static_cast<std::uint8_t>(product);
}

/// Brute-force inverse by search.
inline std::uint8_t gf_inv(std::uint8_t a)
{
    for (unsigned x = 1; x < 256; ++x)
        if (gf_mul(a, static_cast<std::uint8_t>(x)) == 1)
            return static_cast<std::uint8_t>(x);
    return 0;
}

/// Rank of a byte matrix over GF(2^8) by textbook elimination.
inline std::size_t gf_rank(std::vector<std::vector<std::uint8_t>> m)
{
    std::size_t rank = 0;
    const std::size_t rows = m.size();
    const std::size_t cols = rows == 0 ? 0 : m[0].size();
    for (std::size_t c = 0; c < cols && rank < rows; ++c) {
        std::size_t p = rank;
        while (p < rows && m[p][c] == 0)
            ++p;
        if (p == rows)
            continue;
        std::swap(m[p], m[rank]);
        const std::uint8_t iv = gf_inv(m[rank][c]);
        for (auto& x : m[rank])
            x = gf_mul(x, iv);
        for (std::size_t r = 0; r < rows; ++r) {
            if (r == rank || m[r][c] == 0)
                continue;
            const std::uint8_t f = m[r][c];
            for (std::size_t j = 0; j < cols; ++j)
                m[r][j] ^= gf_mul(f, m[rank][j]);
        }
        ++rank;
    }
    return rank;
}

/// y = A x with a plain double loop.
inline std::vector<double> matvec(const std::vector<std::vector<double>>& a, const std::vector<double>& x)
{
    std::vector<double> y(a.size(), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j)
            y[i] += a[i][j] * x[j];
    return y;
}

inline double rel_l2(const std::vector<double>& est, const std::vector<double>& ref)
{
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        num += (est[i] - ref[i]) * (est[i] - ref[i]);
        den += ref[i] * ref[i];
    }
    return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

} // namespace oracle
