#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fivegang/codec/bytes.hpp"
#include "fivegang/codec/gf256.hpp"
#include "fivegang/errors.hpp"
#include "fivegang/sim/rng.hpp"

namespace fivegang::rlnc {

using codec::Bytes;

/// K equal-length source symbols coded jointly.
struct Generation
{
    std::uint32_t id = 0;
    std::vector<Bytes> symbols;
    std::size_t true_length = 0; // payload bytes before zero padding

    std::size_t k() const { return symbols.size(); }
    std::size_t symbol_length() const { return symbols.empty() ? 0 : symbols.front().size(); }

    /// Splits `data` into `k` symbols of ceil(size / k) bytes, zero-padding the tail.
    static Generation frame(std::uint32_t id, std::span<const std::uint8_t> data, std::size_t k)
    {
        if (k == 0)
            throw EmptyGeneration("generation needs K >= 1");
        const std::size_t len = std::max<std::size_t>(1, (data.size() + k - 1) / k);
        Generation g;
        g.id = id;
        g.true_length = data.size();
        g.symbols.assign(k, Bytes(len, 0));
        for (std::size_t i = 0; i < data.size(); ++i)
            g.symbols[i / len][i % len] = data[i];
        return g;
    }

    /// Concatenates the symbols and strips padding.
    Bytes unframe() const
    {
        Bytes out;
        out.reserve(k() * symbol_length());
        for (const auto& s : symbols)
            out.insert(out.end(), s.begin(), s.end());
        out.resize(std::min(out.size(), true_length));
        return out;
    }

    friend bool operator==(const Generation&, const Generation&) = default;
};

struct CodedPacket
{
    std::uint32_t generation_id = 0;
    Bytes coefficients; // K entries
    Bytes payload;      // L entries

    friend bool operator==(const CodedPacket&, const CodedPacket&) = default;

    /// generation_id u32 BE, K u16, L u16, K coefficient bytes, L payload bytes.
    Bytes serialize() const
    {
        Bytes out;
        out.reserve(8 + coefficients.size() + payload.size());
        codec::ByteWriter w(out);
        w.u32(generation_id);
        w.u16(static_cast<std::uint16_t>(coefficients.size()));
        w.u16(static_cast<std::uint16_t>(payload.size()));
        w.raw(coefficients);
        w.raw(payload);
        return out;
    }

    static CodedPacket parse(std::span<const std::uint8_t> wire)
    {
        codec::ByteReader r(wire);
        CodedPacket p;
        p.generation_id = r.u32();
        const std::size_t k = r.u16();
        const std::size_t l = r.u16();
        auto c = r.raw(k);
        auto d = r.raw(l);
        p.coefficients.assign(c.begin(), c.end());
        p.payload.assign(d.begin(), d.end());
        if (r.remaining() != 0)
            throw MalformedPacket("trailing bytes after coded packet");
        return p;
    }
};

inline bool all_zero(std::span<const std::uint8_t> v)
{
    return std::all_of(v.begin(), v.end(), [](std::uint8_t x) { return x == 0; });
}

/// Codes `gen` with explicit coefficients.
inline CodedPacket encode_with(const Generation& gen, std::span<const std::uint8_t> coefficients)
{
    if (gen.k() == 0)
        throw EmptyGeneration("generation " + std::to_string(gen.id) + " has no symbols");
    if (coefficients.size() != gen.k())
        throw DimensionMismatch("coefficient count differs from K");
    CodedPacket p;
    p.generation_id = gen.id;
    p.coefficients.assign(coefficients.begin(), coefficients.end());
    p.payload.assign(gen.symbol_length(), 0);
    for (std::size_t i = 0; i < gen.k(); ++i)
        gf256::mul_add(p.payload, gen.symbols[i], coefficients[i]);
    return p;
}

/// Draws a nonzero uniformly random coefficient vector and codes `gen` with it.
inline CodedPacket encode(const Generation& gen, sim::RngStream& rng)
{
    if (gen.k() == 0)
        throw EmptyGeneration("generation " + std::to_string(gen.id) + " has no symbols");
    Bytes coeffs(gen.k());
    do {
        for (auto& c : coeffs)
            c = rng.byte();
    } while (all_zero(coeffs));
    return encode_with(gen, coeffs);
}

/// Combines buffered coded packets with explicit weights. The output's
/// coefficient vector is the same combination of the inputs' vectors.
inline CodedPacket recode_with(std::span<const CodedPacket> buffered, std::span<const std::uint8_t> weights)
{
    if (buffered.empty())
        throw EmptyBuffer("recode called with no buffered packets");
    if (weights.size() != buffered.size())
        throw DimensionMismatch("weight count differs from buffer size");
    const auto& first = buffered.front();
    CodedPacket out;
    out.generation_id = first.generation_id;
    out.coefficients.assign(first.coefficients.size(), 0);
    out.payload.assign(first.payload.size(), 0);
    for (std::size_t i = 0; i < buffered.size(); ++i) {
        const auto& p = buffered[i];
        if (p.generation_id != first.generation_id)
            throw MixedGenerations("generations " + std::to_string(first.generation_id) + " and " +
                                   std::to_string(p.generation_id) + " in one recode");
        if (p.coefficients.size() != out.coefficients.size() || p.payload.size() != out.payload.size())
            throw DimensionMismatch("buffered packets differ in K or L");
        gf256::mul_add(out.coefficients, p.coefficients, weights[i]);
        gf256::mul_add(out.payload, p.payload, weights[i]);
    }
    return out;
}

/// Random recode. Weights are redrawn while the resulting coefficient vector
/// is all zero, unless every buffered packet is itself zero.
inline CodedPacket recode(std::span<const CodedPacket> buffered, sim::RngStream& rng)
{
    if (buffered.empty())
        throw EmptyBuffer("recode called with no buffered packets");
    const bool any_nonzero = std::any_of(buffered.begin(), buffered.end(),
                                         [](const CodedPacket& p) { return !all_zero(p.coefficients); });
    Bytes weights(buffered.size());
    for (int attempt = 0;; ++attempt) {
        for (auto& w : weights)
            w = rng.byte();
        auto out = recode_with(buffered, weights);
        if (!any_nonzero || !all_zero(out.coefficients) || attempt > 64)
            return out;
    }
}

struct Innovative
{
    std::size_t rank;
};
struct Redundant
{
};
struct Complete
{
    Generation generation;
};
using InsertResult = std::variant<Innovative, Redundant, Complete>;

/// Incremental Gaussian elimination over GF(2^8). Rows are kept in reduced
/// row-echelon form, sorted by pivot column.
class Decoder
{
public:
    Decoder(std::uint32_t generation_id, std::size_t k, std::size_t symbol_length)
        : generation_id_(generation_id), k_(k), l_(symbol_length)
    {
        if (k == 0)
            throw EmptyGeneration("decoder needs K >= 1");
    }

    std::uint32_t generation_id() const { return generation_id_; }
    std::size_t k() const { return k_; }
    std::size_t symbol_length() const { return l_; }
    std::size_t rank() const { return rows_.size(); }
    bool complete() const { return rows_.size() == k_; }

    InsertResult insert(const CodedPacket& pkt)
    {
        if (pkt.generation_id != generation_id_)
            throw GenerationMismatch("packet generation " + std::to_string(pkt.generation_id) +
                                     " offered to decoder of generation " + std::to_string(generation_id_));
        if (pkt.coefficients.size() != k_ || pkt.payload.size() != l_)
            throw DimensionMismatch("packet K/L differ from decoder");

        Row row{0, pkt.coefficients, pkt.payload};
        for (const auto& r : rows_) {
            const std::uint8_t c = row.coeffs[r.pivot];
            if (c != 0) {
                gf256::mul_add(row.coeffs, r.coeffs, c);
                gf256::mul_add(row.data, r.data, c);
            }
        }
        auto it = std::find_if(row.coeffs.begin(), row.coeffs.end(), [](std::uint8_t x) { return x != 0; });
        if (it == row.coeffs.end())
            return Redundant{};

        row.pivot = static_cast<std::size_t>(it - row.coeffs.begin());
        const std::uint8_t scale = gf256::inv(*it);
        gf256::scale(row.coeffs, scale);
        gf256::scale(row.data, scale);
        for (auto& r : rows_) {
            const std::uint8_t c = r.coeffs[row.pivot];
            if (c != 0) {
                gf256::mul_add(r.coeffs, row.coeffs, c);
                gf256::mul_add(r.data, row.data, c);
            }
        }
        auto pos = std::lower_bound(rows_.begin(), rows_.end(), row.pivot,
                                    [](const Row& r, std::size_t p) { return r.pivot < p; });
        rows_.insert(pos, std::move(row));

        if (!complete())
            return Innovative{rows_.size()};
        Generation g;
        g.id = generation_id_;
        g.true_length = k_ * l_;
        for (const auto& r : rows_)
            g.symbols.push_back(r.data);
        return Complete{std::move(g)};
    }

    /// True when every stored row is in reduced row-echelon form.
    bool is_rref() const
    {
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            const auto& r = rows_[i];
            if (i > 0 && rows_[i - 1].pivot >= r.pivot)
                return false;
            if (r.coeffs[r.pivot] != 1)
                return false;
            for (std::size_t c = 0; c < r.pivot; ++c)
                if (r.coeffs[c] != 0)
                    return false;
            for (std::size_t j = 0; j < rows_.size(); ++j)
                if (j != i && rows_[j].coeffs[r.pivot] != 0)
                    return false;
        }
        return true;
    }

private:
    struct Row
    {
        std::size_t pivot;
        Bytes coeffs;
        Bytes data;
    };

    std::uint32_t generation_id_;
    std::size_t k_;
    std::size_t l_;
    std::vector<Row> rows_;
};

} // namespace fivegang::rlnc
