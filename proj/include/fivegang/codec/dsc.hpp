#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <boost/crc.hpp>

#include "fivegang/codec/bytes.hpp"
#include "fivegang/errors.hpp"

namespace fivegang::dsc {

using codec::Bits;
using codec::Bytes;

/// Uniform scalar quantizer over [clip_min, clip_max] with 2^bits levels.
/// Dequantization returns the bin midpoint, so the round-trip error of an
/// in-range sample is at most step/2.
struct Quantizer
{
    unsigned bits_per_sample = 8;
    double clip_min = -1.0;
    double clip_max = 1.0;

    std::uint64_t levels() const { return std::uint64_t{1} << bits_per_sample; }
    double step() const { return (clip_max - clip_min) / static_cast<double>(levels()); }

    void validate() const
    {
        if (!(clip_min < clip_max))
            throw std::invalid_argument("quantizer needs clip_min < clip_max");
        if (bits_per_sample < 1 || bits_per_sample > 32)
            throw std::invalid_argument("quantizer bits_per_sample must be in [1, 32]");
    }

    std::uint64_t level(double x) const
    {
        const double clipped = std::clamp(x, clip_min, clip_max);
        const auto l = static_cast<std::int64_t>(std::floor((clipped - clip_min) / step()));
        return static_cast<std::uint64_t>(std::clamp<std::int64_t>(l, 0, static_cast<std::int64_t>(levels() - 1)));
    }

    double value(std::uint64_t level) const { return clip_min + (static_cast<double>(level) + 0.5) * step(); }

    friend bool operator==(const Quantizer&, const Quantizer&) = default;
};

/// Quantizes each sample and emits its level MSB first.
inline Bits to_bits(std::span<const double> samples, const Quantizer& q)
{
    Bits out;
    out.reserve(samples.size() * q.bits_per_sample);
    for (double x : samples) {
        const auto l = q.level(x);
        for (int b = static_cast<int>(q.bits_per_sample) - 1; b >= 0; --b)
            out.push_back(static_cast<std::uint8_t>((l >> b) & 1u));
    }
    return out;
}

inline std::vector<std::uint64_t> levels_from_bits(const Bits& bits, unsigned bits_per_sample, std::size_t count)
{
    std::vector<std::uint64_t> levels(count, 0);
    for (std::size_t i = 0; i < count; ++i)
        for (unsigned b = 0; b < bits_per_sample; ++b)
            levels[i] = (levels[i] << 1) | bits[i * bits_per_sample + b];
    return levels;
}

/// Hamming(7,4) parity-check code. Column j of H is the 3-bit binary
/// representation of j + 1 (row 0 is the most significant bit), so the
/// syndrome of a single flip at position j is j + 1.
struct SyndromeCode
{
    static constexpr std::size_t block_bits = 7;
    static constexpr std::size_t data_bits = 4;
    static constexpr std::size_t syndrome_bits = 3;
    static constexpr std::size_t correctable_flips = 1;

    /// H[row][col] over GF(2).
    static constexpr std::uint8_t h(std::size_t row, std::size_t col)
    {
        return static_cast<std::uint8_t>(((col + 1) >> (syndrome_bits - 1 - row)) & 1u);
    }

    /// s = H x for a 7-bit chunk given as bits x[0..6].
    static std::uint8_t syndrome(std::span<const std::uint8_t> chunk)
    {
        std::uint8_t s = 0;
        for (std::size_t j = 0; j < block_bits; ++j)
            if (chunk[j])
                s ^= static_cast<std::uint8_t>(j + 1);
        return s;
    }

    /// Minimum-weight pattern with syndrome `s`, as a 7-bit mask where bit
    /// (6 - j) corresponds to chunk position j.
    static std::uint8_t coset_leader(std::uint8_t s)
    {
        return s == 0 ? 0 : static_cast<std::uint8_t>(1u << (block_bits - s));
    }
};

inline std::uint32_t crc32(const Bits& bits)
{
    const Bytes packed = codec::pack_bits(bits);
    boost::crc_32_type crc;
    crc.process_bytes(packed.data(), packed.size());
    return crc.checksum();
}

/// Syndromes of one sensor block plus the header needed to interpret them.
/// `checksum` is a CRC-32 of the quantized bitstream; it lets the decoder
/// notice side information that disagrees beyond the code's radius.
struct DscBlock
{
    std::vector<std::uint8_t> syndromes; // one 3-bit value per chunk
    std::size_t chunk_count = 0;
    std::size_t pad_bits = 0;
    Quantizer quantizer;
    std::uint32_t checksum = 0;

    std::size_t bitstream_bits() const { return chunk_count * SyndromeCode::block_bits - pad_bits; }
    std::size_t sample_count() const { return bitstream_bits() / quantizer.bits_per_sample; }

    /// chunk_count u16 BE, pad_bits u8, bits_per_sample u8, clip_min f64 LE,
    /// clip_max f64 LE, crc32 u32 BE, then syndromes packed 3 bits each,
    /// most significant bit first.
    Bytes serialize() const
    {
        Bytes out;
        codec::ByteWriter w(out);
        w.u16(static_cast<std::uint16_t>(chunk_count));
        w.u8(static_cast<std::uint8_t>(pad_bits));
        w.u8(static_cast<std::uint8_t>(quantizer.bits_per_sample));
        w.f64(quantizer.clip_min);
        w.f64(quantizer.clip_max);
        w.u32(checksum);
        Bits bits;
        bits.reserve(syndromes.size() * 3);
        for (auto s : syndromes)
            for (int b = 2; b >= 0; --b)
                bits.push_back(static_cast<std::uint8_t>((s >> b) & 1u));
        w.raw(codec::pack_bits(bits));
        return out;
    }

    static DscBlock parse(codec::ByteReader& r)
    {
        DscBlock blk;
        blk.chunk_count = r.u16();
        blk.pad_bits = r.u8();
        blk.quantizer.bits_per_sample = r.u8();
        blk.quantizer.clip_min = r.f64();
        blk.quantizer.clip_max = r.f64();
        blk.checksum = r.u32();
        const std::size_t nbits = blk.chunk_count * 3;
        const Bits bits = codec::unpack_bits(r.raw((nbits + 7) / 8), nbits);
        blk.syndromes.resize(blk.chunk_count);
        for (std::size_t i = 0; i < blk.chunk_count; ++i)
            blk.syndromes[i] = static_cast<std::uint8_t>(bits[3 * i] << 2 | bits[3 * i + 1] << 1 | bits[3 * i + 2]);
        if (blk.pad_bits >= SyndromeCode::block_bits && blk.chunk_count > 0)
            throw MalformedPacket("pad_bits out of range");
        return blk;
    }

    static DscBlock parse(std::span<const std::uint8_t> wire)
    {
        codec::ByteReader r(wire);
        auto blk = parse(r);
        if (r.remaining() != 0)
            throw MalformedPacket("trailing bytes after DSC block");
        return blk;
    }
};

/// Splits a bitstream into zero-padded 7-bit chunks and keeps only each
/// chunk's syndrome.
inline DscBlock encode_bits(const Bits& bits, const Quantizer& q)
{
    DscBlock blk;
    blk.quantizer = q;
    blk.chunk_count = (bits.size() + SyndromeCode::block_bits - 1) / SyndromeCode::block_bits;
    blk.pad_bits = blk.chunk_count * SyndromeCode::block_bits - bits.size();
    blk.checksum = crc32(bits);
    Bits padded = bits;
    padded.resize(blk.chunk_count * SyndromeCode::block_bits, 0);
    blk.syndromes.reserve(blk.chunk_count);
    for (std::size_t c = 0; c < blk.chunk_count; ++c)
        blk.syndromes.push_back(
            SyndromeCode::syndrome(std::span(padded).subspan(c * SyndromeCode::block_bits, SyndromeCode::block_bits)));
    return blk;
}

/// Quantizes `samples` (clipping out-of-range values) and syndrome-encodes
/// the result. Takes no data from any other sensor.
inline DscBlock encode(std::span<const double> samples, const Quantizer& q, const SyndromeCode& = {})
{
    q.validate();
    return encode_bits(to_bits(samples, q), q);
}

struct BitDecode
{
    Bits bits;                               // best estimate of the source bitstream
    std::vector<std::size_t> corrected;      // chunks where the side info was flipped
    bool checksum_ok = false;
};

/// Coset decoding of every chunk against side-information bits. With a
/// single-error-correcting code the implied distance per chunk is at most
/// one; disagreement beyond that is caught by the block checksum.
inline BitDecode decode_bits(const DscBlock& blk, const Bits& side_bits)
{
    if (side_bits.size() != blk.bitstream_bits())
        throw LengthMismatch("side information has " + std::to_string(side_bits.size()) + " bits, block has " +
                             std::to_string(blk.bitstream_bits()));
    Bits y = side_bits;
    y.resize(blk.chunk_count * SyndromeCode::block_bits, 0);
    BitDecode out;
    for (std::size_t c = 0; c < blk.chunk_count; ++c) {
        auto chunk = std::span(y).subspan(c * SyndromeCode::block_bits, SyndromeCode::block_bits);
        const std::uint8_t diff = blk.syndromes[c] ^ SyndromeCode::syndrome(chunk);
        const std::uint8_t e = SyndromeCode::coset_leader(diff);
        if (e != 0) {
            out.corrected.push_back(c);
            for (std::size_t j = 0; j < SyndromeCode::block_bits; ++j)
                if (e & (1u << (SyndromeCode::block_bits - 1 - j)))
                    chunk[j] ^= 1u;
        }
    }
    y.resize(blk.bitstream_bits());
    out.checksum_ok = crc32(y) == blk.checksum;
    out.bits = std::move(y);
    return out;
}

struct Reconstructed
{
    std::vector<double> samples;
    std::vector<std::uint64_t> levels;
};

/// The side information disagrees with the source by more than the code can
/// absorb. `suspect_chunks` lists the chunks whose decoding applied a
/// correction; the first one is reported as `chunk_index`.
struct CorrelationViolation
{
    std::size_t chunk_index = 0;
    std::vector<std::size_t> suspect_chunks;
};

using DecodeResult = std::variant<Reconstructed, CorrelationViolation>;

inline DecodeResult decode(const DscBlock& blk, std::span<const double> side_info, const Quantizer& q,
                           const SyndromeCode& = {})
{
    if (side_info.size() != blk.sample_count())
        throw LengthMismatch("side information has " + std::to_string(side_info.size()) + " samples, block has " +
                             std::to_string(blk.sample_count()));
    if (!(q == blk.quantizer))
        throw LengthMismatch("quantizer differs from the one recorded in the block header");
    auto dec = decode_bits(blk, to_bits(side_info, q));
    if (!dec.checksum_ok) {
        CorrelationViolation v;
        v.suspect_chunks = dec.corrected;
        if (v.suspect_chunks.empty())
            for (std::size_t c = 0; c < blk.chunk_count; ++c)
                v.suspect_chunks.push_back(c);
        v.chunk_index = v.suspect_chunks.front();
        return v;
    }
    Reconstructed r;
    r.levels = levels_from_bits(dec.bits, q.bits_per_sample, blk.sample_count());
    r.samples.reserve(r.levels.size());
    for (auto l : r.levels)
        r.samples.push_back(q.value(l));
    return r;
}

/// Quantized samples sent in full. Used by sensors that act as side
/// information for their neighbours.
struct RawBlock
{
    Quantizer quantizer;
    std::vector<std::uint64_t> levels;

    /// sample_count u16 BE, bits_per_sample u8, clip_min f64 LE, clip_max
    /// f64 LE, then levels packed MSB first.
    Bytes serialize() const
    {
        Bytes out;
        codec::ByteWriter w(out);
        w.u16(static_cast<std::uint16_t>(levels.size()));
        w.u8(static_cast<std::uint8_t>(quantizer.bits_per_sample));
        w.f64(quantizer.clip_min);
        w.f64(quantizer.clip_max);
        Bits bits;
        for (auto l : levels)
            for (int b = static_cast<int>(quantizer.bits_per_sample) - 1; b >= 0; --b)
                bits.push_back(static_cast<std::uint8_t>((l >> b) & 1u));
        w.raw(codec::pack_bits(bits));
        return out;
    }

    static RawBlock parse(codec::ByteReader& r)
    {
        RawBlock blk;
        const std::size_t count = r.u16();
        blk.quantizer.bits_per_sample = r.u8();
        blk.quantizer.clip_min = r.f64();
        blk.quantizer.clip_max = r.f64();
        const std::size_t nbits = count * blk.quantizer.bits_per_sample;
        blk.levels = levels_from_bits(codec::unpack_bits(r.raw((nbits + 7) / 8), nbits),
                                      blk.quantizer.bits_per_sample, count);
        return blk;
    }

    static RawBlock quantize(std::span<const double> samples, const Quantizer& q)
    {
        q.validate();
        RawBlock blk;
        blk.quantizer = q;
        blk.levels.reserve(samples.size());
        for (double x : samples)
            blk.levels.push_back(q.level(x));
        return blk;
    }

    std::vector<double> dequantize() const
    {
        std::vector<double> out;
        out.reserve(levels.size());
        for (auto l : levels)
            out.push_back(quantizer.value(l));
        return out;
    }
};

} // namespace fivegang::dsc
