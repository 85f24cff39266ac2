#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "fivegang/errors.hpp"

namespace fivegang::codec {

using Bytes = std::vector<std::uint8_t>;

/// Appends fixed-width fields to a byte vector. Integers are big-endian,
/// doubles are IEEE-754 little-endian.
class ByteWriter
{
public:
    explicit ByteWriter(Bytes& out) : out_(out) {}

    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) { be(v, 2); }
    void u32(std::uint32_t v) { be(v, 4); }
    void u64(std::uint64_t v) { be(v, 8); }

    void f64(double v)
    {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i)
            out_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }

    void raw(std::span<const std::uint8_t> data) { out_.insert(out_.end(), data.begin(), data.end()); }

private:
    void be(std::uint64_t v, int width)
    {
        for (int i = width - 1; i >= 0; --i)
            out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    Bytes& out_;
};

class ByteReader
{
public:
    explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(be(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(be(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(be(4)); }
    std::uint64_t u64() { return be(8); }

    double f64()
    {
        need(8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i)
            bits |= std::uint64_t{in_[pos_ + i]} << (8 * i);
        pos_ += 8;
        return std::bit_cast<double>(bits);
    }

    std::span<const std::uint8_t> raw(std::size_t n)
    {
        need(n);
        auto s = in_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const { return in_.size() - pos_; }
    std::size_t position() const { return pos_; }

private:
    void need(std::size_t n) const
    {
        if (in_.size() - pos_ < n)
            throw MalformedPacket("truncated input: need " + std::to_string(n) + " bytes at offset " +
                                  std::to_string(pos_));
    }

    std::uint64_t be(int width)
    {
        need(static_cast<std::size_t>(width));
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i)
            v = (v << 8) | in_[pos_ + static_cast<std::size_t>(i)];
        pos_ += static_cast<std::size_t>(width);
        return v;
    }

    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

/// Bit vector with MSB-first packing into bytes.
using Bits = std::vector<std::uint8_t>; // one element per bit, values 0/1

inline Bytes pack_bits(const Bits& bits)
{
    Bytes out((bits.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i])
            out[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
    return out;
}

inline Bits unpack_bits(std::span<const std::uint8_t> bytes, std::size_t bit_count)
{
    if (bytes.size() * 8 < bit_count)
        throw MalformedPacket("bit field shorter than declared length");
    Bits out(bit_count);
    for (std::size_t i = 0; i < bit_count; ++i)
        out[i] = (bytes[i / 8] >> (7 - i % 8)) & 1u;
    return out;
}

} // namespace fivegang::codec
