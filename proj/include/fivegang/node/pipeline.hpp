#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fivegang/codec/bytes.hpp"
#include "fivegang/codec/cs.hpp"
#include "fivegang/codec/dsc.hpp"
#include "fivegang/codec/rlnc.hpp"
#include "fivegang/errors.hpp"
#include "fivegang/node/battery.hpp"
#include "fivegang/node/signal.hpp"

namespace fivegang::node {

using codec::Bytes;

/// How a channel's quantized measurements travel: in full, or as DSC
/// syndromes to be decoded against another sensor's stream.
enum class DscMode : std::uint8_t
{
    raw = 0,
    syndrome = 1,
};

struct CsStage
{
    bool enabled = true;
    std::size_t m = 40;
    std::uint64_t seed = 1;
    cs::BasisKind basis = cs::BasisKind::dct2;
    std::size_t sparsity = 8;      // OMP atom budget on the cloud side
    double residual_tol = 1e-9;
};

struct RlncStage
{
    std::size_t k = 8;
    double redundancy = 1.25;
};

struct PipelineConfig
{
    std::size_t window_n = 64;
    CsStage cs;
    dsc::Quantizer quantizer{16, -128.0, 128.0};
    DscMode dsc_mode = DscMode::raw;
    std::vector<std::size_t> channels{0, 1, 2, 3, 4, 5, 6, 7, 8};
    RlncStage rlnc;

    std::size_t measurements() const { return cs.enabled ? cs.m : window_n; }

    cs::MeasurementMatrix matrix() const
    {
        return cs.enabled ? cs::MeasurementMatrix::bernoulli(cs.m, window_n, cs.seed)
                          : cs::MeasurementMatrix::identity(window_n);
    }

    /// Coded packets emitted per generation: redundancy x K, rounded up.
    std::size_t coded_packets() const
    {
        const double x = rlnc.redundancy * static_cast<double>(rlnc.k);
        const double r = std::round(x);
        return static_cast<std::size_t>(std::abs(x - r) < 1e-9 ? r : std::ceil(x));
    }

    std::size_t block_bytes() const
    {
        const std::size_t m = measurements();
        const std::size_t bits = m * quantizer.bits_per_sample;
        if (dsc_mode == DscMode::raw)
            return 2 + 1 + 16 + (bits + 7) / 8;
        const std::size_t chunks = (bits + dsc::SyndromeCode::block_bits - 1) / dsc::SyndromeCode::block_bits;
        return 2 + 1 + 1 + 16 + 4 + (chunks * 3 + 7) / 8;
    }

    /// Bytes of a serialized window payload under this configuration.
    std::size_t payload_bytes() const { return 4 + 4 + 8 + 1 + channels.size() * (2 + block_bytes()); }

    std::size_t symbol_length() const { return std::max<std::size_t>(1, (payload_bytes() + rlnc.k - 1) / rlnc.k); }

    void validate() const
    {
        if (window_n == 0 || window_n > 0xFFFF)
            throw std::invalid_argument("window_n must lie in [1, 65535]");
        if (cs.enabled && (cs.m == 0 || cs.m > window_n))
            throw std::invalid_argument("cs.m must lie in [1, window_n]");
        if (cs.enabled && (cs.sparsity == 0 || cs.sparsity > cs.m))
            throw std::invalid_argument("cs.sparsity must lie in [1, m]");
        quantizer.validate();
        if (rlnc.k == 0 || rlnc.k > 0xFFFF)
            throw std::invalid_argument("rlnc.k must lie in [1, 65535]");
        if (!(rlnc.redundancy >= 1.0))
            throw std::invalid_argument("rlnc.redundancy must be >= 1");
        if (channels.empty() || channels.size() > kChannels)
            throw std::invalid_argument("channel selection must name 1..9 channels");
        for (auto c : channels)
            if (c >= kChannels)
                throw std::invalid_argument("channel index out of range");
    }
};

struct ChannelBlock
{
    std::size_t channel = 0;
    std::variant<dsc::RawBlock, dsc::DscBlock> block;

    DscMode mode() const { return std::holds_alternative<dsc::RawBlock>(block) ? DscMode::raw : DscMode::syndrome; }
};

/// Everything one node sends for one window. Wire layout:
/// body_length u32, window u32, start_us u64, channel_count u8, then per
/// channel: channel u8, mode u8, block. body_length counts the bytes after
/// itself, so zero padding added by RLNC framing can be stripped.
struct WindowPayload
{
    std::uint32_t window = 0;
    std::int64_t start_us = 0;
    std::vector<ChannelBlock> blocks;

    Bytes serialize() const
    {
        Bytes body;
        codec::ByteWriter w(body);
        w.u32(window);
        w.u64(static_cast<std::uint64_t>(start_us));
        w.u8(static_cast<std::uint8_t>(blocks.size()));
        for (const auto& b : blocks) {
            w.u8(static_cast<std::uint8_t>(b.channel));
            w.u8(static_cast<std::uint8_t>(b.mode()));
            w.raw(std::visit([](const auto& blk) { return blk.serialize(); }, b.block));
        }
        Bytes out;
        codec::ByteWriter h(out);
        h.u32(static_cast<std::uint32_t>(body.size()));
        h.raw(body);
        return out;
    }

    static WindowPayload parse(std::span<const std::uint8_t> wire)
    {
        codec::ByteReader outer(wire);
        const std::size_t len = outer.u32();
        codec::ByteReader r(outer.raw(len));
        WindowPayload p;
        p.window = r.u32();
        p.start_us = static_cast<std::int64_t>(r.u64());
        const std::size_t count = r.u8();
        for (std::size_t i = 0; i < count; ++i) {
            ChannelBlock b;
            b.channel = r.u8();
            if (b.channel >= kChannels)
                throw MalformedPacket("channel index " + std::to_string(b.channel));
            const auto mode = r.u8();
            if (mode == static_cast<std::uint8_t>(DscMode::raw))
                b.block = dsc::RawBlock::parse(r);
            else if (mode == static_cast<std::uint8_t>(DscMode::syndrome))
                b.block = dsc::DscBlock::parse(r);
            else
                throw MalformedPacket("unknown channel mode " + std::to_string(mode));
            p.blocks.push_back(std::move(b));
        }
        if (r.remaining() != 0)
            throw MalformedPacket("trailing bytes in window payload");
        return p;
    }
};

/// Samples of one channel across a window of frames.
inline std::vector<double> channel_samples(std::span<const SensorFrame> frames, std::size_t ch)
{
    std::vector<double> out;
    out.reserve(frames.size());
    for (const auto& f : frames)
        out.push_back(f.channel(ch));
    return out;
}

/// CS -> quantize -> DSC on every selected channel. Reads only the node's
/// own frames.
inline WindowPayload encode_window(std::span<const SensorFrame> frames, const PipelineConfig& cfg,
                                   std::uint32_t window)
{
    if (frames.size() != cfg.window_n)
        throw DimensionMismatch("window has " + std::to_string(frames.size()) + " frames, expected " +
                                std::to_string(cfg.window_n));
    const auto mat = cfg.matrix();
    WindowPayload p;
    p.window = window;
    p.start_us = frames.front().t.us;
    for (auto ch : cfg.channels) {
        const auto x = channel_samples(frames, ch);
        const auto cw = cs::encode(x, mat, cfg.cs.basis);
        ChannelBlock b;
        b.channel = ch;
        if (cfg.dsc_mode == DscMode::raw)
            b.block = dsc::RawBlock::quantize(cw.measurements, cfg.quantizer);
        else
            b.block = dsc::encode(cw.measurements, cfg.quantizer);
        p.blocks.push_back(std::move(b));
    }
    return p;
}

/// Full encode of one window into coded packets. Each emitted packet is
/// charged to the battery; a node that runs dry mid-window stops emitting.
inline std::vector<rlnc::CodedPacket> pipeline_encode(std::span<const SensorFrame> frames, const PipelineConfig& cfg,
                                                      std::uint32_t window, BatteryState& battery,
                                                      sim::RngStream& rng, sim::SimTime now)
{
    battery.accrue_idle(now);
    if (battery.depleted())
        throw BatteryDepleted("encode requested on a depleted node");
    const Bytes payload = encode_window(frames, cfg, window).serialize();
    const auto gen = rlnc::Generation::frame(window, payload, cfg.rlnc.k);
    std::vector<rlnc::CodedPacket> out;
    const std::size_t count = cfg.coded_packets();
    out.reserve(count);
    for (std::size_t i = 0; i < count && !battery.depleted(); ++i) {
        auto pkt = rlnc::encode(gen, rng);
        battery.charge_tx(now, 8 + pkt.coefficients.size() + pkt.payload.size());
        out.push_back(std::move(pkt));
    }
    return out;
}

/// Mesh relay: buffers coded packets per (stream, generation) and emits a
/// recoded combination every `recode_every` receipts.
class Relay
{
public:
    explicit Relay(std::size_t recode_every = 1, std::size_t max_generations = 64)
        : recode_every_(std::max<std::size_t>(1, recode_every)), max_generations_(max_generations)
    {
    }

    std::optional<rlnc::CodedPacket> forward(const std::string& stream, const rlnc::CodedPacket& pkt,
                                             sim::RngStream& rng)
    {
        const Key key{stream, pkt.generation_id};
        auto it = buffers_.find(key);
        if (it == buffers_.end()) {
            it = buffers_.emplace(key, Buffer{}).first;
            order_.push_back(key);
            while (order_.size() > max_generations_) {
                buffers_.erase(order_.front());
                order_.pop_front();
            }
        }
        auto& buf = it->second;
        buf.packets.push_back(pkt);
        if (++buf.receipts % recode_every_ != 0)
            return std::nullopt;
        return rlnc::recode(buf.packets, rng);
    }

    std::size_t buffered(const std::string& stream, std::uint32_t generation) const
    {
        auto it = buffers_.find(Key{stream, generation});
        return it == buffers_.end() ? 0 : it->second.packets.size();
    }

private:
    using Key = std::pair<std::string, std::uint32_t>;
    struct Buffer
    {
        std::vector<rlnc::CodedPacket> packets;
        std::size_t receipts = 0;
    };
    std::size_t recode_every_;
    std::size_t max_generations_;
    std::map<Key, Buffer> buffers_;
    std::deque<Key> order_;
};

} // namespace fivegang::node
