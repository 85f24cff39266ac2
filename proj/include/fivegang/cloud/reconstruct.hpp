#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "fivegang/codec/cs.hpp"
#include "fivegang/codec/dsc.hpp"
#include "fivegang/codec/rlnc.hpp"
#include "fivegang/errors.hpp"
#include "fivegang/node/pipeline.hpp"

namespace fivegang::cloud {

/// What the cloud knows about one sensor stream: the sender's pipeline
/// settings and, for syndrome-coded streams, which stream supplies the side
/// information.
struct StreamConfig
{
    std::string id;
    node::PipelineConfig pipeline;
    std::optional<std::string> side_info;
};

struct DegradedChunk
{
    std::size_t channel = 0;
    std::size_t chunk = 0;

    friend bool operator==(const DegradedChunk&, const DegradedChunk&) = default;
};

/// Output of a successful decode. `signal[i]` is the window of channel
/// `channels[i]`; `levels[i]` are its quantized CS measurements, kept so the
/// stream can act as side information for a neighbour.
struct Reconstruction
{
    std::uint32_t window = 0;
    std::int64_t start_us = 0;
    std::vector<std::size_t> channels;
    std::vector<std::vector<double>> signal;
    std::vector<std::vector<std::uint64_t>> levels;
    std::vector<DegradedChunk> degraded;

    const std::vector<std::uint64_t>* levels_for(std::size_t channel) const
    {
        for (std::size_t i = 0; i < channels.size(); ++i)
            if (channels[i] == channel)
                return &levels[i];
        return nullptr;
    }

    /// Channels concatenated in order, the shape the anomaly model sees.
    std::vector<double> flatten() const
    {
        std::vector<double> out;
        for (const auto& s : signal)
            out.insert(out.end(), s.begin(), s.end());
        return out;
    }

    friend bool operator==(const Reconstruction&, const Reconstruction&) = default;
};

struct Incomplete
{
    std::size_t rank = 0;
};

using ReconstructResult = std::variant<Reconstruction, Incomplete>;

/// Counts how often each stage ran; stage 2 may only run after stage 1
/// completed, and stage 3 only on fully decoded or substituted chunks.
struct StageCounters
{
    std::uint64_t network_decodes = 0;
    std::uint64_t network_complete = 0;
    std::uint64_t source_decodes = 0;
    std::uint64_t cs_recoveries = 0;
    std::uint64_t degraded_chunks = 0;
    std::uint64_t substitutions = 0;

    nlohmann::json to_json() const
    {
        return {{"network_decodes", network_decodes}, {"network_complete", network_complete},
                {"source_decodes", source_decodes},   {"cs_recoveries", cs_recoveries},
                {"degraded_chunks", degraded_chunks}, {"substitutions", substitutions}};
    }
};

namespace detail {

/// DSC decode of one channel. Chunks that fail the checksum are replaced by
/// the side information's chunk and reported.
inline std::vector<std::uint64_t> source_decode(const dsc::DscBlock& blk, const std::vector<std::uint64_t>& side_levels,
                                                std::size_t channel, std::vector<DegradedChunk>& degraded,
                                                StageCounters& counters)
{
    const auto& q = blk.quantizer;
    if (side_levels.size() != blk.sample_count())
        throw ConfigMismatch("side information has " + std::to_string(side_levels.size()) + " samples, block has " +
                             std::to_string(blk.sample_count()));
    dsc::Bits side_bits;
    side_bits.reserve(side_levels.size() * q.bits_per_sample);
    for (auto l : side_levels)
        for (int b = static_cast<int>(q.bits_per_sample) - 1; b >= 0; --b)
            side_bits.push_back(static_cast<std::uint8_t>((l >> b) & 1u));

    auto dec = dsc::decode_bits(blk, side_bits);
    if (!dec.checksum_ok) {
        std::vector<std::size_t> suspects = dec.corrected;
        if (suspects.empty())
            for (std::size_t c = 0; c < blk.chunk_count; ++c)
                suspects.push_back(c);
        constexpr std::size_t w = dsc::SyndromeCode::block_bits;
        for (auto c : suspects) {
            for (std::size_t j = c * w; j < std::min((c + 1) * w, dec.bits.size()); ++j)
                dec.bits[j] = side_bits[j];
            degraded.push_back({channel, c});
        }
        counters.degraded_chunks += suspects.size();
        ++counters.substitutions;
    }
    return dsc::levels_from_bits(dec.bits, q.bits_per_sample, blk.sample_count());
}

} // namespace detail

/// Residual norm expected from quantization alone: m samples of uniform
/// error over one step.
inline double quantization_floor(const node::PipelineConfig& cfg)
{
    return cfg.quantizer.step() * std::sqrt(static_cast<double>(cfg.measurements()) / 12.0);
}

/// Three-stage inverse of the sensor pipeline: network decode, then
/// distributed source decode, then sparse recovery.
/// `side_info` is the provider's reconstruction of the same window and is
/// required for syndrome-coded streams.
inline ReconstructResult reconstruct(const StreamConfig& cfg, std::span<const rlnc::CodedPacket> packets,
                                     const Reconstruction* side_info, StageCounters& counters)
{
    const auto& p = cfg.pipeline;
    if (packets.empty())
        return Incomplete{0};
    const std::size_t k = p.rlnc.k;
    const std::size_t l = p.symbol_length();
    for (const auto& pkt : packets)
        if (pkt.coefficients.size() != k || pkt.payload.size() != l)
            throw ConfigMismatch("stream " + cfg.id + ": packet framing K=" + std::to_string(pkt.coefficients.size()) +
                                 " L=" + std::to_string(pkt.payload.size()) + ", configured K=" + std::to_string(k) +
                                 " L=" + std::to_string(l));

    ++counters.network_decodes;
    rlnc::Decoder dec(packets.front().generation_id, k, l);
    std::optional<rlnc::Generation> gen;
    for (const auto& pkt : packets) {
        auto r = dec.insert(pkt);
        if (auto* c = std::get_if<rlnc::Complete>(&r)) {
            gen = std::move(c->generation);
            break;
        }
    }
    if (!gen)
        return Incomplete{dec.rank()};
    ++counters.network_complete;

    node::WindowPayload payload;
    try {
        payload = node::WindowPayload::parse(gen->unframe());
    } catch (const MalformedPacket& e) {
        throw ConfigMismatch("stream " + cfg.id + ": " + e.what());
    }
    if (payload.blocks.size() != p.channels.size())
        throw ConfigMismatch("stream " + cfg.id + ": channel count differs from configuration");

    Reconstruction out;
    out.window = payload.window;
    out.start_us = payload.start_us;
    const auto mat = p.matrix();
    const double tol = std::max(p.cs.residual_tol, quantization_floor(p));

    for (std::size_t i = 0; i < payload.blocks.size(); ++i) {
        const auto& b = payload.blocks[i];
        if (b.channel != p.channels[i] || b.mode() != p.dsc_mode)
            throw ConfigMismatch("stream " + cfg.id + ": block " + std::to_string(i) + " disagrees with configuration");

        std::vector<std::uint64_t> levels;
        dsc::Quantizer q;
        if (const auto* raw = std::get_if<dsc::RawBlock>(&b.block)) {
            levels = raw->levels;
            q = raw->quantizer;
        } else {
            const auto& blk = std::get<dsc::DscBlock>(b.block);
            const auto* side = side_info ? side_info->levels_for(b.channel) : nullptr;
            if (!side)
                throw ConfigMismatch("stream " + cfg.id + ": no side information for channel " +
                                     std::to_string(b.channel));
            ++counters.source_decodes;
            levels = detail::source_decode(blk, *side, b.channel, out.degraded, counters);
            q = blk.quantizer;
        }
        if (!(q == p.quantizer) || levels.size() != p.measurements())
            throw ConfigMismatch("stream " + cfg.id + ": quantizer or measurement count differs from configuration");

        std::vector<double> y;
        y.reserve(levels.size());
        for (auto lv : levels)
            y.push_back(q.value(lv));

        std::vector<double> x;
        if (p.cs.enabled) {
            cs::CsCodeword cw;
            cw.measurements = std::move(y);
            cw.m = mat.m();
            cw.n = mat.n();
            cw.seed = mat.seed();
            cw.identity_matrix = mat.is_identity();
            cw.basis = p.cs.basis;
            cw.true_n = p.window_n;
            ++counters.cs_recoveries;
            x = cs::decode(cw, p.cs.sparsity, tol).signal;
        } else {
            x = std::move(y);
        }
        out.channels.push_back(b.channel);
        out.signal.push_back(std::move(x));
        out.levels.push_back(std::move(levels));
    }
    return out;
}

/// ||a - b|| / ||b|| over all entries; 0 when both are zero.
inline double relative_l2(std::span<const double> estimate, std::span<const double> truth)
{
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = estimate[i] - truth[i];
        num += d * d;
        den += truth[i] * truth[i];
    }
    if (den == 0.0)
        return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return std::sqrt(num / den);
}

} // namespace fivegang::cloud
