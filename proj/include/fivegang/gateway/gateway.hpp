#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <type_traits>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "fivegang/codec/bytes.hpp"
#include "fivegang/errors.hpp"
#include "fivegang/sim/time.hpp"

namespace fivegang::gateway {

using codec::Bytes;

enum class AdapterKind
{
    analog_4_20ma,
    fieldbus,
    ethernet,
    ble,
};

inline std::string_view to_string(AdapterKind k)
{
    switch (k) {
    case AdapterKind::analog_4_20ma: return "analog_4_20ma";
    case AdapterKind::fieldbus: return "fieldbus";
    case AdapterKind::ethernet: return "ethernet";
    case AdapterKind::ble: return "ble";
    }
    return "?";
}

inline std::optional<AdapterKind> adapter_kind_from(std::string_view s)
{
    for (auto k : {AdapterKind::analog_4_20ma, AdapterKind::fieldbus, AdapterKind::ethernet, AdapterKind::ble})
        if (to_string(k) == s)
            return k;
    return std::nullopt;
}

struct Reading
{
    std::uint32_t adapter = 0;
    std::int64_t t_us = 0;
    std::uint16_t channel = 0;
    std::int64_t value = 0;

    friend bool operator==(const Reading&, const Reading&) = default;
};

/// Fixed-width size of one reading: u32 + i64 + u16 + i64.
inline constexpr std::size_t kRawRecordBytes = 22;

/// Readings in (adapter, channel, t, value) order.
inline bool batch_order(const Reading& a, const Reading& b)
{
    return std::tie(a.adapter, a.channel, a.t_us, a.value) < std::tie(b.adapter, b.channel, b.t_us, b.value);
}

/// Raw fixed-width encoding, the uncompressed baseline.
inline Bytes encode_raw(std::span<const Reading> records)
{
    Bytes out;
    codec::ByteWriter w(out);
    for (const auto& r : records) {
        w.u32(r.adapter);
        w.u64(static_cast<std::uint64_t>(r.t_us));
        w.u16(r.channel);
        w.u64(static_cast<std::uint64_t>(r.value));
    }
    return out;
}

namespace varint {

inline std::uint64_t zigzag(std::int64_t v)
{
    return (static_cast<std::uint64_t>(v) << 1) ^ static_cast<std::uint64_t>(v >> 63);
}

inline std::int64_t unzigzag(std::uint64_t u)
{
    return static_cast<std::int64_t>(u >> 1) ^ -static_cast<std::int64_t>(u & 1u);
}

inline void put(Bytes& out, std::uint64_t v)
{
    while (v >= 0x80) {
        out.push_back(static_cast<std::uint8_t>(v | 0x80));
        v >>= 7;
    }
    out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint64_t get(codec::ByteReader& r)
{
    std::uint64_t v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
        const std::uint8_t b = r.u8();
        v |= static_cast<std::uint64_t>(b & 0x7F) << shift;
        if (!(b & 0x80))
            return v;
    }
    throw MalformedPacket("varint longer than 10 bytes");
}

} // namespace varint

inline constexpr std::uint8_t kFlagAlarm = 0x01;

/// One upload. Header: gateway u32, seq u32, created_at u64, record_count
/// u32, flags u8 (all big-endian). Then, per record in batch order, the
/// differences to the previous record (all zero before the first):
/// adapter as a plain varint, channel, t and value as zig-zag varints.
struct Batch
{
    std::uint32_t gateway_id = 0;
    std::uint32_t seq = 0;
    std::int64_t created_at_us = 0;
    std::uint8_t flags = 0;
    std::vector<Reading> records; // batch order

    Bytes serialize() const
    {
        Bytes out;
        codec::ByteWriter w(out);
        w.u32(gateway_id);
        w.u32(seq);
        w.u64(static_cast<std::uint64_t>(created_at_us));
        w.u32(static_cast<std::uint32_t>(records.size()));
        w.u8(flags);
        Reading prev{};
        for (const auto& r : records) {
            varint::put(out, r.adapter - prev.adapter);
            varint::put(out, varint::zigzag(static_cast<std::int64_t>(r.channel) - prev.channel));
            varint::put(out, varint::zigzag(r.t_us - prev.t_us));
            varint::put(out, varint::zigzag(r.value - prev.value));
            prev = r;
        }
        return out;
    }

    static Batch parse(std::span<const std::uint8_t> wire)
    {
        codec::ByteReader r(wire);
        Batch b;
        b.gateway_id = r.u32();
        b.seq = r.u32();
        b.created_at_us = static_cast<std::int64_t>(r.u64());
        const std::size_t count = r.u32();
        b.flags = r.u8();
        if (count > r.remaining())
            throw MalformedPacket("record count exceeds payload");
        Reading prev{};
        b.records.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
            Reading cur;
            cur.adapter = static_cast<std::uint32_t>(prev.adapter + varint::get(r));
            cur.channel = static_cast<std::uint16_t>(prev.channel + varint::unzigzag(varint::get(r)));
            cur.t_us = prev.t_us + varint::unzigzag(varint::get(r));
            cur.value = prev.value + varint::unzigzag(varint::get(r));
            b.records.push_back(cur);
            prev = cur;
        }
        if (r.remaining() != 0)
            throw MalformedPacket("trailing bytes after batch");
        return b;
    }
};

struct Online
{
};
struct Interval
{
    std::int64_t period_us = 1'000'000;
};
/// Wakes when the buffer holds at least `byte_threshold` bytes, or when an
/// alarm is pending and `on_alarm` is set.
struct Sleep
{
    std::size_t byte_threshold = 1'000'000;
    bool on_alarm = true;
};
using Mode = std::variant<Online, Interval, Sleep>;

inline std::string mode_name(const Mode& m)
{
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Online>)
                return "online";
            else if constexpr (std::is_same_v<T, Interval>)
                return "interval";
            else
                return "sleep";
        },
        m);
}

enum class Trigger
{
    ingest,
    timer,
};

struct GatewayConfig
{
    std::uint32_t id = 0;
    std::size_t max_buffer_bytes = 1 << 20;
    Mode mode = Online{};
    std::size_t security_overhead_bytes = 0; // fixed per-batch framing for transport security
};

/// On-site buffer plus the mode logic that decides when to upload.
class Gateway
{
public:
    explicit Gateway(GatewayConfig cfg = {}) : cfg_(std::move(cfg)) {}

    const GatewayConfig& config() const { return cfg_; }

    void register_adapter(std::uint32_t id, AdapterKind kind) { adapters_[id] = kind; }

    std::size_t ingest(std::uint32_t adapter_id, Reading r)
    {
        if (!adapters_.count(adapter_id))
            throw UnknownAdapter("adapter " + std::to_string(adapter_id));
        r.adapter = adapter_id;
        buffer_.push_back(r);
        while (buffered_bytes() > cfg_.max_buffer_bytes && !buffer_.empty()) {
            buffer_.pop_front();
            ++evictions_;
        }
        return buffer_.size();
    }

    void raise_alarm() { alarm_ = true; }

    /// Mode changes apply from `now`; interval phases restart there.
    void set_mode(Mode m, sim::SimTime now)
    {
        cfg_.mode = std::move(m);
        mode_entered_ = now;
    }

    bool wants_flush(sim::SimTime now, Trigger trigger) const
    {
        if (buffer_.empty())
            return false;
        if (std::holds_alternative<Online>(cfg_.mode))
            return trigger == Trigger::ingest;
        if (const auto* iv = std::get_if<Interval>(&cfg_.mode)) {
            const auto since = now - mode_entered_;
            return trigger == Trigger::timer && since > 0 && since % iv->period_us == 0;
        }
        const auto& s = std::get<Sleep>(cfg_.mode);
        return buffered_bytes() >= s.byte_threshold || (s.on_alarm && alarm_);
    }

    /// Batch of everything buffered if the mode says so, otherwise nothing.
    std::optional<Batch> flush(sim::SimTime now, Trigger trigger)
    {
        if (!wants_flush(now, trigger))
            return std::nullopt;
        return take_batch(now);
    }

    /// Unconditional drain, used at shutdown and in tests.
    std::optional<Batch> take_batch(sim::SimTime now)
    {
        if (buffer_.empty())
            return std::nullopt;
        Batch b;
        b.gateway_id = cfg_.id;
        b.seq = next_seq_++;
        b.created_at_us = now.us;
        b.flags = alarm_ ? kFlagAlarm : 0;
        b.records.assign(buffer_.begin(), buffer_.end());
        std::sort(b.records.begin(), b.records.end(), batch_order);
        buffer_.clear();
        alarm_ = false;
        return b;
    }

    /// Bytes a batch occupies on the uplink, security framing included.
    std::size_t wire_bytes(const Batch& b) const { return b.serialize().size() + cfg_.security_overhead_bytes; }

    std::size_t buffered_count() const { return buffer_.size(); }
    std::size_t buffered_bytes() const { return buffer_.size() * kRawRecordBytes; }
    std::uint64_t evictions() const { return evictions_; }
    sim::SimTime mode_entered() const { return mode_entered_; }

private:
    GatewayConfig cfg_;
    std::map<std::uint32_t, AdapterKind> adapters_;
    std::deque<Reading> buffer_;
    std::uint64_t evictions_ = 0;
    std::uint32_t next_seq_ = 0;
    bool alarm_ = false;
    sim::SimTime mode_entered_{};
};

struct Tariff
{
    std::uint32_t provider_id = 0;
    double cost_per_byte = 0.0;
    double cost_per_connection_event = 0.0;
    double signal_strength = 0.0;
};

/// Strongest signal wins; ties go to the lowest provider id.
inline const Tariff& select_provider(std::span<const Tariff> tariffs)
{
    if (tariffs.empty())
        throw NoProviders("no mobile providers configured");
    const Tariff* best = &tariffs.front();
    for (const auto& t : tariffs)
        if (t.signal_strength > best->signal_strength ||
            (t.signal_strength == best->signal_strength && t.provider_id < best->provider_id))
            best = &t;
    return *best;
}

inline double transfer_cost(std::size_t bytes, const Tariff& t)
{
    return static_cast<double>(bytes) * t.cost_per_byte + t.cost_per_connection_event;
}

} // namespace fivegang::gateway
