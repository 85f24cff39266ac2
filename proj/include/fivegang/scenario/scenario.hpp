#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fivegang/ap/radio.hpp"
#include "fivegang/cloud/broker.hpp"
#include "fivegang/errors.hpp"
#include "fivegang/gateway/gateway.hpp"
#include "fivegang/node/battery.hpp"
#include "fivegang/node/pipeline.hpp"
#include "fivegang/node/signal.hpp"
#include "fivegang/sim/channel.hpp"

namespace fivegang::scenario {

using nlohmann::json;

enum class NodeKind
{
    host,
    ap,
    cloud,
    sensor,
    relay,
    gateway,
    mmtc_group,
};

inline std::string_view to_string(NodeKind k)
{
    switch (k) {
    case NodeKind::host: return "host";
    case NodeKind::ap: return "ap";
    case NodeKind::cloud: return "cloud";
    case NodeKind::sensor: return "sensor";
    case NodeKind::relay: return "relay";
    case NodeKind::gateway: return "gateway";
    case NodeKind::mmtc_group: return "mmtc_group";
    }
    return "?";
}

enum class FlowKind
{
    cbr,
    sensor,
    gateway,
};

struct SensorSpec
{
    node::SignalSpec signal;
    node::PipelineConfig pipeline;
    std::size_t windows = 10;
    std::int64_t start_us = 0;
    std::int64_t packet_spacing_us = 500;
    node::BatteryState battery;
    std::optional<std::string> side_info;
};

struct AdapterSpec
{
    std::uint32_t id = 0;
    gateway::AdapterKind kind = gateway::AdapterKind::fieldbus;
    std::int64_t interval_us = 1'000'000;
    std::uint16_t channels = 1;
    double base = 0.0;
    double amplitude = 0.0;
    std::int64_t period_us = 60'000'000;
    double noise_sd = 0.0;
    std::optional<double> alarm_above;
};

struct GatewaySpec
{
    std::uint32_t gateway_id = 0;
    gateway::Mode mode = gateway::Online{};
    std::size_t max_buffer_bytes = 1 << 20;
    std::size_t security_overhead_bytes = 0;
    std::string traffic;
    std::vector<AdapterSpec> adapters;
    std::vector<gateway::Tariff> tariffs;
    std::int64_t timer_us = 1'000'000;
    std::int64_t ack_timeout_us = 200'000;
    unsigned max_retries = 3;
    std::string topic;
};

struct MmtcSpec
{
    std::size_t count = 1;
    std::string profile = "mMTC";
    std::string dst;
    std::int64_t report_interval_us = 1'000'000;
    std::size_t payload_bytes = 200;
    double samples_per_s = 10.0;
    node::BatteryState battery;
};

struct CloudSpec
{
    std::vector<std::pair<std::string, std::string>> subscriptions; // (subscriber, filter)
};

struct NodeSpec
{
    std::string id;
    NodeKind kind = NodeKind::host;
    SensorSpec sensor;
    GatewaySpec gateway;
    MmtcSpec mmtc;
    CloudSpec cloud;
};

struct LinkSpec
{
    std::string id;
    std::string from;
    std::string to;
    std::string channel;
    std::string profile_name;
    sim::ChannelProfile profile;
    bool up = true;
    bool available = true;
    std::vector<std::pair<std::int64_t, double>> loss_schedule; // (at_us, loss_probability)
};

struct FlowSpec
{
    std::string id;
    FlowKind kind = FlowKind::cbr;
    std::string src;
    std::string dst;
    std::vector<std::string> route;
    std::int64_t start_us = 0;
    std::int64_t interval_us = 1000;
    std::uint64_t count = 0;
    std::size_t payload_bytes = 64;
};

struct HandoverEvent
{
    std::int64_t at_us = 0;
    std::string flow;
    std::string to_link;
    bool break_before_make = false;
};

struct HandoverSpec
{
    std::optional<std::string> ap;
    ap::HandoverPolicy policy;
    std::int64_t telemetry_interval_us = 10'000;
    std::size_t probe_bytes = 64;
    bool automatic = false;
    std::int64_t establish_us = 2000;
    std::vector<HandoverEvent> events;
};

struct AnomalySpec
{
    std::vector<std::string> streams;
    std::size_t train_windows = 8;
    double threshold_k = 4.0;
};

struct Scenario
{
    json source; // the validated document, used for hashing and sweeps
    std::uint64_t seed = 0;
    std::int64_t duration_us = 0;
    std::string experiment;
    std::map<std::string, sim::ChannelProfile> profiles;
    std::vector<NodeSpec> nodes;
    std::vector<LinkSpec> links;
    std::vector<FlowSpec> flows;
    HandoverSpec handover;
    AnomalySpec anomaly;

    const NodeSpec* find_node(std::string_view id) const
    {
        for (const auto& n : nodes)
            if (n.id == id)
                return &n;
        return nullptr;
    }
    const LinkSpec* find_link(std::string_view id) const
    {
        for (const auto& l : links)
            if (l.id == id)
                return &l;
        return nullptr;
    }
    const FlowSpec* find_flow(std::string_view id) const
    {
        for (const auto& f : flows)
            if (f.id == id)
                return &f;
        return nullptr;
    }
    /// The flow sourced at a sensor or gateway node.
    const FlowSpec* flow_from(std::string_view node) const
    {
        for (const auto& f : flows)
            if (f.src == node)
                return &f;
        return nullptr;
    }
};

namespace detail {

inline std::string child(const std::string& base, std::string_view key)
{
    std::string out = base + "/";
    for (char c : key) {
        if (c == '~')
            out += "~0";
        else if (c == '/')
            out += "~1";
        else
            out += c;
    }
    return out;
}

inline std::string child(const std::string& base, std::size_t index) { return base + "/" + std::to_string(index); }

inline void require(bool ok, const std::string& path, const std::string& message)
{
    if (!ok)
        throw InvalidRange(path, message);
}

/// Typed, path-aware view of one JSON object. Unknown keys are rejected so a
/// misspelt option never silently falls back to its default.
class Obj
{
public:
    Obj(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object())
            throw ParseError(path_, "expected an object");
    }

    const std::string& path() const { return path_; }
    std::string path(std::string_view key) const { return child(path_, key); }

    void allow(std::initializer_list<std::string_view> keys) const
    {
        for (const auto& [k, v] : j_.items())
            if (std::find(keys.begin(), keys.end(), k) == keys.end())
                throw ParseError(path(k), "unknown key");
    }

    bool has(std::string_view key) const { return j_.contains(key); }

    const json& at(std::string_view key) const
    {
        auto it = j_.find(key);
        if (it == j_.end())
            throw ParseError(path(key), "missing required key");
        return *it;
    }

    Obj object(std::string_view key) const { return Obj(at(key), path(key)); }

    const json& array(std::string_view key) const
    {
        const auto& a = at(key);
        if (!a.is_array())
            throw ParseError(path(key), "expected an array");
        return a;
    }

    std::string str(std::string_view key) const
    {
        const auto& v = at(key);
        if (!v.is_string())
            throw ParseError(path(key), "expected a string");
        return v.get<std::string>();
    }
    std::string str(std::string_view key, std::string fallback) const { return has(key) ? str(key) : fallback; }

    double number(std::string_view key) const
    {
        const auto& v = at(key);
        if (!v.is_number())
            throw ParseError(path(key), "expected a number");
        return v.get<double>();
    }
    double number(std::string_view key, double fallback) const { return has(key) ? number(key) : fallback; }

    std::int64_t integer(std::string_view key) const
    {
        const auto& v = at(key);
        if (!v.is_number_integer())
            throw ParseError(path(key), "expected an integer");
        if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX))
            throw InvalidRange(path(key), "integer too large");
        return v.get<std::int64_t>();
    }
    std::int64_t integer(std::string_view key, std::int64_t fallback) const
    {
        return has(key) ? integer(key) : fallback;
    }

    std::uint64_t unsigned_integer(std::string_view key) const
    {
        const auto& v = at(key);
        if (!v.is_number_integer())
            throw ParseError(path(key), "expected an integer");
        if (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)
            throw InvalidRange(path(key), "must be non-negative");
        return v.get<std::uint64_t>();
    }
    std::uint64_t unsigned_integer(std::string_view key, std::uint64_t fallback) const
    {
        return has(key) ? unsigned_integer(key) : fallback;
    }

    bool boolean(std::string_view key, bool fallback) const
    {
        if (!has(key))
            return fallback;
        const auto& v = at(key);
        if (!v.is_boolean())
            throw ParseError(path(key), "expected a boolean");
        return v.get<bool>();
    }

    std::int64_t positive(std::string_view key, std::int64_t fallback) const
    {
        const auto v = integer(key, fallback);
        require(v > 0, path(key), "must be positive");
        return v;
    }

    double probability(std::string_view key, double fallback) const
    {
        const double v = number(key, fallback);
        require(v >= 0.0 && v <= 1.0, path(key), "must lie in [0, 1]");
        return v;
    }

private:
    const json& j_;
    std::string path_;
};

inline void check_id(const std::string& id, const std::string& path)
{
    if (id.empty())
        throw InvalidRange(path, "id must not be empty");
    if (id.find('/') != std::string::npos || id.find('+') != std::string::npos)
        throw InvalidRange(path, "id must not contain '/' or '+'");
}

inline sim::ChannelProfile parse_profile_body(const Obj& o, sim::ChannelProfile p)
{
    p.downlink_capacity_bps = o.number("downlink_capacity_bps", p.downlink_capacity_bps);
    p.uplink_capacity_bps = o.number("uplink_capacity_bps", p.uplink_capacity_bps);
    p.per_user_rate_bps = o.number("per_user_rate_bps", p.per_user_rate_bps);
    p.per_user_uplink_rate_bps = o.number("per_user_uplink_rate_bps", p.per_user_uplink_rate_bps);
    p.latency_budget_us = o.integer("latency_budget_us", p.latency_budget_us);
    p.loss_probability = o.number("loss_probability", p.loss_probability);
    p.device_density_per_km2 = o.number("device_density_per_km2", p.device_density_per_km2);
    require(p.downlink_capacity_bps > 0, o.path("downlink_capacity_bps"), "capacity must be positive");
    require(p.uplink_capacity_bps > 0, o.path("uplink_capacity_bps"), "capacity must be positive");
    require(p.latency_budget_us > 0, o.path("latency_budget_us"), "latency budget must be positive");
    require(p.loss_probability >= 0.0 && p.loss_probability <= 1.0, o.path("loss_probability"),
            "must lie in [0, 1]");
    require(p.device_density_per_km2 >= 0.0, o.path("device_density_per_km2"), "must be non-negative");
    return p;
}

inline node::BatteryState parse_battery(const Obj& o)
{
    o.allow({"capacity_uj", "tx_cost_uj_per_byte", "sample_cost_uj", "idle_cost_uj_per_s"});
    node::BatteryState b;
    b.capacity_uj = o.number("capacity_uj", b.capacity_uj);
    b.tx_cost_uj_per_byte = o.number("tx_cost_uj_per_byte", b.tx_cost_uj_per_byte);
    b.sample_cost_uj = o.number("sample_cost_uj", b.sample_cost_uj);
    b.idle_cost_uj_per_s = o.number("idle_cost_uj_per_s", b.idle_cost_uj_per_s);
    require(b.capacity_uj > 0, o.path("capacity_uj"), "must be positive");
    require(b.tx_cost_uj_per_byte >= 0, o.path("tx_cost_uj_per_byte"), "must be non-negative");
    require(b.sample_cost_uj >= 0, o.path("sample_cost_uj"), "must be non-negative");
    require(b.idle_cost_uj_per_s >= 0, o.path("idle_cost_uj_per_s"), "must be non-negative");
    return b;
}

inline std::size_t parse_channel(const json& v, const std::string& path)
{
    if (!v.is_string())
        throw ParseError(path, "expected a channel name");
    const auto idx = node::channel_index(v.get<std::string>());
    if (!idx)
        throw InvalidRange(path, "unknown channel '" + v.get<std::string>() + "'");
    return *idx;
}

inline node::PipelineConfig parse_pipeline(const Obj& o)
{
    o.allow({"window_n", "cs", "quantizer", "dsc_mode", "channels", "rlnc"});
    node::PipelineConfig p;
    p.window_n = static_cast<std::size_t>(o.positive("window_n", static_cast<std::int64_t>(p.window_n)));
    if (o.has("cs")) {
        const auto c = o.object("cs");
        c.allow({"enabled", "m", "seed", "basis", "sparsity", "residual_tol"});
        p.cs.enabled = c.boolean("enabled", p.cs.enabled);
        p.cs.m = static_cast<std::size_t>(c.positive("m", static_cast<std::int64_t>(p.cs.m)));
        p.cs.seed = c.unsigned_integer("seed", p.cs.seed);
        const auto basis = c.str("basis", "dct2");
        if (basis == "dct2")
            p.cs.basis = cs::BasisKind::dct2;
        else if (basis == "identity")
            p.cs.basis = cs::BasisKind::identity;
        else
            throw InvalidRange(c.path("basis"), "basis must be dct2 or identity");
        p.cs.sparsity = static_cast<std::size_t>(c.positive("sparsity", static_cast<std::int64_t>(p.cs.sparsity)));
        p.cs.residual_tol = c.number("residual_tol", p.cs.residual_tol);
        require(p.cs.residual_tol >= 0, c.path("residual_tol"), "must be non-negative");
    }
    if (o.has("quantizer")) {
        const auto q = o.object("quantizer");
        q.allow({"bits", "min", "max"});
        p.quantizer.bits_per_sample = static_cast<unsigned>(q.positive("bits", p.quantizer.bits_per_sample));
        p.quantizer.clip_min = q.number("min", p.quantizer.clip_min);
        p.quantizer.clip_max = q.number("max", p.quantizer.clip_max);
    }
    const auto mode = o.str("dsc_mode", "raw");
    if (mode == "raw")
        p.dsc_mode = node::DscMode::raw;
    else if (mode == "syndrome")
        p.dsc_mode = node::DscMode::syndrome;
    else
        throw InvalidRange(o.path("dsc_mode"), "dsc_mode must be raw or syndrome");
    if (o.has("channels")) {
        const auto& a = o.array("channels");
        p.channels.clear();
        std::set<std::size_t> seen;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const auto ch = parse_channel(a[i], child(o.path("channels"), i));
            require(seen.insert(ch).second, child(o.path("channels"), i), "duplicate channel");
            p.channels.push_back(ch);
        }
    }
    if (o.has("rlnc")) {
        const auto r = o.object("rlnc");
        r.allow({"k", "redundancy"});
        p.rlnc.k = static_cast<std::size_t>(r.positive("k", static_cast<std::int64_t>(p.rlnc.k)));
        p.rlnc.redundancy = r.number("redundancy", p.rlnc.redundancy);
        require(p.rlnc.redundancy >= 1.0 && p.rlnc.redundancy <= 16.0, r.path("redundancy"),
                "must lie in [1, 16]");
    }
    try {
        p.validate();
    }
    catch (const std::invalid_argument& e) {
        throw InvalidRange(o.path(), e.what());
    }
    return p;
}

inline node::SignalSpec parse_signal(const Obj& o, std::size_t window_n, std::uint64_t seed)
{
    o.allow({"sample_rate_hz", "normalize_mag", "channels", "anomalies"});
    node::SignalSpec s;
    s.seed = seed;
    s.sample_rate_hz = o.number("sample_rate_hz", s.sample_rate_hz);
    require(s.sample_rate_hz > 0 && s.sample_rate_hz <= 1e6, o.path("sample_rate_hz"), "must lie in (0, 1e6]");
    require(1e6 / s.sample_rate_hz == std::floor(1e6 / s.sample_rate_hz), o.path("sample_rate_hz"),
            "sample period must be a whole number of microseconds");
    s.normalize_mag = o.boolean("normalize_mag", s.normalize_mag);
    if (o.has("channels")) {
        const auto chans = o.object("channels");
        for (const auto& [name, body] : o.at("channels").items()) {
            const auto idx = node::channel_index(name);
            if (!idx)
                throw InvalidRange(chans.path(name), "unknown channel");
            const Obj c(body, chans.path(name));
            c.allow({"offset", "noise_sd", "components"});
            auto& cs = s.channels[*idx];
            cs.offset = c.number("offset", 0.0);
            cs.noise_sd = c.number("noise_sd", 0.0);
            require(cs.noise_sd >= 0, c.path("noise_sd"), "must be non-negative");
            if (c.has("components")) {
                const auto& comps = c.array("components");
                for (std::size_t i = 0; i < comps.size(); ++i) {
                    const Obj k(comps[i], child(c.path("components"), i));
                    k.allow({"dct_bin", "amplitude", "frequency_hz", "phase"});
                    const double amp = k.number("amplitude");
                    if (k.has("dct_bin")) {
                        const auto bin = k.integer("dct_bin");
                        require(bin >= 0 && bin < static_cast<std::int64_t>(window_n), k.path("dct_bin"),
                                "must lie in [0, window_n)");
                        cs.components.push_back(
                            node::Sinusoid::dct_bin(static_cast<double>(bin), amp, s.sample_rate_hz, window_n));
                    }
                    else {
                        cs.components.push_back({k.number("frequency_hz"), amp, k.number("phase", 0.0)});
                    }
                }
            }
        }
    }
    if (o.has("anomalies")) {
        const auto& a = o.array("anomalies");
        for (std::size_t i = 0; i < a.size(); ++i) {
            const Obj k(a[i], child(o.path("anomalies"), i));
            k.allow({"from_us", "to_us", "channel", "amplitude"});
            node::Anomaly an;
            an.from_us = k.integer("from_us");
            an.to_us = k.integer("to_us");
            require(an.from_us >= 0 && an.to_us > an.from_us, k.path("to_us"), "need 0 <= from_us < to_us");
            an.channel = parse_channel(k.at("channel"), k.path("channel"));
            an.amplitude = k.number("amplitude");
            s.anomalies.push_back(an);
        }
    }
    return s;
}

inline gateway::Mode parse_mode(const Obj& o)
{
    const auto kind = o.str("kind");
    if (kind == "online") {
        o.allow({"kind"});
        return gateway::Online{};
    }
    if (kind == "interval") {
        o.allow({"kind", "period_us"});
        return gateway::Interval{o.positive("period_us", 1'000'000)};
    }
    if (kind == "sleep") {
        o.allow({"kind", "byte_threshold", "on_alarm"});
        return gateway::Sleep{static_cast<std::size_t>(o.unsigned_integer("byte_threshold", 1'000'000)),
                              o.boolean("on_alarm", true)};
    }
    throw InvalidRange(o.path("kind"), "mode must be online, interval or sleep");
}

inline GatewaySpec parse_gateway(const Obj& o, const json& defaults, const std::string& node_id)
{
    GatewaySpec g;
    const Obj d(defaults, "/gateway");
    g.timer_us = o.positive("timer_us", d.positive("timer_us", g.timer_us));
    g.ack_timeout_us = o.positive("ack_timeout_us", d.positive("ack_timeout_us", g.ack_timeout_us));
    g.max_retries = static_cast<unsigned>(o.unsigned_integer("max_retries", d.unsigned_integer("max_retries", 3)));
    require(g.max_retries <= 100, o.path("max_retries"), "must be at most 100");
    g.topic = o.str("topic", d.str("topic_prefix", "plant") + "/" + node_id + "/batch");
    try {
        cloud::validate_topic(g.topic);
    }
    catch (const MalformedTopic& e) {
        throw InvalidRange(o.path("topic"), e.what());
    }
    g.gateway_id = static_cast<std::uint32_t>(o.unsigned_integer("gateway_id"));
    g.mode = parse_mode(o.object("mode"));
    if (const auto* iv = std::get_if<gateway::Interval>(&g.mode))
        require(iv->period_us % g.timer_us == 0, o.path("mode"), "interval period must be a multiple of timer_us");
    g.max_buffer_bytes = static_cast<std::size_t>(o.unsigned_integer("max_buffer_bytes", g.max_buffer_bytes));
    require(g.max_buffer_bytes >= gateway::kRawRecordBytes, o.path("max_buffer_bytes"), "must hold one record");
    g.security_overhead_bytes = static_cast<std::size_t>(o.unsigned_integer("security_overhead_bytes", 0));
    g.traffic = o.str("traffic", node_id);
    const auto& ads = o.array("adapters");
    require(!ads.empty(), o.path("adapters"), "at least one adapter required");
    std::set<std::uint32_t> ids;
    for (std::size_t i = 0; i < ads.size(); ++i) {
        const Obj a(ads[i], child(o.path("adapters"), i));
        a.allow({"id", "kind", "interval_us", "channels", "base", "amplitude", "period_us", "noise_sd", "alarm_above"});
        AdapterSpec s;
        s.id = static_cast<std::uint32_t>(a.unsigned_integer("id"));
        require(ids.insert(s.id).second, a.path("id"), "duplicate adapter id");
        const auto kind = gateway::adapter_kind_from(a.str("kind", "fieldbus"));
        if (!kind)
            throw InvalidRange(a.path("kind"), "unknown adapter kind");
        s.kind = *kind;
        s.interval_us = a.positive("interval_us", s.interval_us);
        const auto ch = a.positive("channels", 1);
        require(ch <= 0xFFFF, a.path("channels"), "at most 65535 channels");
        s.channels = static_cast<std::uint16_t>(ch);
        s.base = a.number("base", 0.0);
        s.amplitude = a.number("amplitude", 0.0);
        s.period_us = a.positive("period_us", s.period_us);
        s.noise_sd = a.number("noise_sd", 0.0);
        require(s.noise_sd >= 0, a.path("noise_sd"), "must be non-negative");
        if (a.has("alarm_above"))
            s.alarm_above = a.number("alarm_above");
        g.adapters.push_back(s);
    }
    const auto& ts = o.array("tariffs");
    require(!ts.empty(), o.path("tariffs"), "at least one provider required");
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const Obj t(ts[i], child(o.path("tariffs"), i));
        t.allow({"provider_id", "cost_per_byte", "cost_per_connection_event", "signal_strength"});
        gateway::Tariff tf;
        tf.provider_id = static_cast<std::uint32_t>(t.unsigned_integer("provider_id"));
        tf.cost_per_byte = t.number("cost_per_byte", 0.0);
        tf.cost_per_connection_event = t.number("cost_per_connection_event", 0.0);
        tf.signal_strength = t.number("signal_strength", 0.0);
        require(tf.cost_per_byte >= 0, t.path("cost_per_byte"), "costs must be non-negative");
        require(tf.cost_per_connection_event >= 0, t.path("cost_per_connection_event"),
                "costs must be non-negative");
        g.tariffs.push_back(tf);
    }
    return g;
}

} // namespace detail

/// Parses and cross-checks a scenario document. Every failure names the JSON
/// pointer of the offending value.
inline Scenario validate(const json& doc)
{
    using namespace detail;
    const Obj root(doc, "");
    root.allow({"seed", "duration_us", "experiment", "profiles", "nodes", "links", "flows", "gateway", "anomaly",
                "handover"});
    Scenario sc;
    sc.source = doc;
    sc.seed = root.unsigned_integer("seed");
    sc.duration_us = root.positive("duration_us", 0);
    sc.experiment = root.str("experiment", "");

    for (auto k : {sim::ProfileKind::eMBB, sim::ProfileKind::URLLC, sim::ProfileKind::mMTC})
        sc.profiles[std::string(sim::to_string(k))] = sim::make_profile(k);
    if (root.has("profiles")) {
        const auto ps = root.object("profiles");
        for (const auto& [name, body] : doc.at("profiles").items()) {
            const Obj p(body, ps.path(name));
            p.allow({"base", "downlink_capacity_bps", "uplink_capacity_bps", "per_user_rate_bps",
                     "per_user_uplink_rate_bps", "latency_budget_us", "loss_probability", "device_density_per_km2"});
            const auto base = sim::profile_kind_from(p.str("base", "custom"));
            if (!base)
                throw InvalidRange(p.path("base"), "base must be eMBB, URLLC, mMTC or custom");
            auto prof = parse_profile_body(p, sim::make_profile(*base));
            sc.profiles[name] = prof;
        }
    }

    const json gateway_defaults = root.has("gateway") ? root.at("gateway") : json::object();
    {
        const Obj g(gateway_defaults, "/gateway");
        g.allow({"timer_us", "ack_timeout_us", "max_retries", "topic_prefix"});
    }

    std::set<std::string> ids;
    const auto& nodes = root.array("nodes");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const Obj n(nodes[i], child("/nodes", i));
        NodeSpec spec;
        spec.id = n.str("id");
        check_id(spec.id, n.path("id"));
        require(ids.insert(spec.id).second, n.path("id"), "duplicate node id '" + spec.id + "'");
        const auto kind = n.str("kind");
        if (kind == "host" || kind == "ap" || kind == "relay") {
            n.allow({"id", "kind"});
            spec.kind = kind == "host" ? NodeKind::host : kind == "ap" ? NodeKind::ap : NodeKind::relay;
        }
        else if (kind == "cloud") {
            n.allow({"id", "kind", "subscriptions"});
            spec.kind = NodeKind::cloud;
            if (n.has("subscriptions")) {
                const auto& subs = n.array("subscriptions");
                for (std::size_t j = 0; j < subs.size(); ++j) {
                    const Obj s(subs[j], child(n.path("subscriptions"), j));
                    s.allow({"subscriber", "filter"});
                    const auto filter = s.str("filter");
                    try {
                        cloud::validate_filter(filter);
                    }
                    catch (const MalformedTopic& e) {
                        throw InvalidRange(s.path("filter"), e.what());
                    }
                    spec.cloud.subscriptions.emplace_back(s.str("subscriber"), filter);
                }
            }
        }
        else if (kind == "sensor") {
            n.allow({"id", "kind", "signal", "pipeline", "windows", "start_us", "packet_spacing_us", "battery",
                     "side_info"});
            spec.kind = NodeKind::sensor;
            auto& s = spec.sensor;
            s.pipeline = n.has("pipeline") ? parse_pipeline(n.object("pipeline")) : node::PipelineConfig{};
            const std::uint64_t noise_seed = sim::derive_seed(sc.seed, "signal:" + spec.id);
            s.signal = n.has("signal") ? parse_signal(n.object("signal"), s.pipeline.window_n, noise_seed)
                                       : node::SignalSpec{};
            s.signal.seed = noise_seed;
            s.windows = static_cast<std::size_t>(n.positive("windows", 10));
            require(s.windows <= 1'000'000, n.path("windows"), "at most 10^6 windows");
            s.start_us = n.integer("start_us", 0);
            require(s.start_us >= 0, n.path("start_us"), "must be non-negative");
            s.packet_spacing_us = n.positive("packet_spacing_us", 500);
            if (n.has("battery"))
                s.battery = parse_battery(n.object("battery"));
            if (n.has("side_info"))
                s.side_info = n.str("side_info");
        }
        else if (kind == "gateway") {
            n.allow({"id", "kind", "gateway_id", "mode", "max_buffer_bytes", "security_overhead_bytes", "traffic",
                     "adapters", "tariffs", "timer_us", "ack_timeout_us", "max_retries", "topic"});
            spec.kind = NodeKind::gateway;
            spec.gateway = parse_gateway(n, gateway_defaults, spec.id);
        }
        else if (kind == "mmtc_group") {
            n.allow({"id", "kind", "count", "profile", "dst", "report_interval_us", "payload_bytes", "samples_per_s",
                     "battery"});
            spec.kind = NodeKind::mmtc_group;
            auto& m = spec.mmtc;
            m.count = static_cast<std::size_t>(n.positive("count", 1));
            require(m.count <= 1'000'000, n.path("count"), "at most 10^6 devices per group");
            m.profile = n.str("profile", "mMTC");
            m.dst = n.str("dst");
            m.report_interval_us = n.positive("report_interval_us", m.report_interval_us);
            m.payload_bytes = static_cast<std::size_t>(n.positive("payload_bytes", 200));
            m.samples_per_s = n.number("samples_per_s", m.samples_per_s);
            require(m.samples_per_s >= 0, n.path("samples_per_s"), "must be non-negative");
            if (n.has("battery"))
                m.battery = parse_battery(n.object("battery"));
        }
        else {
            throw InvalidRange(n.path("kind"), "unknown node kind '" + kind + "'");
        }
        sc.nodes.push_back(std::move(spec));
    }

    std::set<std::string> link_ids;
    const auto& links = root.array("links");
    for (std::size_t i = 0; i < links.size(); ++i) {
        const Obj l(links[i], child("/links", i));
        l.allow({"id", "from", "to", "channel", "profile", "up", "available", "loss_probability", "loss_schedule"});
        LinkSpec spec;
        spec.id = l.str("id");
        check_id(spec.id, l.path("id"));
        require(link_ids.insert(spec.id).second, l.path("id"), "duplicate link id '" + spec.id + "'");
        spec.from = l.str("from");
        spec.to = l.str("to");
        if (!sc.find_node(spec.from))
            throw DanglingReference(l.path("from"), "no node '" + spec.from + "'");
        if (!sc.find_node(spec.to))
            throw DanglingReference(l.path("to"), "no node '" + spec.to + "'");
        spec.channel = l.str("channel", spec.id);
        spec.profile_name = l.str("profile");
        auto it = sc.profiles.find(spec.profile_name);
        if (it == sc.profiles.end())
            throw DanglingReference(l.path("profile"), "no profile '" + spec.profile_name + "'");
        spec.profile = it->second;
        spec.profile.loss_probability = l.probability("loss_probability", spec.profile.loss_probability);
        spec.up = l.boolean("up", true);
        spec.available = l.boolean("available", true);
        if (l.has("loss_schedule")) {
            const auto& ls = l.array("loss_schedule");
            std::int64_t prev = -1;
            for (std::size_t j = 0; j < ls.size(); ++j) {
                const Obj e(ls[j], child(l.path("loss_schedule"), j));
                e.allow({"at_us", "loss_probability"});
                const auto at = e.integer("at_us");
                require(at >= 0 && at > prev, e.path("at_us"), "entries must be non-negative and increasing");
                prev = at;
                spec.loss_schedule.emplace_back(at, e.probability("loss_probability", 0.0));
            }
        }
        sc.links.push_back(std::move(spec));
    }

    std::set<std::string> flow_ids;
    const auto& flows = root.array("flows");
    for (std::size_t i = 0; i < flows.size(); ++i) {
        const Obj f(flows[i], child("/flows", i));
        f.allow({"id", "kind", "src", "dst", "route", "start_us", "interval_us", "count", "payload_bytes"});
        FlowSpec spec;
        spec.id = f.str("id");
        check_id(spec.id, f.path("id"));
        require(flow_ids.insert(spec.id).second, f.path("id"), "duplicate flow id '" + spec.id + "'");
        spec.src = f.str("src");
        spec.dst = f.str("dst");
        const auto* src = sc.find_node(spec.src);
        const auto* dst = sc.find_node(spec.dst);
        if (!src)
            throw DanglingReference(f.path("src"), "no node '" + spec.src + "'");
        if (!dst)
            throw DanglingReference(f.path("dst"), "no node '" + spec.dst + "'");
        const auto kind = f.str("kind", "cbr");
        if (kind == "cbr") {
            spec.kind = FlowKind::cbr;
            require(src->kind == NodeKind::host, f.path("src"), "cbr flows start at a host");
            require(dst->kind == NodeKind::host || dst->kind == NodeKind::cloud, f.path("dst"),
                    "cbr flows end at a host or cloud");
            spec.start_us = f.integer("start_us", 0);
            require(spec.start_us >= 0, f.path("start_us"), "must be non-negative");
            spec.interval_us = f.positive("interval_us", 1000);
            spec.count = f.unsigned_integer("count");
            require(spec.count <= 100'000'000, f.path("count"), "at most 10^8 packets");
            spec.payload_bytes = static_cast<std::size_t>(f.positive("payload_bytes", 64));
        }
        else if (kind == "sensor" || kind == "gateway") {
            spec.kind = kind == "sensor" ? FlowKind::sensor : FlowKind::gateway;
            const auto want = kind == "sensor" ? NodeKind::sensor : NodeKind::gateway;
            require(src->kind == want, f.path("src"), kind + " flows start at a " + kind + " node");
            require(dst->kind == NodeKind::cloud, f.path("dst"), kind + " flows end at a cloud node");
            for (const auto& other : sc.flows)
                require(other.src != spec.src, f.path("src"), "node '" + spec.src + "' already sources a flow");
        }
        else {
            throw InvalidRange(f.path("kind"), "flow kind must be cbr, sensor or gateway");
        }
        const auto& route = f.array("route");
        require(!route.empty(), f.path("route"), "route must name at least one link");
        std::string at = spec.src;
        std::set<std::string> visited{at};
        for (std::size_t j = 0; j < route.size(); ++j) {
            const auto p = child(f.path("route"), j);
            if (!route[j].is_string())
                throw ParseError(p, "expected a link id");
            const auto lid = route[j].get<std::string>();
            const auto* l = sc.find_link(lid);
            if (!l)
                throw DanglingReference(p, "no link '" + lid + "'");
            require(l->from == at, p, "link '" + lid + "' does not start at '" + at + "'");
            at = l->to;
            // A loopback may only close a one-hop route from a node to itself.
            const bool loopback = spec.src == spec.dst && at == spec.dst && j + 1 == route.size();
            require(visited.insert(at).second || loopback, p, "route revisits node '" + at + "'");
            const auto* hop = sc.find_node(at);
            if (at != spec.dst) {
                require(hop->kind == NodeKind::ap || hop->kind == NodeKind::relay || hop->kind == NodeKind::host,
                        p, "node '" + at + "' cannot forward traffic");
                require(hop->kind != NodeKind::relay || spec.kind == FlowKind::sensor, p,
                        "relays only carry coded sensor flows");
            }
            spec.route.push_back(lid);
        }
        require(at == spec.dst, f.path("route"), "route ends at '" + at + "', not at '" + spec.dst + "'");
        sc.flows.push_back(std::move(spec));
    }

    for (std::size_t i = 0; i < sc.nodes.size(); ++i) {
        const auto& n = sc.nodes[i];
        const auto path = child("/nodes", i);
        if ((n.kind == NodeKind::sensor || n.kind == NodeKind::gateway) && !sc.flow_from(n.id))
            throw DanglingReference(path, "node '" + n.id + "' has no outgoing flow");
        if (n.kind == NodeKind::sensor && n.sensor.side_info) {
            const auto& sid = *n.sensor.side_info;
            const auto* prov = sc.find_node(sid);
            if (!prov || prov->kind != NodeKind::sensor)
                throw DanglingReference(path + "/side_info", "no sensor '" + sid + "'");
            require(n.sensor.pipeline.dsc_mode == node::DscMode::syndrome, path + "/side_info",
                    "side information only applies to syndrome-coded streams");
            const auto& a = n.sensor.pipeline;
            const auto& b = prov->sensor.pipeline;
            require(b.dsc_mode == node::DscMode::raw, path + "/side_info", "the provider must send raw blocks");
            require(sc.flow_from(sid)->dst == sc.flow_from(n.id)->dst, path + "/side_info",
                    "provider must report to the same cloud");
            const bool same_cs = a.window_n == b.window_n && a.cs.enabled == b.cs.enabled && a.cs.m == b.cs.m &&
                                 a.cs.seed == b.cs.seed && a.cs.basis == b.cs.basis;
            const bool same_q = a.quantizer.bits_per_sample == b.quantizer.bits_per_sample &&
                                a.quantizer.clip_min == b.quantizer.clip_min &&
                                a.quantizer.clip_max == b.quantizer.clip_max;
            require(same_cs && same_q, path + "/side_info",
                    "provider must share window, measurement and quantizer settings");
            for (auto c : a.channels)
                require(std::find(b.channels.begin(), b.channels.end(), c) != b.channels.end(),
                        path + "/side_info", "provider lacks channel " + std::string(node::kChannelNames[c]));
            require(prov->sensor.start_us == n.sensor.start_us, path + "/side_info",
                    "provider must start at the same time");
        }
        if (n.kind == NodeKind::mmtc_group) {
            const auto* dst = sc.find_node(n.mmtc.dst);
            if (!dst)
                throw DanglingReference(path + "/dst", "no node '" + n.mmtc.dst + "'");
            require(dst->kind == NodeKind::cloud || dst->kind == NodeKind::host, path + "/dst",
                    "devices report to a cloud or host");
            if (!sc.profiles.count(n.mmtc.profile))
                throw DanglingReference(path + "/profile", "no profile '" + n.mmtc.profile + "'");
        }
    }

    if (root.has("anomaly")) {
        const auto a = root.object("anomaly");
        a.allow({"streams", "train_windows", "threshold_k"});
        sc.anomaly.train_windows = static_cast<std::size_t>(a.positive("train_windows", 8));
        require(sc.anomaly.train_windows >= 2, a.path("train_windows"), "training needs at least 2 windows");
        sc.anomaly.threshold_k = a.number("threshold_k", 4.0);
        require(sc.anomaly.threshold_k > 0, a.path("threshold_k"), "must be positive");
        const auto& st = a.array("streams");
        for (std::size_t i = 0; i < st.size(); ++i) {
            const auto p = child(a.path("streams"), i);
            if (!st[i].is_string())
                throw ParseError(p, "expected a sensor id");
            const auto id = st[i].get<std::string>();
            const auto* n = sc.find_node(id);
            if (!n || n->kind != NodeKind::sensor)
                throw DanglingReference(p, "no sensor '" + id + "'");
            sc.anomaly.streams.push_back(id);
        }
    }

    if (root.has("handover")) {
        const auto h = root.object("handover");
        h.allow({"ap", "policy", "telemetry_interval_us", "probe_bytes", "auto", "establish_us", "events"});
        auto& hs = sc.handover;
        const auto ap_id = h.str("ap");
        const auto* apn = sc.find_node(ap_id);
        if (!apn || apn->kind != NodeKind::ap)
            throw DanglingReference(h.path("ap"), "no access point '" + ap_id + "'");
        hs.ap = ap_id;
        if (h.has("policy")) {
            const auto p = h.object("policy");
            p.allow({"loss_threshold", "min_improvement", "hold_down_us"});
            hs.policy.loss_threshold = p.probability("loss_threshold", hs.policy.loss_threshold);
            hs.policy.min_improvement = p.probability("min_improvement", hs.policy.min_improvement);
            hs.policy.hold_down_us = p.integer("hold_down_us", hs.policy.hold_down_us);
            require(hs.policy.hold_down_us >= 0, p.path("hold_down_us"), "must be non-negative");
        }
        hs.telemetry_interval_us = h.positive("telemetry_interval_us", hs.telemetry_interval_us);
        hs.probe_bytes = static_cast<std::size_t>(h.positive("probe_bytes", 64));
        hs.automatic = h.boolean("auto", false);
        hs.establish_us = h.positive("establish_us", hs.establish_us);
        if (h.has("events")) {
            const auto& ev = h.array("events");
            for (std::size_t i = 0; i < ev.size(); ++i) {
                const Obj e(ev[i], child(h.path("events"), i));
                e.allow({"at_us", "flow", "to_link", "mode"});
                HandoverEvent he;
                he.at_us = e.integer("at_us");
                require(he.at_us >= 0 && he.at_us < sc.duration_us, e.path("at_us"), "must lie in [0, duration_us)");
                he.flow = e.str("flow");
                const auto* fl = sc.find_flow(he.flow);
                if (!fl)
                    throw DanglingReference(e.path("flow"), "no flow '" + he.flow + "'");
                const LinkSpec* egress = nullptr;
                for (const auto& lid : fl->route)
                    if (sc.find_link(lid)->from == ap_id)
                        egress = sc.find_link(lid);
                require(egress != nullptr, e.path("flow"), "flow does not traverse '" + ap_id + "'");
                he.to_link = e.str("to_link");
                const auto* tl = sc.find_link(he.to_link);
                if (!tl)
                    throw DanglingReference(e.path("to_link"), "no link '" + he.to_link + "'");
                require(tl->from == ap_id && tl->to == egress->to, e.path("to_link"),
                        "target link must lead from the access point to the same next hop");
                require(tl->id != egress->id, e.path("to_link"), "target link is the current one");
                const auto mode = e.str("mode", "make-before-break");
                require(mode == "make-before-break" || mode == "break-before-make", e.path("mode"),
                        "mode must be make-before-break or break-before-make");
                he.break_before_make = mode == "break-before-make";
                hs.events.push_back(he);
            }
        }
    }
    return sc;
}

/// Parses scenario text; malformed JSON becomes a ParseError at the root.
inline Scenario validate_text(std::string_view text)
{
    json doc;
    try {
        doc = json::parse(text);
    }
    catch (const json::parse_error& e) {
        throw ParseError("", e.what());
    }
    return validate(doc);
}

} // namespace fivegang::scenario
