#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "fivegang/ap/flow_table.hpp"
#include "fivegang/ap/radio.hpp"
#include "fivegang/cloud/anomaly.hpp"
#include "fivegang/cloud/broker.hpp"
#include "fivegang/cloud/reconstruct.hpp"
#include "fivegang/gateway/gateway.hpp"
#include "fivegang/node/battery.hpp"
#include "fivegang/node/pipeline.hpp"
#include "fivegang/scenario/scenario.hpp"
#include "fivegang/sim/channel.hpp"
#include "fivegang/sim/engine.hpp"

namespace fivegang::scenario {

using codec::Bytes;
using sim::SimTime;

enum EventKind : sim::EventKind
{
    kArrive = 1,
    kCbrSend,
    kSensorWindow,
    kSensorPacket,
    kReading,
    kGatewayTimer,
    kAckTimeout,
    kAck,
    kTelemetry,
    kHandoverStart,
    kHandoverEstablished,
    kHandoverTeardown,
    kHandoverFinalize,
    kDeviceSend,
    kLossChange,
};

inline constexpr std::size_t kAckBytes = 16;

namespace detail {

inline std::vector<std::uint8_t> pack(std::uint64_t a, std::uint32_t b = 0, std::uint32_t c = 0)
{
    std::vector<std::uint8_t> out(16);
    std::memcpy(out.data(), &a, 8);
    std::memcpy(out.data() + 8, &b, 4);
    std::memcpy(out.data() + 12, &c, 4);
    return out;
}

struct Unpacked
{
    std::uint64_t a;
    std::uint32_t b;
    std::uint32_t c;
};

inline Unpacked unpack(const std::vector<std::uint8_t>& p)
{
    Unpacked u{};
    std::memcpy(&u.a, p.data(), 8);
    std::memcpy(&u.b, p.data() + 8, 4);
    std::memcpy(&u.c, p.data() + 12, 4);
    return u;
}

} // namespace detail

struct Packet
{
    std::uint32_t flow = 0;
    std::uint64_t seq = 0;
    std::int64_t created_us = 0;
    std::size_t bytes = 0;
    Bytes payload;
};

struct LinkRt
{
    sim::Link link;
    std::uint32_t from = 0;
    std::uint32_t to = 0;
    bool available = true;
    std::vector<std::pair<std::int64_t, double>> loss_schedule;
    std::unique_ptr<sim::RngStream> probe_rng;
    std::unique_ptr<sim::RngStream> ack_rng;
    std::uint64_t bytes_since_probe = 0;
};

struct FlowRt
{
    std::string id;
    FlowKind kind = FlowKind::cbr;
    bool message_level = false; // at-least-once batches: counted per message, not per attempt
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    std::vector<std::int32_t> next_link; // by node index; -1 where the flow does not leave the node
    std::vector<std::uint32_t> route;
    sim::FlowCounters* counters = nullptr;
    std::vector<bool> seen;
    std::uint64_t highest = 0;
    bool any_seen = false;
    bool source_done = false;

    bool delivered_seq(std::uint64_t seq) const { return seq < seen.size() && seen[seq]; }
};

class World;

class NodeEntity : public sim::Entity
{
public:
    NodeEntity(World& w, std::uint32_t index) : world_(w), index_(index) {}
    void handle(sim::Engine& engine, const sim::Event& ev) override;

    /// A packet for which this node is the destination.
    virtual void consume(std::uint64_t /*pkt*/, std::uint32_t /*in_link*/) {}
    /// A packet passing through. Default: next link of the flow's route.
    virtual void pass(std::uint64_t pkt, std::uint32_t in_link);
    virtual void on_event(const sim::Event&) {}
    virtual void finish(SimTime) {}

    std::uint32_t index() const { return index_; }

protected:
    World& world_;
    std::uint32_t index_;
};

struct HandoverRun
{
    ap::HandoverPlan plan;
    bool break_before_make = false;
    std::uint32_t flow = 0;
    std::uint32_t old_link = 0;
    std::uint32_t new_link = 0;
    ap::HandoverReport report;
    std::uint64_t lost0 = 0;
    std::uint64_t dup0 = 0;
    std::uint64_t reord0 = 0;
    std::int64_t b_up_us = -1;
    std::int64_t a_down_us = -1;
    std::uint64_t misses0 = 0;
};

struct StreamQuality
{
    std::size_t windows_expected = 0;
    std::size_t windows_completed = 0;
    double err_sq = 0.0;
    double truth_sq = 0.0;
    double worst_window = 0.0;
    std::uint64_t degraded_chunks = 0;

    double relative_error() const { return truth_sq > 0 ? std::sqrt(err_sq / truth_sq) : std::sqrt(err_sq); }
};

struct RunResult
{
    sim::MetricsSnapshot snapshot;
    std::vector<nlohmann::json> records;
    nlohmann::json report;
    nlohmann::json cloud_state;
};

/// One simulated deployment built from a validated scenario.
class World
{
public:
    explicit World(const Scenario& sc);
    World(const World&) = delete;
    World& operator=(const World&) = delete;

    RunResult run();

    sim::Engine& engine() { return engine_; }
    const Scenario& scenario() const { return sc_; }
    SimTime now() const { return engine_.now(); }
    sim::Metrics& metrics() { return engine_.metrics(); }

    LinkRt& link(std::uint32_t i) { return links_[i]; }
    std::size_t link_count() const { return links_.size(); }
    FlowRt& flow(std::uint32_t i) { return flows_[i]; }
    std::size_t flow_count() const { return flows_.size(); }
    Packet& packet(std::uint64_t id) { return packets_.at(id); }
    std::uint32_t node_index(const std::string& id) const { return node_index_.at(id); }
    std::uint32_t link_index(const std::string& id) const { return link_index_.at(id); }
    std::uint32_t flow_index(const std::string& id) const { return flow_index_.at(id); }
    std::uint32_t add_link(LinkRt l)
    {
        links_.push_back(std::move(l));
        return static_cast<std::uint32_t>(links_.size() - 1);
    }
    std::uint32_t add_flow(FlowRt f);

    /// Creates a packet and counts it as sent on its flow (packet-level flows).
    std::uint64_t originate(std::uint32_t flow, std::uint64_t seq, std::size_t bytes, Bytes payload = {});
    void transmit(std::uint32_t link, std::uint64_t pkt);
    void forward_from(std::uint32_t node, std::uint64_t pkt);
    void lose(std::uint64_t pkt, const char* why);
    void arrive(std::uint32_t node, const sim::Event& ev);
    void drop(std::uint64_t pkt) { packets_.erase(pkt); }

    std::vector<node::SensorFrame> window_frames(const SensorSpec& s, std::size_t window) const;
    std::int64_t window_end_us(const SensorSpec& s, std::size_t window) const
    {
        const auto n = static_cast<std::int64_t>(s.pipeline.window_n);
        return s.start_us + (static_cast<std::int64_t>(window) + 1) * n * s.signal.period_us();
    }

    /// Upper bound on the one-way delay of a packet along a route.
    std::int64_t route_delay_bound(const std::vector<std::uint32_t>& route, std::size_t bytes) const
    {
        std::int64_t d = 0;
        for (auto l : route)
            d += links_[l].link.profile.latency_budget_us + sim::serialization_us(bytes, links_[l].link.profile) + 1;
        return d;
    }

    void add_handover_report(nlohmann::json r) { handover_reports_.push_back(std::move(r)); }
    StreamQuality& quality(const std::string& stream) { return quality_[stream]; }

    template <class T>
    T& node_as(std::uint32_t i)
    {
        return static_cast<T&>(engine_.entity(i));
    }

private:
    const Scenario& sc_;
    sim::Engine engine_;
    std::vector<LinkRt> links_;
    std::vector<FlowRt> flows_;
    std::map<std::string, std::uint32_t> node_index_;
    std::map<std::string, std::uint32_t> link_index_;
    std::map<std::string, std::uint32_t> flow_index_;
    std::unordered_map<std::uint64_t, Packet> packets_;
    std::uint64_t next_packet_ = 0;
    std::vector<nlohmann::json> handover_reports_;
    std::map<std::string, StreamQuality> quality_;
    std::uint32_t network_entity_ = 0;

    friend class NetworkEntity;
};

inline void NodeEntity::handle(sim::Engine&, const sim::Event& ev)
{
    if (ev.kind == kArrive)
        world_.arrive(index_, ev);
    else
        on_event(ev);
}

inline void NodeEntity::pass(std::uint64_t pkt, std::uint32_t) { world_.forward_from(index_, pkt); }

inline std::uint32_t World::add_flow(FlowRt f)
{
    f.counters = &engine_.metrics().flow(f.id);
    flow_index_[f.id] = static_cast<std::uint32_t>(flows_.size());
    flows_.push_back(std::move(f));
    return static_cast<std::uint32_t>(flows_.size() - 1);
}

inline std::uint64_t World::originate(std::uint32_t flow, std::uint64_t seq, std::size_t bytes, Bytes payload)
{
    const auto id = next_packet_++;
    packets_.emplace(id, Packet{flow, seq, now().us, bytes, std::move(payload)});
    if (!flows_[flow].message_level)
        ++flows_[flow].counters->sent;
    return id;
}

inline void World::lose(std::uint64_t pkt, const char* why)
{
    auto& p = packets_.at(pkt);
    auto& f = flows_[p.flow];
    if (f.message_level)
        metrics().add("flow." + f.id + ".attempts_lost");
    else
        ++f.counters->lost;
    metrics().add(std::string("loss.") + why);
    packets_.erase(pkt);
}

inline void World::transmit(std::uint32_t li, std::uint64_t pkt)
{
    auto& l = links_[li];
    if (!l.link.up) {
        lose(pkt, "link_down");
        return;
    }
    const auto& p = packets_.at(pkt);
    l.bytes_since_probe += p.bytes;
    const auto outcome = sim::channel_transmit(l.link, p.bytes, now());
    if (std::holds_alternative<sim::Lost>(outcome)) {
        lose(pkt, "channel");
        return;
    }
    engine_.schedule_at(std::get<sim::Delivered>(outcome).at, l.to, kArrive, detail::pack(pkt, li, l.link.epoch));
}

inline void World::forward_from(std::uint32_t node, std::uint64_t pkt)
{
    const auto& f = flows_[packets_.at(pkt).flow];
    const auto next = f.next_link[node];
    if (next < 0) {
        lose(pkt, "no_route");
        return;
    }
    transmit(static_cast<std::uint32_t>(next), pkt);
}

inline void World::arrive(std::uint32_t node, const sim::Event& ev)
{
    const auto u = detail::unpack(ev.payload);
    const auto pkt = u.a;
    if (links_[u.b].link.epoch != u.c) {
        lose(pkt, "torn_down_in_flight");
        return;
    }
    auto& p = packets_.at(pkt);
    auto& f = flows_[p.flow];
    auto& self = static_cast<NodeEntity&>(engine_.entity(node));
    if (node != f.dst) {
        self.pass(pkt, u.b);
        return;
    }
    auto& c = *f.counters;
    if (f.delivered_seq(p.seq)) {
        ++c.duplicated;
    }
    else {
        if (f.seen.size() <= p.seq)
            f.seen.resize(p.seq + 1, false);
        f.seen[p.seq] = true;
        if (f.any_seen && p.seq < f.highest)
            ++c.reordered;
        f.highest = f.any_seen ? std::max(f.highest, p.seq) : p.seq;
        f.any_seen = true;
        ++c.delivered;
        c.latency.add(now().us - p.created_us);
    }
    self.consume(pkt, u.b);
    packets_.erase(pkt);
}

inline std::vector<node::SensorFrame> World::window_frames(const SensorSpec& s, std::size_t window) const
{
    const auto n = s.pipeline.window_n;
    const auto period = s.signal.period_us();
    std::vector<node::SensorFrame> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(s.signal.evaluate(SimTime{s.start_us + static_cast<std::int64_t>(window * n + i) * period}));
    return out;
}

// ---------------------------------------------------------------------------

class HostEntity : public NodeEntity
{
public:
    using NodeEntity::NodeEntity;

    void start_flow(std::uint32_t flow, const FlowSpec& spec)
    {
        cbr_[flow] = spec;
        world_.engine().schedule_at(SimTime{spec.start_us}, index_, kCbrSend, detail::pack(0, flow));
    }

    void on_event(const sim::Event& ev) override
    {
        if (ev.kind != kCbrSend)
            return;
        const auto u = detail::unpack(ev.payload);
        const auto& spec = cbr_.at(u.b);
        auto pkt = world_.originate(u.b, u.a, spec.payload_bytes);
        world_.forward_from(index_, pkt);
        if (u.a + 1 >= spec.count) {
            world_.flow(u.b).source_done = true;
            return;
        }
        const auto next = world_.now() + spec.interval_us;
        if (next.us <= world_.scenario().duration_us)
            world_.engine().schedule_at(next, index_, kCbrSend, detail::pack(u.a + 1, u.b));
    }

private:
    std::map<std::uint32_t, FlowSpec> cbr_;
};

class RelayEntity : public NodeEntity
{
public:
    RelayEntity(World& w, std::uint32_t index, const std::string& id)
        : NodeEntity(w, index), id_(id), rng_(w.scenario().seed, "relay:" + id)
    {
    }

    void pass(std::uint64_t pkt, std::uint32_t) override
    {
        auto& p = world_.packet(pkt);
        const auto& f = world_.flow(p.flow);
        const auto in = rlnc::CodedPacket::parse(p.payload);
        if (auto out = relay_.forward(f.id, in, rng_)) {
            p.payload = out->serialize();
            p.bytes = p.payload.size();
            world_.metrics().add("relay." + id_ + ".recoded");
        }
        world_.forward_from(index_, pkt);
    }

private:
    std::string id_;
    node::Relay relay_{1};
    sim::RngStream rng_;
};

// ---------------------------------------------------------------------------

class ApEntity : public NodeEntity
{
public:
    ApEntity(World& w, std::uint32_t index, const std::string& id) : NodeEntity(w, index), id_(id) {}

    static ap::PortId port_of(std::uint32_t link) { return link + 1; }

    void setup()
    {
        for (std::uint32_t i = 0; i < world_.link_count(); ++i) {
            const auto& l = world_.link(i);
            if (l.from != index_)
                continue;
            table_.add_port(port_of(i));
            rm_.add_interface(l.link.id, l.link.channel);
            ifaces_.push_back(i);
        }
        for (std::uint32_t f = 0; f < world_.flow_count(); ++f) {
            const auto& fl = world_.flow(f);
            if (index_ >= fl.next_link.size() || fl.next_link[index_] < 0 || fl.dst == index_)
                continue;
            const auto egress = static_cast<std::uint32_t>(fl.next_link[index_]);
            install(f, egress, kBasePriority);
            rm_.bind(fl.id, world_.link(egress).link.id);
        }
    }

    void schedule_telemetry(std::int64_t interval)
    {
        telemetry_interval_ = interval;
        world_.engine().schedule_at(SimTime{interval}, index_, kTelemetry);
    }

    void pass(std::uint64_t pkt, std::uint32_t in_link) override
    {
        const auto& p = world_.packet(pkt);
        const auto& f = world_.flow(p.flow);
        const auto misses = table_.misses();
        const auto action = table_.lookup(ap::PacketKey{port_of(in_link), f.id});
        if (const auto* fw = std::get_if<ap::Forward>(&action)) {
            world_.transmit(fw->port - 1, pkt);
            return;
        }
        if (table_.misses() != misses) {
            world_.metrics().add("ap." + id_ + ".table_misses");
            world_.metrics().record({{"type", "PacketInMiss"}, {"t_us", world_.now().us}, {"ap", id_},
                                     {"flow_id", f.id}, {"ingress_port", port_of(in_link)}});
        }
        world_.lose(pkt, "flow_table_drop");
    }

    void on_event(const sim::Event& ev) override
    {
        switch (ev.kind) {
        case kTelemetry: telemetry(); break;
        case kHandoverStart: {
            const auto& he = world_.scenario().handover.events.at(detail::unpack(ev.payload).a);
            start_handover(world_.flow_index(he.flow), world_.link_index(he.to_link), he.break_before_make);
            break;
        }
        case kHandoverEstablished: established(detail::unpack(ev.payload).a); break;
        case kHandoverTeardown: teardown(detail::unpack(ev.payload).a); break;
        case kHandoverFinalize: finalize(detail::unpack(ev.payload).a); break;
        default: break;
        }
    }

    void start_handover(std::uint32_t flow, std::uint32_t new_link, bool bbm)
    {
        const auto& f = world_.flow(flow);
        const auto now = world_.now();
        if (active_.count(flow) || egress_.at(flow) == new_link) {
            world_.metrics().record({{"type", "HandoverSkipped"}, {"t_us", now.us}, {"flow_id", f.id},
                                     {"reason", active_.count(flow) ? "in progress" : "already bound"}});
            return;
        }
        HandoverRun h;
        h.flow = flow;
        h.old_link = egress_.at(flow);
        h.new_link = new_link;
        h.break_before_make = bbm;
        const auto& ol = world_.link(h.old_link).link;
        const auto& nl = world_.link(new_link).link;
        h.plan = ap::HandoverPlan{f.id, ol.id, nl.id, nl.channel, ap::HandoverState::Idle};
        h.plan.advance(ap::HandoverState::Establishing);
        h.report.flow_id = f.id;
        h.report.mode = bbm ? "break-before-make" : "make-before-break";
        h.report.old_iface = ol.id;
        h.report.new_iface = nl.id;
        h.report.started_at_us = now.us;
        h.lost0 = f.counters->lost;
        h.dup0 = f.counters->duplicated;
        h.reord0 = f.counters->reordered;
        h.misses0 = table_.misses();
        world_.metrics().record({{"type", "HandoverStart"}, {"t_us", now.us}, {"ap", id_}, {"flow_id", f.id},
                                 {"old_iface", ol.id}, {"new_iface", nl.id}, {"mode", h.report.mode}});
        if (bbm) {
            port_down(h.old_link);
            h.a_down_us = now.us;
        }
        const auto idx = runs_.size();
        runs_.push_back(std::move(h));
        active_[flow] = idx;
        world_.engine().schedule_in(world_.scenario().handover.establish_us, index_, kHandoverEstablished,
                                    detail::pack(idx));
    }

    const ap::RadioManagement& radio() const { return rm_; }
    const ap::FlowTable& table() const { return table_; }

    nlohmann::json state() const
    {
        nlohmann::json links = nlohmann::json::object();
        for (const auto& [id, s] : rm_.links())
            links[id] = s.to_json();
        nlohmann::json rules = nlohmann::json::array();
        for (const auto& r : table_.rules())
            rules.push_back(r.to_json());
        return {{"links", links}, {"rules", rules}, {"table_misses", table_.misses()}};
    }

private:
    static constexpr int kBasePriority = 10;

    void install(std::uint32_t flow, std::uint32_t egress, int priority)
    {
        const auto& f = world_.flow(flow);
        ap::FlowRule r;
        r.priority = priority;
        r.match.flow_id = f.id;
        r.action = ap::Forward{port_of(egress)};
        r.installed_at = world_.now();
        const auto id = table_.install(r);
        r.rule_id = id;
        auto rec = r.to_json();
        rec["type"] = "InstallRule";
        rec["t_us"] = world_.now().us;
        rec["ap"] = id_;
        world_.metrics().record(std::move(rec));
        if (auto it = rule_.find(flow); it != rule_.end())
            remove(it->second);
        rule_[flow] = id;
        priority_[flow] = priority;
        egress_[flow] = egress;
    }

    void remove(std::uint64_t rule_id)
    {
        table_.remove(rule_id);
        world_.metrics().record(
            {{"type", "RemoveRule"}, {"t_us", world_.now().us}, {"ap", id_}, {"rule_id", rule_id}});
    }

    void port_down(std::uint32_t link)
    {
        world_.link(link).link.bring_down();
        world_.metrics().record({{"type", "PortDown"},
                                 {"t_us", world_.now().us},
                                 {"ap", id_},
                                 {"port", port_of(link)},
                                 {"iface", world_.link(link).link.id}});
    }

    void port_up(std::uint32_t link)
    {
        world_.link(link).link.bring_up();
        world_.metrics().record({{"type", "PortUp"},
                                 {"t_us", world_.now().us},
                                 {"ap", id_},
                                 {"port", port_of(link)},
                                 {"iface", world_.link(link).link.id}});
    }

    void telemetry()
    {
        const auto now = world_.now();
        const auto& hs = world_.scenario().handover;
        for (auto li : ifaces_) {
            auto& l = world_.link(li);
            if (!l.probe_rng)
                l.probe_rng = std::make_unique<sim::RngStream>(world_.scenario().seed, "probe:" + l.link.id);
            ap::TelemetrySample s;
            const double loss_draw = l.probe_rng->uniform();
            const double prop_draw = l.probe_rng->uniform(0.5, 1.0);
            const auto& prof = l.link.profile;
            s.lost = !l.available || loss_draw < prof.loss_probability;
            s.latency_us = static_cast<double>(sim::serialization_us(hs.probe_bytes, prof)) +
                           std::floor(prop_draw * static_cast<double>(prof.latency_budget_us));
            s.busy_fraction = static_cast<double>(l.bytes_since_probe) * 8.0 /
                              (prof.uplink_capacity_bps * static_cast<double>(telemetry_interval_) * 1e-6);
            l.bytes_since_probe = 0;
            rm_.report(l.link.id, s, now);
        }
        world_.metrics().add("ap." + id_ + ".telemetry_rounds");
        if (hs.automatic) {
            for (const auto& [flow, egress] : egress_) {
                if (active_.count(flow))
                    continue;
                const auto plan = rm_.evaluate_handover(world_.flow(flow).id, hs.policy, now);
                if (plan)
                    start_handover(flow, world_.link_index(plan->new_iface), false);
            }
        }
        if (now.us + telemetry_interval_ <= world_.scenario().duration_us)
            world_.engine().schedule_in(telemetry_interval_, index_, kTelemetry);
    }

    void established(std::size_t idx)
    {
        auto& h = runs_[idx];
        const auto now = world_.now();
        auto& nl = world_.link(h.new_link);
        if (!nl.available) {
            const EstablishFailure err("link " + nl.link.id + " could not be brought up");
            h.report.aborted = true;
            h.report.abort_reason = err.what();
            h.report.completed_at_us = now.us;
            if (h.break_before_make)
                port_up(h.old_link);
            world_.metrics().record({{"type", "HandoverAborted"},
                                     {"t_us", now.us},
                                     {"ap", id_},
                                     {"flow_id", h.report.flow_id},
                                     {"reason", h.report.abort_reason}});
            finalize(idx);
            return;
        }
        port_up(h.new_link);
        h.b_up_us = now.us;
        if (!h.break_before_make)
            h.plan.advance(ap::HandoverState::DualActive);
        // Higher-priority rule first, then drop the old one: a lookup always
        // finds a rule for the flow.
        install(h.flow, h.new_link, priority_.at(h.flow) + 1);
        h.report.packets_in_flight_at_switch = world_.flow(h.flow).counters->in_flight();
        h.report.reroute_time_us = now.us - h.report.started_at_us;
        const auto& old = world_.link(h.old_link).link;
        if (h.break_before_make) {
            h.report.dual_active_us = 0;
            // The counterfactual never passes through DualActive, so it sits
            // outside the make-before-break machine.
            h.plan.state = ap::HandoverState::Complete;
            complete(idx);
            return;
        }
        h.plan.advance(ap::HandoverState::Rerouted);
        const auto& st = rm_.state(old.id);
        const double ewma = st.reports > 0 ? st.latency_ewma_us : static_cast<double>(old.profile.latency_budget_us);
        const auto drain = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(2.0 * ewma)));
        world_.engine().schedule_in(drain, index_, kHandoverTeardown, detail::pack(idx));
    }

    void teardown(std::size_t idx)
    {
        auto& h = runs_[idx];
        if (!h.plan.teardown_allowed())
            throw IllegalTransition("teardown outside Rerouted");
        port_down(h.old_link);
        h.a_down_us = world_.now().us;
        h.report.dual_active_us = h.a_down_us - h.b_up_us;
        h.plan.advance(ap::HandoverState::Complete);
        complete(idx);
    }

    void complete(std::size_t idx)
    {
        auto& h = runs_[idx];
        const auto now = world_.now();
        h.report.completed_at_us = now.us;
        rm_.bind(h.report.flow_id, world_.link(h.new_link).link.id);
        rm_.handover_completed(h.report.flow_id, now);
        // Wait until everything sent before the switch has landed or been lost.
        const auto& f = world_.flow(h.flow);
        auto route = f.route;
        route.push_back(h.new_link);
        world_.engine().schedule_in(world_.route_delay_bound(route, 1500), index_, kHandoverFinalize,
                                    detail::pack(idx));
    }

    void finalize(std::size_t idx)
    {
        auto& h = runs_[idx];
        const auto& c = *world_.flow(h.flow).counters;
        h.report.packets_lost_during_handover = c.lost - h.lost0;
        h.report.duplicates = c.duplicated - h.dup0;
        h.report.reordered = c.reordered - h.reord0;
        auto j = h.report.to_json();
        j["final_state"] = std::string(ap::to_string(h.plan.state));
        j["new_link_up_at_us"] = h.b_up_us;
        j["old_link_down_at_us"] = h.a_down_us;
        j["table_misses_during_handover"] = table_.misses() - h.misses0;
        j["finalized_at_us"] = world_.now().us;
        auto rec = j;
        rec["type"] = "HandoverReport";
        rec["t_us"] = world_.now().us;
        world_.metrics().record(std::move(rec));
        world_.add_handover_report(std::move(j));
        active_.erase(h.flow);
    }

    std::string id_;
    ap::FlowTable table_;
    ap::RadioManagement rm_;
    std::vector<std::uint32_t> ifaces_;
    std::map<std::uint32_t, std::uint64_t> rule_;
    std::map<std::uint32_t, int> priority_;
    std::map<std::uint32_t, std::uint32_t> egress_;
    std::vector<HandoverRun> runs_;
    std::map<std::uint32_t, std::size_t> active_;
    std::int64_t telemetry_interval_ = 10'000;
};

// ---------------------------------------------------------------------------

class SensorEntity : public NodeEntity
{
public:
    SensorEntity(World& w, std::uint32_t index, const NodeSpec& spec)
        : NodeEntity(w, index), spec_(spec), battery_(spec.sensor.battery),
          rng_(w.scenario().seed, "sensor:" + spec.id)
    {
    }

    void start(std::uint32_t flow)
    {
        flow_ = flow;
        world_.quality(spec_.id).windows_expected = spec_.sensor.windows;
        schedule_window(0);
    }

    void on_event(const sim::Event& ev) override
    {
        if (ev.kind == kSensorWindow)
            emit_window(static_cast<std::size_t>(detail::unpack(ev.payload).a));
        else if (ev.kind == kSensorPacket)
            send_next();
    }

    void finish(SimTime end) override
    {
        battery_.accrue_idle(end);
        world_.metrics().energy(spec_.id) = battery_.drawn_uj;
    }

private:
    void schedule_window(std::size_t w)
    {
        const auto at = world_.window_end_us(spec_.sensor, w);
        if (w >= spec_.sensor.windows || at > world_.scenario().duration_us) {
            if (queue_.empty())
                world_.flow(flow_).source_done = true;
            done_scheduling_ = true;
            return;
        }
        world_.engine().schedule_at(SimTime{at}, index_, kSensorWindow, detail::pack(w));
    }

    void emit_window(std::size_t w)
    {
        const auto now = world_.now();
        const auto& s = spec_.sensor;
        try {
            const auto frames = world_.window_frames(s, w);
            for (std::size_t i = 0; i < frames.size(); ++i)
                battery_.charge_sample(now);
            auto pkts = node::pipeline_encode(frames, s.pipeline, static_cast<std::uint32_t>(w), battery_, rng_, now);
            const bool was_idle = queue_.empty();
            for (auto& p : pkts)
                queue_.push_back(p.serialize());
            if (was_idle && !queue_.empty())
                send_next();
        }
        catch (const BatteryDepleted&) {
            world_.metrics().record({{"type", "BatteryDepleted"}, {"t_us", now.us}, {"node", spec_.id}});
            done_scheduling_ = true;
            if (queue_.empty())
                world_.flow(flow_).source_done = true;
            return;
        }
        schedule_window(w + 1);
    }

    void send_next()
    {
        if (queue_.empty())
            return;
        auto payload = std::move(queue_.front());
        queue_.pop_front();
        const auto bytes = payload.size();
        auto pkt = world_.originate(flow_, seq_++, bytes, std::move(payload));
        world_.forward_from(index_, pkt);
        if (!queue_.empty())
            world_.engine().schedule_in(spec_.sensor.packet_spacing_us, index_, kSensorPacket);
        else if (done_scheduling_)
            world_.flow(flow_).source_done = true;
    }

    const NodeSpec& spec_;
    node::BatteryState battery_;
    sim::RngStream rng_;
    std::uint32_t flow_ = 0;
    std::uint64_t seq_ = 0;
    std::deque<Bytes> queue_;
    bool done_scheduling_ = false;
};

// ---------------------------------------------------------------------------

class GatewayEntity : public NodeEntity
{
public:
    GatewayEntity(World& w, std::uint32_t index, const NodeSpec& spec)
        : NodeEntity(w, index), spec_(spec),
          gw_({spec.gateway.gateway_id, spec.gateway.max_buffer_bytes, spec.gateway.mode,
               spec.gateway.security_overhead_bytes}),
          tariff_(gateway::select_provider(spec.gateway.tariffs))
    {
        const auto& g = spec.gateway;
        for (const auto& a : g.adapters) {
            gw_.register_adapter(a.id, a.kind);
            traffic_.emplace_back(w.scenario().seed, "traffic:" + g.traffic + ":" + std::to_string(a.id));
        }
        stop_at_ = w.scenario().duration_us - static_cast<std::int64_t>(g.max_retries + 2) * g.ack_timeout_us;
    }

    void start(std::uint32_t flow)
    {
        flow_ = flow;
        const auto& g = spec_.gateway;
        world_.metrics().record({{"type", "ProviderSelected"},
                                 {"t_us", 0},
                                 {"gateway", spec_.id},
                                 {"provider_id", tariff_.provider_id},
                                 {"signal_strength", tariff_.signal_strength}});
        for (std::uint32_t i = 0; i < g.adapters.size(); ++i) {
            // Phase offsets come from the traffic stream so identical traffic
            // names produce identical readings on every gateway.
            const auto phase = static_cast<std::int64_t>(traffic_[i].below(static_cast<std::uint64_t>(g.adapters[i].interval_us)));
            if (phase <= stop_at_)
                world_.engine().schedule_at(SimTime{phase}, index_, kReading, detail::pack(0, i));
        }
        if (g.timer_us <= stop_at_)
            world_.engine().schedule_at(SimTime{g.timer_us}, index_, kGatewayTimer);
        if (stop_at_ < 0)
            world_.flow(flow_).source_done = true;
    }

    void on_event(const sim::Event& ev) override
    {
        switch (ev.kind) {
        case kReading: reading(detail::unpack(ev.payload).b); break;
        case kGatewayTimer: timer(); break;
        case kAck: outstanding_.erase(detail::unpack(ev.payload).a); break;
        case kAckTimeout: timeout(detail::unpack(ev.payload).a); break;
        default: break;
        }
    }

    void finish(SimTime) override
    {
        const std::string p = "gateway." + spec_.id;
        auto& m = world_.metrics();
        m.counter(p + ".evictions") = static_cast<double>(gw_.evictions());
        m.counter(p + ".buffered_at_end") = static_cast<double>(gw_.buffered_count());
    }

    nlohmann::json summary() const
    {
        return {{"gateway_id", spec_.gateway.gateway_id},
                {"mode", gateway::mode_name(spec_.gateway.mode)},
                {"provider_id", tariff_.provider_id},
                {"batches", batches_},
                {"transmissions", transmissions_},
                {"bytes", bytes_},
                {"records", records_},
                {"cost", cost_},
                {"gave_up", gave_up_},
                {"evictions", gw_.evictions()},
                {"buffered_at_end", gw_.buffered_count()}};
    }

private:
    struct Outstanding
    {
        Bytes payload;
        std::size_t bytes = 0;
        unsigned attempts = 0;
    };

    void reading(std::uint32_t ai)
    {
        const auto now = world_.now();
        const auto& a = spec_.gateway.adapters[ai];
        auto& rng = traffic_[ai];
        for (std::uint16_t ch = 0; ch < a.channels; ++ch) {
            const double wave = a.amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(now.us) /
                                                       static_cast<double>(a.period_us));
            const double v = a.base + wave + (a.noise_sd > 0 ? rng.normal(0.0, a.noise_sd) : 0.0);
            if (a.alarm_above && v > *a.alarm_above)
                gw_.raise_alarm();
            gw_.ingest(a.id, gateway::Reading{a.id, now.us, ch, static_cast<std::int64_t>(std::llround(v))});
            if (auto b = gw_.flush(now, gateway::Trigger::ingest))
                send_batch(*b);
        }
        const auto next = now + a.interval_us;
        if (next.us <= stop_at_)
            world_.engine().schedule_at(next, index_, kReading, detail::pack(0, ai));
    }

    void timer()
    {
        const auto now = world_.now();
        if (auto b = gw_.flush(now, gateway::Trigger::timer))
            send_batch(*b);
        const auto next = now + spec_.gateway.timer_us;
        if (next.us <= stop_at_)
            world_.engine().schedule_at(next, index_, kGatewayTimer);
        else
            world_.flow(flow_).source_done = true;
    }

    void send_batch(const gateway::Batch& b)
    {
        ++batches_;
        records_ += b.records.size();
        ++world_.flow(flow_).counters->sent;
        Outstanding o{b.serialize(), gw_.wire_bytes(b), 0};
        world_.metrics().record({{"type", "GatewayBatch"},
                                 {"t_us", world_.now().us},
                                 {"gateway", spec_.id},
                                 {"seq", b.seq},
                                 {"records", b.records.size()},
                                 {"bytes", o.bytes},
                                 {"alarm", (b.flags & gateway::kFlagAlarm) != 0}});
        auto& slot = outstanding_[b.seq] = std::move(o);
        attempt(b.seq, slot);
    }

    void attempt(std::uint64_t seq, Outstanding& o)
    {
        ++o.attempts;
        ++transmissions_;
        bytes_ += o.bytes;
        cost_ += gateway::transfer_cost(o.bytes, tariff_);
        auto pkt = world_.originate(flow_, seq, o.bytes, o.payload);
        world_.forward_from(index_, pkt);
        world_.engine().schedule_in(spec_.gateway.ack_timeout_us, index_, kAckTimeout, detail::pack(seq));
    }

    void timeout(std::uint64_t seq)
    {
        auto it = outstanding_.find(seq);
        if (it == outstanding_.end())
            return;
        if (it->second.attempts <= spec_.gateway.max_retries) {
            world_.metrics().add("gateway." + spec_.id + ".retransmissions");
            attempt(seq, it->second);
            return;
        }
        ++gave_up_;
        auto& f = world_.flow(flow_);
        if (!f.delivered_seq(seq))
            ++f.counters->lost;
        outstanding_.erase(it);
    }

    const NodeSpec& spec_;
    gateway::Gateway gw_;
    gateway::Tariff tariff_;
    std::vector<sim::RngStream> traffic_;
    std::int64_t stop_at_ = 0;
    std::uint32_t flow_ = 0;
    std::map<std::uint64_t, Outstanding> outstanding_;
    std::uint64_t batches_ = 0;
    std::uint64_t transmissions_ = 0;
    std::uint64_t bytes_ = 0;
    std::uint64_t records_ = 0;
    std::uint64_t gave_up_ = 0;
    double cost_ = 0.0;
};

// ---------------------------------------------------------------------------

/// A population of identical low-rate devices, each on its own radio link
/// and flow. One entity drives all of them so the engine stays small.
class MmtcGroupEntity : public NodeEntity
{
public:
    MmtcGroupEntity(World& w, std::uint32_t index, const NodeSpec& spec)
        : NodeEntity(w, index), spec_(spec), rng_(w.scenario().seed, "mmtc:" + spec.id)
    {
    }

    void setup()
    {
        const auto& m = spec_.mmtc;
        const auto& sc = world_.scenario();
        const auto dst = world_.node_index(m.dst);
        const auto& prof = sc.profiles.at(m.profile);
        const int width = static_cast<int>(std::to_string(m.count - 1).size());
        devices_.resize(m.count);
        for (std::size_t d = 0; d < m.count; ++d) {
            auto name = std::to_string(d);
            name = spec_.id + "/" + std::string(static_cast<std::size_t>(width) - name.size(), '0') + name;
            LinkRt l;
            l.link.id = name;
            l.link.channel = m.profile;
            l.link.profile = prof;
            l.link.rng = sim::RngStream(sc.seed, "link:" + name);
            l.from = index_;
            l.to = dst;
            const auto li = world_.add_link(std::move(l));
            FlowRt f;
            f.id = name;
            f.src = index_;
            f.dst = dst;
            f.next_link.assign(world_.engine().entity_count(), -1);
            f.next_link[index_] = static_cast<std::int32_t>(li);
            f.route = {li};
            auto& dev = devices_[d];
            dev.flow = world_.add_flow(std::move(f));
            dev.battery = m.battery;
        }
        stop_at_ = sc.duration_us - world_.route_delay_bound({world_.flow(devices_[0].flow).route}, m.payload_bytes);
        for (std::size_t d = 0; d < m.count; ++d) {
            const auto phase = static_cast<std::int64_t>(rng_.below(static_cast<std::uint64_t>(m.report_interval_us)));
            if (phase <= stop_at_)
                world_.engine().schedule_at(SimTime{phase}, index_, kDeviceSend, detail::pack(d));
            else
                world_.flow(devices_[d].flow).source_done = true;
        }
    }

    void on_event(const sim::Event& ev) override
    {
        if (ev.kind != kDeviceSend)
            return;
        const auto d = detail::unpack(ev.payload).a;
        auto& dev = devices_[d];
        const auto& m = spec_.mmtc;
        const auto now = world_.now();
        charge_samples(dev, now);
        if (dev.battery.depleted()) {
            world_.flow(dev.flow).source_done = true;
            return;
        }
        dev.battery.charge_tx(now, m.payload_bytes);
        auto pkt = world_.originate(dev.flow, dev.seq++, m.payload_bytes);
        world_.forward_from(index_, pkt);
        const auto next = now + m.report_interval_us;
        if (next.us <= stop_at_)
            world_.engine().schedule_at(next, index_, kDeviceSend, detail::pack(d));
        else
            world_.flow(dev.flow).source_done = true;
    }

    void finish(SimTime end) override
    {
        double total = 0;
        for (std::size_t d = 0; d < devices_.size(); ++d) {
            auto& dev = devices_[d];
            charge_samples(dev, end);
            dev.battery.accrue_idle(end);
            world_.metrics().energy(world_.flow(dev.flow).id) = dev.battery.drawn_uj;
            total += dev.battery.drawn_uj;
        }
        world_.metrics().counter("mmtc." + spec_.id + ".energy_uj_total") = total;
    }

    /// Lifetime of a fresh device at the configured duty cycle.
    nlohmann::json projection() const
    {
        const auto& m = spec_.mmtc;
        const node::DutyCycle duty{m.samples_per_s, static_cast<double>(m.payload_bytes) * 1e6 /
                                                        static_cast<double>(m.report_interval_us)};
        const double power = node::average_power_uw(m.battery, duty);
        const double life = node::project_lifetime(m.battery, duty);
        return {{"group", spec_.id},
                {"devices", m.count},
                {"samples_per_s", duty.samples_per_s},
                {"tx_bytes_per_s", duty.tx_bytes_per_s},
                {"average_power_uw", power},
                {"lifetime_s", life},
                {"lifetime_years", life / (365.0 * 86400.0)}};
    }

private:
    struct Device
    {
        std::uint32_t flow = 0;
        std::uint64_t seq = 0;
        node::BatteryState battery;
        std::uint64_t samples_charged = 0;
    };

    // Sampling runs continuously at samples_per_s; it is settled lazily.
    void charge_samples(Device& dev, SimTime now)
    {
        const auto due = static_cast<std::uint64_t>(std::floor(now.seconds() * spec_.mmtc.samples_per_s));
        if (due > dev.samples_charged) {
            dev.battery.accrue_idle(now);
            dev.battery.draw(static_cast<double>(due - dev.samples_charged) * dev.battery.sample_cost_uj);
            dev.samples_charged = due;
        }
    }

    const NodeSpec& spec_;
    sim::RngStream rng_;
    std::vector<Device> devices_;
    std::int64_t stop_at_ = 0;
};

// ---------------------------------------------------------------------------

class CloudEntity : public NodeEntity
{
public:
    CloudEntity(World& w, std::uint32_t index, const NodeSpec& spec) : NodeEntity(w, index), spec_(spec)
    {
        for (const auto& [sub, filter] : spec.cloud.subscriptions) {
            subs_.push_back(broker_.subscribe(sub, filter));
            sub_records_[sub] += 0;
        }
    }

    void add_stream(std::uint32_t flow, const NodeSpec& sensor)
    {
        auto& s = streams_[flow];
        s.cfg = cloud::StreamConfig{sensor.id, sensor.sensor.pipeline, sensor.sensor.side_info};
        s.sensor = &sensor;
        const auto& an = world_.scenario().anomaly;
        s.detect = std::find(an.streams.begin(), an.streams.end(), sensor.id) != an.streams.end();
        by_name_[sensor.id] = flow;
    }

    void consume(std::uint64_t pkt, std::uint32_t in_link) override
    {
        const auto& p = world_.packet(pkt);
        const auto& f = world_.flow(p.flow);
        if (f.kind == FlowKind::sensor)
            coded(p.flow, rlnc::CodedPacket::parse(p.payload));
        else if (f.kind == FlowKind::gateway)
            batch(p, in_link);
    }

    void on_event(const sim::Event&) override {}

    nlohmann::json state() const
    {
        nlohmann::json streams = nlohmann::json::object();
        for (const auto& [flow, s] : streams_) {
            nlohmann::json j{{"windows_completed", s.done.size()},
                             {"windows_pending", s.pending.size()},
                             {"stages", s.counters.to_json()},
                             {"side_info", s.cfg.side_info ? nlohmann::json(*s.cfg.side_info) : nlohmann::json()}};
            if (s.model) {
                j["anomaly_model"] = {{"trained_on", s.model->trained_on},
                                      {"threshold_k", s.model->threshold_k},
                                      {"length", s.model->mean.size()}};
                j["alarms"] = s.alarms;
            }
            streams[s.cfg.id] = j;
        }
        return {{"broker", broker_.to_json()}, {"streams", streams}, {"subscriber_records", sub_records_}};
    }

private:
    struct Stream
    {
        cloud::StreamConfig cfg;
        const NodeSpec* sensor = nullptr;
        std::map<std::uint32_t, std::vector<rlnc::CodedPacket>> pending;
        std::map<std::uint32_t, cloud::Reconstruction> done;
        cloud::StageCounters counters;
        bool detect = false;
        std::vector<std::vector<double>> training;
        std::optional<cloud::AnomalyModel> model;
        std::uint64_t alarms = 0;
    };

    void coded(std::uint32_t flow, rlnc::CodedPacket pkt)
    {
        auto& s = streams_.at(flow);
        const auto gen = pkt.generation_id;
        if (s.done.count(gen)) {
            world_.metrics().add("cloud." + spec_.id + ".late_packets");
            return;
        }
        auto& buf = s.pending[gen];
        buf.push_back(std::move(pkt));
        if (buf.size() >= s.cfg.pipeline.rlnc.k)
            attempt(flow, gen);
    }

    void attempt(std::uint32_t flow, std::uint32_t gen)
    {
        auto& s = streams_.at(flow);
        auto it = s.pending.find(gen);
        if (it == s.pending.end() || s.done.count(gen))
            return;
        const cloud::Reconstruction* side = nullptr;
        if (s.cfg.side_info) {
            auto& prov = streams_.at(by_name_.at(*s.cfg.side_info));
            auto d = prov.done.find(gen);
            if (d == prov.done.end()) {
                parked_[{*s.cfg.side_info, gen}].insert(flow);
                return;
            }
            side = &d->second;
        }
        auto result = cloud::reconstruct(s.cfg, it->second, side, s.counters);
        if (std::holds_alternative<cloud::Incomplete>(result))
            return;
        auto& rec = s.done[gen] = std::move(std::get<cloud::Reconstruction>(result));
        s.pending.erase(gen);
        evaluate(s, rec);
        if (auto p = parked_.find({s.cfg.id, gen}); p != parked_.end()) {
            const auto waiting = p->second;
            parked_.erase(p);
            for (auto f : waiting)
                attempt(f, gen);
        }
    }

    void evaluate(Stream& s, const cloud::Reconstruction& rec)
    {
        const auto now = world_.now();
        const auto frames = world_.window_frames(s.sensor->sensor, rec.window);
        std::vector<double> truth;
        for (auto ch : rec.channels) {
            const auto v = node::channel_samples(frames, ch);
            truth.insert(truth.end(), v.begin(), v.end());
        }
        const auto est = rec.flatten();
        double e = 0, t = 0;
        for (std::size_t i = 0; i < est.size(); ++i) {
            e += (est[i] - truth[i]) * (est[i] - truth[i]);
            t += truth[i] * truth[i];
        }
        auto& q = world_.quality(s.cfg.id);
        ++q.windows_completed;
        q.err_sq += e;
        q.truth_sq += t;
        const double rel = t > 0 ? std::sqrt(e / t) : std::sqrt(e);
        q.worst_window = std::max(q.worst_window, rel);
        q.degraded_chunks += rec.degraded.size();
        nlohmann::json r{{"type", "reconstruction"},  {"t_us", now.us},
                         {"stream", s.cfg.id},         {"window", rec.window},
                         {"rel_l2", rel},              {"degraded_chunks", rec.degraded.size()}};
        if (s.detect) {
            const auto x = rec.flatten();
            if (!s.model) {
                s.training.push_back(x);
                if (s.training.size() == world_.scenario().anomaly.train_windows) {
                    s.model = cloud::train(s.training, world_.scenario().anomaly.threshold_k);
                    world_.metrics().record({{"type", "AnomalyModelTrained"},
                                             {"t_us", now.us},
                                             {"stream", s.cfg.id},
                                             {"trained_on", s.model->trained_on}});
                }
            }
            else {
                const auto [score, index] = cloud::anomaly_score(*s.model, x);
                r["score"] = score;
                r["threshold"] = s.model->threshold_k;
                if (auto alarm = cloud::detect(*s.model, x)) {
                    ++s.alarms;
                    sim::AlarmRecord a;
                    a.t_us = now.us;
                    a.stream = s.cfg.id;
                    a.score = alarm->score;
                    a.threshold = alarm->threshold_k;
                    a.window = rec.window;
                    a.degraded_chunks = rec.degraded.size();
                    world_.metrics().alarm(std::move(a));
                }
            }
        }
        world_.metrics().record(std::move(r));
    }

    void batch(const Packet& p, std::uint32_t in_link)
    {
        const auto& f = world_.flow(p.flow);
        const auto& gw = *world_.scenario().find_node(world_.engine().entity_name(f.src));
        broker_.publish(gw.gateway.topic, p.payload, gw.id, p.seq);
        for (std::size_t i = 0; i < subs_.size(); ++i)
            for (const auto& m : broker_.drain(subs_[i]))
                sub_records_[spec_.cloud.subscriptions[i].first] += gateway::Batch::parse(m.payload).records.size();
        ack(f, p.seq, in_link);
    }

    /// Acknowledgements travel the reverse route; each hop draws loss and
    /// delay from its own acknowledgement stream.
    void ack(const FlowRt& f, std::uint64_t seq, std::uint32_t)
    {
        auto at = world_.now();
        for (auto it = f.route.rbegin(); it != f.route.rend(); ++it) {
            auto& l = world_.link(*it);
            if (!l.ack_rng)
                l.ack_rng = std::make_unique<sim::RngStream>(world_.scenario().seed, "ack:" + l.link.id);
            const double loss_draw = l.ack_rng->uniform();
            const double prop_draw = l.ack_rng->uniform(0.5, 1.0);
            if (!l.link.up || loss_draw < l.link.profile.loss_probability) {
                world_.metrics().add("cloud." + spec_.id + ".acks_lost");
                return;
            }
            at = at + sim::serialization_us(kAckBytes, l.link.profile) +
                 static_cast<std::int64_t>(std::floor(prop_draw * static_cast<double>(l.link.profile.latency_budget_us)));
        }
        world_.engine().schedule_at(at, f.src, kAck, detail::pack(seq));
    }

    const NodeSpec& spec_;
    cloud::Broker broker_;
    std::vector<cloud::Broker::SubscriptionId> subs_;
    std::map<std::string, std::uint64_t> sub_records_;
    std::map<std::uint32_t, Stream> streams_;
    std::map<std::string, std::uint32_t> by_name_;
    std::map<std::pair<std::string, std::uint32_t>, std::set<std::uint32_t>> parked_;
};

/// Applies scheduled loss changes to links.
class NetworkEntity : public sim::Entity
{
public:
    explicit NetworkEntity(World& w) : world_(w) {}

    void handle(sim::Engine&, const sim::Event& ev) override
    {
        if (ev.kind != kLossChange)
            return;
        const auto u = detail::unpack(ev.payload);
        auto& l = world_.link(u.b);
        const double p = l.loss_schedule.at(u.c).second;
        l.link.profile.loss_probability = p;
        world_.metrics().record(
            {{"type", "LossChange"}, {"t_us", world_.now().us}, {"link", l.link.id}, {"loss_probability", p}});
    }

private:
    World& world_;
};

// ---------------------------------------------------------------------------

inline World::World(const Scenario& sc) : sc_(sc), engine_(sc.seed)
{
    for (std::uint32_t i = 0; i < sc.nodes.size(); ++i) {
        const auto& n = sc.nodes[i];
        node_index_[n.id] = i;
        switch (n.kind) {
        case NodeKind::host: engine_.emplace_entity<HostEntity>(n.id, *this, i); break;
        case NodeKind::ap: engine_.emplace_entity<ApEntity>(n.id, *this, i, n.id); break;
        case NodeKind::relay: engine_.emplace_entity<RelayEntity>(n.id, *this, i, n.id); break;
        case NodeKind::cloud: engine_.emplace_entity<CloudEntity>(n.id, *this, i, n); break;
        case NodeKind::sensor: engine_.emplace_entity<SensorEntity>(n.id, *this, i, n); break;
        case NodeKind::gateway: engine_.emplace_entity<GatewayEntity>(n.id, *this, i, n); break;
        case NodeKind::mmtc_group: engine_.emplace_entity<MmtcGroupEntity>(n.id, *this, i, n); break;
        }
    }
    network_entity_ = engine_.add_entity("network", std::make_unique<NetworkEntity>(*this));

    for (const auto& ls : sc.links) {
        LinkRt l;
        l.link.id = ls.id;
        l.link.channel = ls.channel;
        l.link.profile = ls.profile;
        l.link.up = ls.up;
        l.link.rng = sim::RngStream(sc.seed, "link:" + ls.id);
        l.from = node_index_.at(ls.from);
        l.to = node_index_.at(ls.to);
        l.available = ls.available;
        l.loss_schedule = ls.loss_schedule;
        link_index_[ls.id] = add_link(std::move(l));
    }
    for (std::uint32_t li = 0; li < links_.size(); ++li)
        for (std::uint32_t j = 0; j < links_[li].loss_schedule.size(); ++j)
            engine_.schedule_at(SimTime{links_[li].loss_schedule[j].first}, network_entity_, kLossChange,
                                detail::pack(0, li, j));

    for (const auto& fs : sc.flows) {
        FlowRt f;
        f.id = fs.id;
        f.kind = fs.kind;
        f.message_level = fs.kind == FlowKind::gateway;
        f.src = node_index_.at(fs.src);
        f.dst = node_index_.at(fs.dst);
        f.next_link.assign(engine_.entity_count(), -1);
        for (const auto& lid : fs.route) {
            const auto li = link_index_.at(lid);
            f.next_link[links_[li].from] = static_cast<std::int32_t>(li);
            f.route.push_back(li);
        }
        add_flow(std::move(f));
    }

    for (std::uint32_t i = 0; i < sc.nodes.size(); ++i)
        if (sc.nodes[i].kind == NodeKind::mmtc_group)
            node_as<MmtcGroupEntity>(i).setup();
    for (std::uint32_t i = 0; i < sc.nodes.size(); ++i)
        if (sc.nodes[i].kind == NodeKind::ap)
            node_as<ApEntity>(i).setup();

    for (std::uint32_t fi = 0; fi < sc.flows.size(); ++fi) {
        const auto& fs = sc.flows[fi];
        const auto src = node_index_.at(fs.src);
        switch (fs.kind) {
        case FlowKind::cbr: node_as<HostEntity>(src).start_flow(fi, fs); break;
        case FlowKind::sensor:
            node_as<CloudEntity>(node_index_.at(fs.dst)).add_stream(fi, *sc.find_node(fs.src));
            node_as<SensorEntity>(src).start(fi);
            break;
        case FlowKind::gateway: node_as<GatewayEntity>(src).start(fi); break;
        }
    }

    if (sc.handover.ap) {
        auto& apn = node_as<ApEntity>(node_index_.at(*sc.handover.ap));
        apn.schedule_telemetry(sc.handover.telemetry_interval_us);
        for (std::size_t i = 0; i < sc.handover.events.size(); ++i)
            engine_.schedule_at(SimTime{sc.handover.events[i].at_us}, apn.index(), kHandoverStart, detail::pack(i));
    }
}

inline RunResult World::run()
{
    RunResult out;
    const SimTime end{sc_.duration_us};
    engine_.run_until(end);
    for (std::uint32_t i = 0; i < sc_.nodes.size(); ++i)
        static_cast<NodeEntity&>(engine_.entity(i)).finish(end);

    nlohmann::json violations = nlohmann::json::array();
    std::uint64_t closed = 0, open = 0;
    for (auto& f : flows_) {
        auto& c = *f.counters;
        c.closed = f.source_done && c.in_flight() == 0;
        if (!c.closed) {
            ++open;
            continue;
        }
        ++closed;
        if (c.sent != c.delivered + c.lost || c.latency.count != c.delivered)
            violations.push_back(f.id);
    }

    out.snapshot = engine_.metrics().snapshot(end);
    out.records = engine_.metrics().records();

    auto& r = out.report;
    r["handover_reports"] = handover_reports_;
    r["alarms"] = nlohmann::json::array();
    for (const auto& a : out.snapshot.alarms)
        r["alarms"].push_back(a.to_json());
    r["conservation"] = {{"closed_flows", closed}, {"open_flows", open}, {"violations", violations}};

    nlohmann::json recon = nlohmann::json::object();
    double err = 0, truth = 0;
    std::size_t expected = 0, completed = 0;
    for (const auto& [id, q] : quality_) {
        recon[id] = {{"windows_expected", q.windows_expected},
                     {"windows_completed", q.windows_completed},
                     {"completion_rate", q.windows_expected ? static_cast<double>(q.windows_completed) /
                                                                  static_cast<double>(q.windows_expected)
                                                            : 0.0},
                     {"relative_l2", q.relative_error()},
                     {"worst_window_relative_l2", q.worst_window},
                     {"degraded_chunks", q.degraded_chunks}};
        err += q.err_sq;
        truth += q.truth_sq;
        expected += q.windows_expected;
        completed += q.windows_completed;
    }
    if (!quality_.empty()) {
        r["reconstruction"] = {{"streams", recon},
                               {"windows_expected", expected},
                               {"windows_completed", completed},
                               {"completion_rate", expected ? static_cast<double>(completed) / static_cast<double>(expected) : 0.0},
                               {"relative_l2", truth > 0 ? std::sqrt(err / truth) : std::sqrt(err)}};
    }

    nlohmann::json gateways = nlohmann::json::object();
    nlohmann::json projections = nlohmann::json::array();
    nlohmann::json aps = nlohmann::json::object();
    nlohmann::json clouds = nlohmann::json::object();
    for (std::uint32_t i = 0; i < sc_.nodes.size(); ++i) {
        const auto& n = sc_.nodes[i];
        if (n.kind == NodeKind::gateway)
            gateways[n.id] = node_as<GatewayEntity>(i).summary();
        else if (n.kind == NodeKind::mmtc_group)
            projections.push_back(node_as<MmtcGroupEntity>(i).projection());
        else if (n.kind == NodeKind::ap)
            aps[n.id] = node_as<ApEntity>(i).state();
        else if (n.kind == NodeKind::cloud)
            clouds[n.id] = node_as<CloudEntity>(i).state();
    }
    if (!gateways.empty())
        r["gateways"] = gateways;
    if (!projections.empty())
        r["battery_projections"] = projections;
    if (!aps.empty())
        r["access_points"] = aps;
    out.cloud_state = clouds;
    r["events_executed"] = engine_.executed();
    return out;
}

} // namespace fivegang::scenario
