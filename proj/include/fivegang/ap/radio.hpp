#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>

#include <nlohmann/json.hpp>

#include "fivegang/errors.hpp"
#include "fivegang/sim/time.hpp"

namespace fivegang::ap {

inline constexpr double kEwmaBeta = 0.1;

struct TelemetrySample
{
    bool lost = false;
    double latency_us = 0.0;
    double busy_fraction = 0.0;
};

/// Smoothed view of one interface. The first report initializes every
/// average to the sample itself.
struct LinkState
{
    std::string iface;
    std::string channel;
    double loss_ewma = 0.0;
    double latency_ewma_us = 0.0;
    double utilization_ewma = 0.0;
    sim::SimTime last_report;
    std::uint64_t reports = 0;

    nlohmann::json to_json() const
    {
        return {{"iface", iface},
                {"channel", channel},
                {"loss_ewma", loss_ewma},
                {"latency_ewma_us", latency_ewma_us},
                {"utilization_ewma", utilization_ewma},
                {"last_report_us", last_report.us},
                {"reports", reports}};
    }
};

enum class HandoverState
{
    Idle,
    Establishing,
    DualActive,
    Rerouted,
    Complete,
};

inline std::string_view to_string(HandoverState s)
{
    switch (s) {
    case HandoverState::Idle: return "Idle";
    case HandoverState::Establishing: return "Establishing";
    case HandoverState::DualActive: return "DualActive";
    case HandoverState::Rerouted: return "Rerouted";
    case HandoverState::Complete: return "Complete";
    }
    return "?";
}

struct HandoverPlan
{
    std::string flow_id;
    std::string old_iface;
    std::string new_iface;
    std::string new_channel;
    HandoverState state = HandoverState::Idle;

    /// Moves one step along Idle -> Establishing -> DualActive -> Rerouted ->
    /// Complete; anything else is rejected.
    void advance(HandoverState next)
    {
        if (static_cast<int>(next) != static_cast<int>(state) + 1)
            throw IllegalTransition(std::string(to_string(state)) + " -> " + std::string(to_string(next)));
        state = next;
    }

    bool teardown_allowed() const { return state == HandoverState::Rerouted; }
};

struct HandoverPolicy
{
    double loss_threshold = 0.05;
    double min_improvement = 0.1;
    std::int64_t hold_down_us = 1'000'000;
};

struct HandoverReport
{
    std::string flow_id;
    std::string mode = "make-before-break";
    std::string old_iface;
    std::string new_iface;
    bool aborted = false;
    std::string abort_reason;
    std::uint64_t packets_in_flight_at_switch = 0;
    std::uint64_t packets_lost_during_handover = 0;
    std::uint64_t duplicates = 0;
    std::uint64_t reordered = 0;
    std::int64_t reroute_time_us = 0;
    std::int64_t dual_active_us = 0;
    std::int64_t started_at_us = 0;
    std::int64_t completed_at_us = 0;

    nlohmann::json to_json() const
    {
        return {{"flow_id", flow_id},
                {"mode", mode},
                {"old_iface", old_iface},
                {"new_iface", new_iface},
                {"aborted", aborted},
                {"abort_reason", abort_reason},
                {"packets_in_flight_at_switch", packets_in_flight_at_switch},
                {"packets_lost_during_handover", packets_lost_during_handover},
                {"duplicates", duplicates},
                {"reordered", reordered},
                {"reroute_time_us", reroute_time_us},
                {"dual_active_us", dual_active_us},
                {"started_at_us", started_at_us},
                {"completed_at_us", completed_at_us}};
    }
};

/// Link telemetry and the handover decision policy.
class RadioManagement
{
public:
    void add_interface(const std::string& iface, const std::string& channel)
    {
        auto& s = links_[iface];
        s.iface = iface;
        s.channel = channel;
    }

    bool has_interface(const std::string& iface) const { return links_.count(iface) != 0; }

    const LinkState& state(const std::string& iface) const
    {
        auto it = links_.find(iface);
        if (it == links_.end())
            throw UnknownInterface(iface);
        return it->second;
    }

    const LinkState& report(const std::string& iface, const TelemetrySample& sample, sim::SimTime now)
    {
        auto it = links_.find(iface);
        if (it == links_.end())
            throw UnknownInterface(iface);
        auto& s = it->second;
        const double loss = sample.lost ? 1.0 : 0.0;
        const double busy = std::clamp(sample.busy_fraction, 0.0, 1.0);
        if (s.reports == 0) {
            s.loss_ewma = loss;
            s.latency_ewma_us = sample.latency_us;
            s.utilization_ewma = busy;
        } else {
            s.loss_ewma = (1.0 - kEwmaBeta) * s.loss_ewma + kEwmaBeta * loss;
            // Lost probes carry no latency information.
            if (!sample.lost)
                s.latency_ewma_us = (1.0 - kEwmaBeta) * s.latency_ewma_us + kEwmaBeta * sample.latency_us;
            s.utilization_ewma = (1.0 - kEwmaBeta) * s.utilization_ewma + kEwmaBeta * busy;
        }
        s.last_report = now;
        ++s.reports;
        return s;
    }

    void bind(const std::string& flow, const std::string& iface)
    {
        if (!has_interface(iface))
            throw UnknownInterface(iface);
        bindings_[flow] = iface;
    }

    std::optional<std::string> binding(const std::string& flow) const
    {
        auto it = bindings_.find(flow);
        if (it == bindings_.end())
            return std::nullopt;
        return it->second;
    }

    void handover_completed(const std::string& flow, sim::SimTime at) { last_handover_[flow] = at; }

    /// Best alternative to `current` among interfaces that have reported:
    /// lowest loss, then lowest latency, then lowest interface id.
    std::optional<std::string> best_alternative(const std::string& current) const
    {
        const LinkState* best = nullptr;
        for (const auto& [id, s] : links_) {
            if (id == current || s.reports == 0)
                continue;
            if (!best || std::tie(s.loss_ewma, s.latency_ewma_us, s.iface) <
                             std::tie(best->loss_ewma, best->latency_ewma_us, best->iface))
                best = &s;
        }
        if (!best)
            return std::nullopt;
        return best->iface;
    }

    std::optional<HandoverPlan> evaluate_handover(const std::string& flow, const HandoverPolicy& policy,
                                                  sim::SimTime now) const
    {
        const auto cur = binding(flow);
        if (!cur)
            throw FlowUnbound(flow);
        const auto& cs = state(*cur);
        if (!(cs.loss_ewma > policy.loss_threshold))
            return std::nullopt;
        if (auto it = last_handover_.find(flow); it != last_handover_.end() && now - it->second < policy.hold_down_us)
            return std::nullopt;
        const auto alt = best_alternative(*cur);
        if (!alt)
            return std::nullopt;
        const auto& as = state(*alt);
        if (!(as.loss_ewma <= cs.loss_ewma - policy.min_improvement))
            return std::nullopt;
        return HandoverPlan{flow, *cur, *alt, as.channel, HandoverState::Idle};
    }

    const std::map<std::string, LinkState>& links() const { return links_; }

private:
    std::map<std::string, LinkState> links_;
    std::map<std::string, std::string> bindings_;
    std::map<std::string, sim::SimTime> last_handover_;
};

} // namespace fivegang::ap
