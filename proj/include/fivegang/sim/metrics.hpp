#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "fivegang/sim/time.hpp"

namespace fivegang::sim {

using nlohmann::json;

inline constexpr int kMetricsSchemaVersion = 1;

/// Per-packet delay histogram with power-of-two buckets: bucket b holds
/// delays d with bit_width(d) == b, i.e. [2^(b-1), 2^b) and bucket 0 holds 0.
struct LatencyHistogram
{
    std::map<int, std::uint64_t> buckets;
    std::uint64_t count = 0;
    std::int64_t min_us = 0;
    std::int64_t max_us = 0;
    long double sum_us = 0;

    void add(std::int64_t delay_us)
    {
        const auto d = static_cast<std::uint64_t>(delay_us < 0 ? 0 : delay_us);
        ++buckets[static_cast<int>(std::bit_width(d))];
        min_us = count == 0 ? delay_us : std::min(min_us, delay_us);
        max_us = count == 0 ? delay_us : std::max(max_us, delay_us);
        sum_us += static_cast<long double>(delay_us);
        ++count;
    }

    json to_json() const
    {
        json b = json::object();
        for (const auto& [k, v] : buckets)
            b[std::to_string(k)] = v;
        return {{"count", count},
                {"min_us", min_us},
                {"max_us", max_us},
                {"mean_us", count ? static_cast<double>(sum_us / count) : 0.0},
                {"log2_buckets", b}};
    }
};

struct FlowCounters
{
    std::uint64_t sent = 0;
    std::uint64_t delivered = 0;
    std::uint64_t lost = 0;
    std::uint64_t duplicated = 0;
    std::uint64_t reordered = 0;
    bool closed = false;
    LatencyHistogram latency;

    std::uint64_t in_flight() const { return sent - delivered - lost; }

    json to_json() const
    {
        return {{"sent", sent},         {"delivered", delivered}, {"lost", lost},
                {"duplicated", duplicated}, {"reordered", reordered}, {"closed", closed},
                {"latency", latency.to_json()}};
    }
};

struct AlarmRecord
{
    std::int64_t t_us = 0;
    std::string stream;
    double score = 0.0;
    double threshold = 0.0;
    std::int64_t window = -1;
    std::uint64_t degraded_chunks = 0;

    json to_json() const
    {
        return {{"t_us", t_us},           {"stream", stream}, {"score", score}, {"threshold", threshold},
                {"window", window}, {"degraded_chunks", degraded_chunks}};
    }
};

struct MetricsSnapshot
{
    SimTime at;
    std::map<std::string, FlowCounters> flows;
    std::map<std::string, double> energy_uj;
    std::map<std::string, double> counters;
    std::vector<AlarmRecord> alarms;

    json to_json() const
    {
        json f = json::object();
        for (const auto& [k, v] : flows)
            f[k] = v.to_json();
        json a = json::array();
        for (const auto& al : alarms)
            a.push_back(al.to_json());
        return {{"t_us", at.us}, {"flows", f}, {"energy_uj", energy_uj}, {"counters", counters}, {"alarms", a}};
    }

    /// Rows of (metric, entity, t_us, value) in a fixed order.
    std::vector<std::tuple<std::string, std::string, std::int64_t, double>> csv_rows() const
    {
        std::vector<std::tuple<std::string, std::string, std::int64_t, double>> rows;
        for (const auto& [id, c] : flows) {
            rows.emplace_back("flow.sent", id, at.us, static_cast<double>(c.sent));
            rows.emplace_back("flow.delivered", id, at.us, static_cast<double>(c.delivered));
            rows.emplace_back("flow.lost", id, at.us, static_cast<double>(c.lost));
            rows.emplace_back("flow.duplicated", id, at.us, static_cast<double>(c.duplicated));
            rows.emplace_back("flow.reordered", id, at.us, static_cast<double>(c.reordered));
            rows.emplace_back("flow.latency_mean_us", id, at.us,
                              c.latency.count ? static_cast<double>(c.latency.sum_us / c.latency.count) : 0.0);
        }
        for (const auto& [id, e] : energy_uj)
            rows.emplace_back("node.energy_uj", id, at.us, e);
        for (const auto& [name, v] : counters)
            rows.emplace_back("counter", name, at.us, v);
        rows.emplace_back("alarms", "", at.us, static_cast<double>(alarms.size()));
        return rows;
    }
};

/// Mutable metrics state owned by an engine, plus the ordered stream of
/// event records that ends up in metrics.jsonl.
class Metrics
{
public:
    FlowCounters& flow(const std::string& id) { return state_.flows[id]; }
    const FlowCounters* find_flow(const std::string& id) const
    {
        auto it = state_.flows.find(id);
        return it == state_.flows.end() ? nullptr : &it->second;
    }
    double& energy(const std::string& node) { return state_.energy_uj[node]; }
    double& counter(const std::string& name) { return state_.counters[name]; }
    void add(const std::string& name, double delta = 1.0) { state_.counters[name] += delta; }

    void alarm(AlarmRecord a)
    {
        json rec = a.to_json();
        rec["type"] = "alarm";
        record(std::move(rec));
        state_.alarms.push_back(std::move(a));
    }

    /// Appends a record to the event stream. Records must carry "type".
    void record(json rec) { records_.push_back(std::move(rec)); }
    const std::vector<json>& records() const { return records_; }

    MetricsSnapshot snapshot(SimTime at) const
    {
        MetricsSnapshot s = state_;
        s.at = at;
        return s;
    }

private:
    MetricsSnapshot state_;
    std::vector<json> records_;
};

} // namespace fivegang::sim
