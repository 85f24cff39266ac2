#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "fivegang/errors.hpp"
#include "fivegang/sim/time.hpp"

namespace fivegang::ap {

using PortId = std::uint32_t;

struct Forward
{
    PortId port = 0;
    friend bool operator==(const Forward&, const Forward&) = default;
};
struct Drop
{
    friend bool operator==(const Drop&, const Drop&) = default;
};
using Action = std::variant<Forward, Drop>;

/// Absent fields match anything; an empty match is a wildcard.
struct Match
{
    std::optional<PortId> ingress_port;
    std::optional<std::string> flow_id;
};

struct FlowRule
{
    std::uint64_t rule_id = 0; // assigned on install
    int priority = 0;
    Match match;
    Action action = Drop{};
    sim::SimTime installed_at;

    bool matches(PortId ingress, const std::string& flow) const
    {
        return (!match.ingress_port || *match.ingress_port == ingress) && (!match.flow_id || *match.flow_id == flow);
    }

    nlohmann::json to_json() const
    {
        nlohmann::json j{{"rule_id", rule_id}, {"priority", priority}, {"installed_at_us", installed_at.us}};
        j["match"] = nlohmann::json::object();
        if (match.ingress_port)
            j["match"]["ingress_port"] = *match.ingress_port;
        if (match.flow_id)
            j["match"]["flow_id"] = *match.flow_id;
        if (const auto* f = std::get_if<Forward>(&action))
            j["action"] = {{"forward", f->port}};
        else
            j["action"] = "drop";
        return j;
    }
};

struct PacketKey
{
    PortId ingress_port = 0;
    std::string flow_id;
};

/// Match-action table. Highest priority wins, ties go to the lowest rule id.
/// Rules are bucketed by flow id (plus one bucket for rules without one) and
/// each bucket is kept in precedence order, so a lookup inspects at most two
/// short lists instead of the whole table.
class FlowTable
{
public:
    void add_port(PortId p) { ports_.insert(p); }
    bool has_port(PortId p) const { return ports_.count(p) != 0; }

    std::uint64_t install(FlowRule rule)
    {
        if (const auto* f = std::get_if<Forward>(&rule.action); f && !has_port(f->port))
            throw UnknownPort("forward to unknown port " + std::to_string(f->port));
        rule.rule_id = next_id_++;
        const auto id = rule.rule_id;
        auto& bucket = rule.match.flow_id ? by_flow_[*rule.match.flow_id] : wildcard_;
        auto pos = std::lower_bound(bucket.begin(), bucket.end(), rule, precedes);
        bucket.insert(pos, rule);
        index_[id] = rule.match.flow_id;
        return id;
    }

    bool remove(std::uint64_t rule_id)
    {
        auto it = index_.find(rule_id);
        if (it == index_.end())
            return false;
        auto& bucket = it->second ? by_flow_[*it->second] : wildcard_;
        bucket.erase(std::find_if(bucket.begin(), bucket.end(),
                                  [&](const FlowRule& r) { return r.rule_id == rule_id; }));
        if (it->second && bucket.empty())
            by_flow_.erase(*it->second);
        index_.erase(it);
        return true;
    }

    const FlowRule* find_rule(std::uint64_t rule_id) const
    {
        auto it = index_.find(rule_id);
        if (it == index_.end())
            return nullptr;
        const auto& bucket = it->second ? by_flow_.at(*it->second) : wildcard_;
        for (const auto& r : bucket)
            if (r.rule_id == rule_id)
                return &r;
        return nullptr;
    }

    /// Winning rule, or nullptr on a miss. Does not touch the miss counter.
    const FlowRule* best_match(const PacketKey& pkt) const
    {
        const FlowRule* best = first_match(wildcard_, pkt);
        if (auto it = by_flow_.find(pkt.flow_id); it != by_flow_.end()) {
            const FlowRule* f = first_match(it->second, pkt);
            if (f && (!best || precedes(*f, *best)))
                best = f;
        }
        return best;
    }

    Action lookup(const PacketKey& pkt)
    {
        if (const auto* r = best_match(pkt))
            return r->action;
        ++misses_;
        return Drop{};
    }

    std::uint64_t misses() const { return misses_; }
    std::size_t size() const { return index_.size(); }

    /// All rules in precedence order.
    std::vector<FlowRule> rules() const
    {
        std::vector<FlowRule> out(wildcard_.begin(), wildcard_.end());
        for (const auto& [_, b] : by_flow_)
            out.insert(out.end(), b.begin(), b.end());
        std::sort(out.begin(), out.end(), precedes);
        return out;
    }

    static bool precedes(const FlowRule& a, const FlowRule& b)
    {
        if (a.priority != b.priority)
            return a.priority > b.priority;
        return a.rule_id < b.rule_id;
    }

private:
    static const FlowRule* first_match(const std::vector<FlowRule>& bucket, const PacketKey& pkt)
    {
        for (const auto& r : bucket)
            if (r.matches(pkt.ingress_port, pkt.flow_id))
                return &r;
        return nullptr;
    }

    std::set<PortId> ports_;
    std::vector<FlowRule> wildcard_;
    std::unordered_map<std::string, std::vector<FlowRule>> by_flow_;
    std::map<std::uint64_t, std::optional<std::string>> index_;
    std::uint64_t next_id_ = 1;
    std::uint64_t misses_ = 0;
};

} // namespace fivegang::ap
