#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "fivegang/errors.hpp"
#include "fivegang/sim/rng.hpp"
#include "fivegang/sim/time.hpp"

namespace fivegang::sim {

enum class ProfileKind
{
    eMBB,
    URLLC,
    mMTC,
    custom,
};

inline std::string_view to_string(ProfileKind k)
{
    switch (k) {
    case ProfileKind::eMBB: return "eMBB";
    case ProfileKind::URLLC: return "URLLC";
    case ProfileKind::mMTC: return "mMTC";
    case ProfileKind::custom: return "custom";
    }
    return "custom";
}

inline std::optional<ProfileKind> profile_kind_from(std::string_view s)
{
    if (s == "eMBB") return ProfileKind::eMBB;
    if (s == "URLLC") return ProfileKind::URLLC;
    if (s == "mMTC") return ProfileKind::mMTC;
    if (s == "custom") return ProfileKind::custom;
    return std::nullopt;
}

struct ChannelProfile
{
    ProfileKind kind = ProfileKind::custom;
    double downlink_capacity_bps = 1e9;
    double uplink_capacity_bps = 1e9;
    double per_user_rate_bps = 1e8;          // towards the end user
    double per_user_uplink_rate_bps = 5e7;   // from the end user
    std::int64_t latency_budget_us = 1000;
    double loss_probability = 0.0;
    double device_density_per_km2 = 0.0;

    void validate() const
    {
        if (!(downlink_capacity_bps > 0) || !(uplink_capacity_bps > 0))
            throw InvalidProfile("capacities must be positive");
        if (latency_budget_us <= 0)
            throw InvalidProfile("latency budget must be positive");
        if (!(loss_probability >= 0.0 && loss_probability <= 1.0))
            throw InvalidProfile("loss probability must lie in [0, 1]");
    }
};

/// ITU-R capability presets. Capacities of the URLLC and mMTC presets and the
/// mMTC latency budget are engineering placeholders; only the figures the
/// capability classes actually define are fixed here.
inline ChannelProfile make_profile(ProfileKind kind)
{
    ChannelProfile p;
    p.kind = kind;
    switch (kind) {
    case ProfileKind::eMBB:
        p.downlink_capacity_bps = 20e9;
        p.uplink_capacity_bps = 10e9;
        p.per_user_rate_bps = 100e6;
        p.per_user_uplink_rate_bps = 50e6;
        p.latency_budget_us = 4000;
        break;
    case ProfileKind::URLLC:
        p.downlink_capacity_bps = 10e9;
        p.uplink_capacity_bps = 10e9;
        p.per_user_rate_bps = 100e6;
        p.per_user_uplink_rate_bps = 50e6;
        p.latency_budget_us = 1000;
        break;
    case ProfileKind::mMTC:
        p.downlink_capacity_bps = 1e6;
        p.uplink_capacity_bps = 1e6;
        p.per_user_rate_bps = 1e5;
        p.per_user_uplink_rate_bps = 1e5;
        p.latency_budget_us = 10000;
        p.device_density_per_km2 = 1'000'000;
        break;
    case ProfileKind::custom:
        break;
    }
    return p;
}

/// One directed radio or wired hop. `epoch` increments whenever the link goes
/// down so that packets already in flight can tell they were cut off.
struct Link
{
    std::string id;
    std::string channel;
    ChannelProfile profile;
    bool up = true;
    std::uint32_t epoch = 0;
    RngStream rng;

    void bring_up() { up = true; }
    void bring_down()
    {
        if (up)
            ++epoch;
        up = false;
    }
};

struct Delivered
{
    SimTime at;
};
struct Lost
{
};
using TransmitOutcome = std::variant<Delivered, Lost>;

/// Serialization delay in whole microseconds (floor) at the uplink capacity.
inline std::int64_t serialization_us(std::size_t payload_bytes, const ChannelProfile& p)
{
    return static_cast<std::int64_t>(std::floor(static_cast<double>(payload_bytes) * 8.0 * 1e6 / p.uplink_capacity_bps));
}

/// Loss is drawn first, then a propagation delay uniform in
/// [0.5, 1.0) x latency budget. Both draws happen on every call so the
/// stream position depends only on the number of transmissions.
inline TransmitOutcome channel_transmit(Link& link, std::size_t payload_bytes, SimTime now)
{
    if (!link.up)
        throw LinkDown("link " + link.id + " is down");
    const double loss_draw = link.rng.uniform();
    const double prop_draw = link.rng.uniform(0.5, 1.0);
    if (link.profile.loss_probability >= 1.0 || loss_draw < link.profile.loss_probability)
        return Lost{};
    const auto prop = static_cast<std::int64_t>(std::floor(prop_draw * static_cast<double>(link.profile.latency_budget_us)));
    return Delivered{now + serialization_us(payload_bytes, link.profile) + prop};
}

} // namespace fivegang::sim
