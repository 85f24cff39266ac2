#pragma once

#include <algorithm>
#include <string>

#include "fivegang/errors.hpp"
#include "fivegang/sim/time.hpp"

namespace fivegang::node {

/// Energy account in microjoules. Idle draw accrues lazily whenever the
/// battery is touched, so a node that never wakes costs nothing to simulate.
struct BatteryState
{
    double capacity_uj = 3.1536e10;
    double drawn_uj = 0.0;
    double tx_cost_uj_per_byte = 0.2;
    double sample_cost_uj = 5.0;
    double idle_cost_uj_per_s = 10.0; // i.e. microwatts
    sim::SimTime accrued_until{};

    bool depleted() const { return drawn_uj >= capacity_uj; }
    double remaining_uj() const { return std::max(0.0, capacity_uj - drawn_uj); }

    void accrue_idle(sim::SimTime now)
    {
        if (now > accrued_until) {
            drawn_uj += idle_cost_uj_per_s * static_cast<double>(now - accrued_until) * 1e-6;
            accrued_until = now;
        }
    }

    void draw(double uj)
    {
        if (uj > 0.0)
            drawn_uj += uj;
    }

    /// Charges one sample at `now`. Throws when the node is already dead.
    void charge_sample(sim::SimTime now)
    {
        accrue_idle(now);
        if (depleted())
            throw BatteryDepleted("sample requested on a depleted node");
        draw(sample_cost_uj);
    }

    /// Charges transmission of `bytes`; throws when the node is already dead.
    void charge_tx(sim::SimTime now, std::size_t bytes)
    {
        accrue_idle(now);
        if (depleted())
            throw BatteryDepleted("transmission requested on a depleted node");
        draw(tx_cost_uj_per_byte * static_cast<double>(bytes));
    }
};

struct DutyCycle
{
    double samples_per_s = 0.0;
    double tx_bytes_per_s = 0.0;
};

/// Average power in microwatts for a duty cycle.
inline double average_power_uw(const BatteryState& b, const DutyCycle& d)
{
    return b.idle_cost_uj_per_s + d.samples_per_s * b.sample_cost_uj + d.tx_bytes_per_s * b.tx_cost_uj_per_byte;
}

/// Seconds until the remaining charge is exhausted at the duty cycle's
/// average power.
inline double project_lifetime(const BatteryState& b, const DutyCycle& d)
{
    const double p = average_power_uw(b, d);
    if (!(p > 0.0))
        throw ZeroDuty("average power is zero");
    return b.remaining_uj() / p;
}

} // namespace fivegang::node
