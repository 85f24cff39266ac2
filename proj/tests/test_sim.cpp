#include <gtest/gtest.h>

#include <algorithm>
#include <tuple>

#include "fivegang/sim/channel.hpp"
#include "fivegang/sim/engine.hpp"

using namespace fivegang;
using namespace fivegang::sim;

namespace {

/// Records every event it receives and optionally reschedules follow-ups.
class Recorder : public Entity
{
public:
    struct Seen
    {
        std::int64_t fire_at;
        std::uint64_t seq;
        std::int64_t clock;
    };
    std::vector<Seen> seen;
    int follow_ups = 0;
    RngStream rng{99};

    void handle(Engine& engine, const Event& ev) override
    {
        seen.push_back({ev.fire_at.us, ev.seq, engine.now().us});
        engine.metrics().flow("f").sent++;
        if (follow_ups > 0) {
            --follow_ups;
            engine.schedule_in(static_cast<std::int64_t>(rng.below(50)), 0, ev.kind);
        }
    }
};

/// Toy sender: every tick transmits one packet over a lossy link.
class Sender : public Entity
{
public:
    explicit Sender(Engine& engine)
    {
        link.id = "L";
        link.profile = make_profile(ProfileKind::URLLC);
        link.profile.loss_probability = 0.2;
        link.rng = engine.stream("link:L");
    }
    Link link;

    void handle(Engine& engine, const Event& ev) override
    {
        auto& f = engine.metrics().flow("toy");
        if (ev.kind == 1) {
            ++f.sent;
            auto out = channel_transmit(link, 100, engine.now());
            if (std::holds_alternative<Lost>(out))
                ++f.lost;
            else
                engine.schedule_at(std::get<Delivered>(out).at, 0, 2, {static_cast<std::uint8_t>(engine.now().us & 0xFF)});
        } else {
            ++f.delivered;
            f.latency.add(engine.now().us & 0xFF);
        }
    }
};

} // namespace

TEST(Engine, SingleEventAtZeroFiresFirst)
{
    Engine e;
    auto& r = e.emplace_entity<Recorder>("r");
    e.schedule_at(SimTime{0}, 0, 1);
    e.run_until(SimTime{10});
    ASSERT_EQ(r.seen.size(), 1u);
    EXPECT_EQ(r.seen[0].fire_at, 0);
}

TEST(Engine, TiesResolveBySchedulingOrder)
{
    Engine e;
    auto& r = e.emplace_entity<Recorder>("r");
    const auto a = e.schedule_at(SimTime{5}, 0, 1);
    const auto b = e.schedule_at(SimTime{5}, 0, 1);
    e.run_until(SimTime{5});
    ASSERT_EQ(r.seen.size(), 2u);
    EXPECT_EQ(r.seen[0].seq, a);
    EXPECT_EQ(r.seen[1].seq, b);
}

TEST(Engine, RandomEventsMatchSortOracle)
{
    Engine e;
    auto& r = e.emplace_entity<Recorder>("r");
    RngStream rng(7);
    std::vector<std::pair<std::int64_t, std::uint64_t>> scheduled;
    for (int i = 0; i < 1000; ++i) {
        const auto t = static_cast<std::int64_t>(rng.below(200));
        scheduled.emplace_back(t, e.schedule_at(SimTime{t}, 0, 1));
    }
    std::sort(scheduled.begin(), scheduled.end());
    e.run_until(SimTime{1000});
    ASSERT_EQ(r.seen.size(), scheduled.size());
    for (std::size_t i = 0; i < scheduled.size(); ++i) {
        EXPECT_EQ(r.seen[i].fire_at, scheduled[i].first);
        EXPECT_EQ(r.seen[i].seq, scheduled[i].second);
    }
}

TEST(Engine, CausalityWithHandlerScheduledEvents)
{
    Engine e;
    auto& r = e.emplace_entity<Recorder>("r");
    r.follow_ups = 500;
    RngStream rng(3);
    for (int i = 0; i < 100; ++i)
        e.schedule_at(SimTime{static_cast<std::int64_t>(rng.below(100))}, 0, 1);
    e.run_until(SimTime{100000});
    EXPECT_EQ(r.seen.size(), 600u);
    for (std::size_t i = 0; i < r.seen.size(); ++i) {
        EXPECT_EQ(r.seen[i].clock, r.seen[i].fire_at);
        if (i > 0) {
            EXPECT_LE(std::tie(r.seen[i - 1].fire_at, r.seen[i - 1].seq), std::tie(r.seen[i].fire_at, r.seen[i].seq));
        }
    }
}

TEST(Engine, SchedulingInThePastIsRejected)
{
    Engine e;
    e.emplace_entity<Recorder>("r");
    e.run_until(SimTime{10});
    EXPECT_THROW(e.schedule_at(SimTime{9}, 0, 1), SchedulingInPast);
    EXPECT_NO_THROW(e.schedule_at(SimTime{10}, 0, 1));
}

TEST(Engine, RunUntilZeroOnFreshEngine)
{
    Engine e;
    auto snap = e.run_until(SimTime{0});
    EXPECT_EQ(e.now().us, 0);
    EXPECT_TRUE(snap.flows.empty());
    EXPECT_TRUE(snap.alarms.empty());
}

TEST(Engine, RunUntilBoundaryIsInclusive)
{
    Engine e;
    e.emplace_entity<Recorder>("r");
    e.schedule_at(SimTime{5}, 0, 1);
    EXPECT_EQ(e.run_until(SimTime{4}).flows["f"].sent, 0u);
    EXPECT_EQ(e.now().us, 4);
    EXPECT_EQ(e.run_until(SimTime{5}).flows["f"].sent, 1u);
}

TEST(Engine, RerunIsByteIdentical)
{
    auto run = [](std::uint64_t seed) {
        Engine e(seed);
        e.emplace_entity<Sender>("s", e);
        for (int i = 0; i < 2000; ++i)
            e.schedule_at(SimTime{i * 50}, 0, 1);
        return e.run_until(SimTime::from_s(1)).to_json().dump();
    };
    EXPECT_EQ(run(42), run(42));
    EXPECT_NE(run(42), run(43));
}

TEST(Rng, DerivedStreamsAreIndependentOfOtherEntities)
{
    Engine a(5), b(5);
    auto s1 = a.stream("node:x");
    auto unrelated = b.stream("node:y");
    (void)unrelated();
    auto s2 = b.stream("node:x");
    for (int i = 0; i < 10; ++i)
        EXPECT_EQ(s1(), s2());
}

TEST(Channel, DegenerateLossProbabilities)
{
    Link l;
    l.profile = make_profile(ProfileKind::eMBB);
    l.rng = RngStream(1);
    for (int i = 0; i < 1000; ++i)
        EXPECT_TRUE(std::holds_alternative<Delivered>(channel_transmit(l, 64, SimTime{0})));
    l.profile.loss_probability = 1.0;
    for (int i = 0; i < 1000; ++i)
        EXPECT_TRUE(std::holds_alternative<Lost>(channel_transmit(l, 64, SimTime{0})));
}

TEST(Channel, EmpiricalLossRate)
{
    // Binomial sd at n=1e5, p=0.1 is ~0.00095, so +-0.01 is a >10 sigma band.
    Link l;
    l.profile = make_profile(ProfileKind::eMBB);
    l.profile.loss_probability = 0.1;
    l.rng = RngStream(2024);
    int lost = 0;
    for (int i = 0; i < 100000; ++i)
        lost += std::holds_alternative<Lost>(channel_transmit(l, 64, SimTime{0}));
    EXPECT_NEAR(lost / 1e5, 0.1, 0.01);
}

TEST(Channel, DelayWithinModelBounds)
{
    Link l;
    l.profile = make_profile(ProfileKind::mMTC);
    l.rng = RngStream(4);
    const std::int64_t ser = serialization_us(500, l.profile);
    EXPECT_EQ(ser, 4000);
    for (int i = 0; i < 10000; ++i) {
        auto out = std::get<Delivered>(channel_transmit(l, 500, SimTime{100}));
        EXPECT_GE(out.at.us, 100 + ser + 5000);
        EXPECT_LT(out.at.us, 100 + ser + 10000);
    }
}

TEST(Channel, LinkDownRejectsTransmission)
{
    Link l;
    l.id = "A";
    l.bring_down();
    EXPECT_EQ(l.epoch, 1u);
    EXPECT_THROW(channel_transmit(l, 1, SimTime{0}), LinkDown);
}

TEST(Channel, UrllcDeliversSmallPacketsUnderOneMillisecond)
{
    Link l;
    l.profile = make_profile(ProfileKind::URLLC);
    l.rng = RngStream(77);
    for (int i = 0; i < 100000; ++i) {
        auto out = std::get<Delivered>(channel_transmit(l, 1 + i % 125, SimTime{0}));
        ASSERT_LT(out.at.us, 1000);
    }
}

TEST(Profiles, ItuFigures)
{
    auto e = make_profile(ProfileKind::eMBB);
    EXPECT_EQ(e.downlink_capacity_bps, 2e10);
    EXPECT_EQ(e.uplink_capacity_bps, 1e10);
    EXPECT_EQ(e.per_user_rate_bps, 1e8);
    EXPECT_EQ(e.per_user_uplink_rate_bps, 5e7);
    EXPECT_EQ(e.latency_budget_us, 4000);
    EXPECT_EQ(make_profile(ProfileKind::URLLC).latency_budget_us, 1000);
    EXPECT_EQ(make_profile(ProfileKind::mMTC).device_density_per_km2, 1e6);
    for (auto k : {ProfileKind::eMBB, ProfileKind::URLLC, ProfileKind::mMTC})
        EXPECT_NO_THROW(make_profile(k).validate());
}

TEST(Profiles, ValidationRejectsBadRanges)
{
    auto p = make_profile(ProfileKind::URLLC);
    p.loss_probability = 1.5;
    EXPECT_THROW(p.validate(), InvalidProfile);
    p = make_profile(ProfileKind::URLLC);
    p.uplink_capacity_bps = 0;
    EXPECT_THROW(p.validate(), InvalidProfile);
    p = make_profile(ProfileKind::URLLC);
    p.latency_budget_us = 0;
    EXPECT_THROW(p.validate(), InvalidProfile);
}

TEST(Metrics, HistogramCountsDeliveries)
{
    LatencyHistogram h;
    for (std::int64_t d : {0, 1, 2, 3, 900, 1000})
        h.add(d);
    EXPECT_EQ(h.count, 6u);
    EXPECT_EQ(h.buckets[0], 1u);
    EXPECT_EQ(h.buckets[1], 1u);
    EXPECT_EQ(h.buckets[2], 2u);
    EXPECT_EQ(h.buckets[10], 2u);
    EXPECT_EQ(h.max_us, 1000);
}
