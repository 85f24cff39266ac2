#include <gtest/gtest.h>

#include <algorithm>

#include "fivegang/gateway/gateway.hpp"
#include "fivegang/sim/rng.hpp"

using namespace fivegang;
using namespace fivegang::gateway;
using sim::RngStream;
using sim::SimTime;

namespace {

Gateway make_gateway(Mode mode, std::size_t max_bytes = 1 << 24)
{
    Gateway g({7, max_bytes, mode, 0});
    g.register_adapter(1, AdapterKind::analog_4_20ma);
    g.register_adapter(2, AdapterKind::fieldbus);
    g.register_adapter(3, AdapterKind::ble);
    return g;
}

struct Traffic
{
    std::int64_t t_us;
    Reading r;
};

std::vector<Traffic> random_traffic(std::uint64_t seed, int n, std::int64_t horizon_us)
{
    RngStream rng(seed);
    std::vector<Traffic> out;
    for (int i = 0; i < n; ++i) {
        const auto t = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(horizon_us)));
        Reading r{static_cast<std::uint32_t>(1 + rng.below(3)), t, static_cast<std::uint16_t>(rng.below(4)),
                  static_cast<std::int64_t>(rng.below(100000)) - 50000};
        out.push_back({t, r});
    }
    std::sort(out.begin(), out.end(), [](const Traffic& a, const Traffic& b) { return a.t_us < b.t_us; });
    return out;
}

/// Drives a gateway through the traffic with a timer tick every `tick_us`.
std::vector<Batch> drive(Gateway& g, const std::vector<Traffic>& traffic, std::int64_t tick_us, std::int64_t end_us)
{
    std::vector<Batch> out;
    std::size_t i = 0;
    for (std::int64_t tick = tick_us; tick <= end_us; tick += tick_us) {
        for (; i < traffic.size() && traffic[i].t_us < tick; ++i) {
            g.ingest(traffic[i].r.adapter, traffic[i].r);
            if (auto b = g.flush(SimTime{traffic[i].t_us}, Trigger::ingest))
                out.push_back(*b);
        }
        if (auto b = g.flush(SimTime{tick}, Trigger::timer))
            out.push_back(*b);
    }
    return out;
}

double total_cost(const Gateway& g, const std::vector<Batch>& batches, const Tariff& t)
{
    double c = 0;
    for (const auto& b : batches)
        c += transfer_cost(g.wire_bytes(b), t);
    return c;
}

} // namespace

TEST(Gateway, SingleReadingIsBuffered)
{
    auto g = make_gateway(Interval{1'000'000});
    EXPECT_EQ(g.ingest(1, {1, 10, 0, 42}), 1u);
    EXPECT_THROW(g.ingest(9, {9, 10, 0, 42}), UnknownAdapter);
}

TEST(Gateway, BoundedBufferEvictsOldest)
{
    auto g = make_gateway(Sleep{}, 3 * kRawRecordBytes);
    for (int i = 0; i < 3; ++i)
        g.ingest(1, {1, i, 0, i});
    EXPECT_EQ(g.evictions(), 0u);
    g.ingest(1, {1, 3, 0, 3});
    EXPECT_EQ(g.evictions(), 1u);
    EXPECT_EQ(g.buffered_count(), 3u);
    const auto b = g.take_batch(SimTime{4});
    ASSERT_TRUE(b);
    EXPECT_EQ(b->records.front().t_us, 1);
}

TEST(Gateway, RandomReadingsRoundTripAsMultiset)
{
    auto g = make_gateway(Sleep{}, 6000 * kRawRecordBytes);
    auto traffic = random_traffic(5, 10000, 60'000'000);
    for (const auto& tr : traffic)
        g.ingest(tr.r.adapter, tr.r);
    EXPECT_EQ(g.evictions(), 4000u);
    std::vector<Reading> expect;
    for (std::size_t i = 4000; i < traffic.size(); ++i)
        expect.push_back(traffic[i].r);
    const auto b = g.take_batch(SimTime{60'000'000});
    ASSERT_TRUE(b);
    auto got = Batch::parse(b->serialize()).records;
    std::sort(expect.begin(), expect.end(), batch_order);
    std::sort(got.begin(), got.end(), batch_order);
    EXPECT_EQ(got, expect);
}

TEST(Gateway, IntervalFlushesOnPeriodBoundary)
{
    auto g = make_gateway(Interval{1'000'000});
    g.ingest(1, {1, 200'000, 0, 1});
    EXPECT_FALSE(g.flush(SimTime{200'000}, Trigger::ingest));
    g.ingest(2, {2, 700'000, 0, 2});
    EXPECT_FALSE(g.flush(SimTime{900'000}, Trigger::timer));
    const auto b = g.flush(SimTime{1'000'000}, Trigger::timer);
    ASSERT_TRUE(b);
    EXPECT_EQ(b->records.size(), 2u);
    EXPECT_FALSE(g.flush(SimTime{2'000'000}, Trigger::timer)); // empty buffer
}

TEST(Gateway, SleepBelowThresholdStaysQuiet)
{
    auto g = make_gateway(Sleep{1'000'000, false});
    while (g.buffered_bytes() < 1000)
        g.ingest(1, {1, 0, 0, 0});
    EXPECT_FALSE(g.flush(SimTime{1}, Trigger::timer));
    EXPECT_FALSE(g.flush(SimTime{1}, Trigger::ingest));
}

TEST(Gateway, SleepWakesOnAlarm)
{
    auto g = make_gateway(Sleep{1'000'000, true});
    g.ingest(1, {1, 0, 0, 0});
    EXPECT_FALSE(g.flush(SimTime{1}, Trigger::ingest));
    g.raise_alarm();
    const auto b = g.flush(SimTime{2}, Trigger::ingest);
    ASSERT_TRUE(b);
    EXPECT_EQ(b->flags & kFlagAlarm, kFlagAlarm);
}

TEST(Gateway, OnlineFlushesEveryIngest)
{
    auto g = make_gateway(Online{});
    for (int i = 0; i < 5; ++i) {
        g.ingest(1, {1, i, 0, i});
        EXPECT_TRUE(g.flush(SimTime{i}, Trigger::ingest));
    }
}

TEST(Gateway, CompressionOfSteadyTimestampsAgainstRawOracle)
{
    auto g = make_gateway(Sleep{});
    for (int i = 0; i < 1000; ++i)
        g.ingest(1, {1, 1'000'000LL * i, 3, 12000 + (i % 3)});
    const auto b = g.take_batch(SimTime{0});
    const auto compressed = b->serialize().size();
    const auto raw = encode_raw(b->records).size();
    EXPECT_EQ(raw, 1000 * kRawRecordBytes);
    EXPECT_LE(static_cast<double>(compressed), 0.30 * static_cast<double>(raw));
}

TEST(Gateway, BatchWireLayout)
{
    Batch b;
    b.gateway_id = 0x01020304;
    b.seq = 5;
    b.created_at_us = 6;
    b.records = {{1, 10, 2, -1}, {1, 12, 2, 1}};
    const auto w = b.serialize();
    const Bytes header{1, 2, 3, 4, 0, 0, 0, 5, 0, 0, 0, 0, 0, 0, 0, 6, 0, 0, 0, 2, 0};
    ASSERT_GE(w.size(), header.size());
    EXPECT_TRUE(std::equal(header.begin(), header.end(), w.begin()));
    // adapter +1, channel +2 -> zz 4, t +10 -> zz 20, value -1 -> zz 1,
    // then adapter +0, channel +0, t +2 -> zz 4, value +2 -> zz 4.
    const Bytes body{1, 4, 20, 1, 0, 0, 4, 4};
    EXPECT_TRUE(std::equal(body.begin(), body.end(), w.begin() + 21));
    EXPECT_EQ(w.size(), 29u);
}

TEST(Gateway, ZigZagAndVarintExtremes)
{
    for (std::int64_t v : std::vector<std::int64_t>{0, -1, 1, -64, 63, INT64_MIN, INT64_MAX})
        EXPECT_EQ(varint::unzigzag(varint::zigzag(v)), v);
    Batch b;
    b.records = {{0, INT64_MIN, 0, INT64_MAX}, {0xFFFFFFFF, INT64_MAX, 65535, INT64_MIN}};
    EXPECT_EQ(Batch::parse(b.serialize()).records, b.records);
    auto w = b.serialize();
    w.pop_back();
    EXPECT_THROW(Batch::parse(w), MalformedPacket);
}

TEST(Gateway, ModeBatchCountsAreOrdered)
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto traffic = random_traffic(seed, 500, 60'000'000);
        auto online = make_gateway(Online{});
        auto interval = make_gateway(Interval{10'000'000});
        auto sleep = make_gateway(Sleep{std::size_t{1} << 40, false});
        const auto a = drive(online, traffic, 1'000'000, 60'000'000);
        const auto b = drive(interval, traffic, 1'000'000, 60'000'000);
        const auto c = drive(sleep, traffic, 1'000'000, 60'000'000);
        EXPECT_GE(a.size(), b.size());
        EXPECT_GE(b.size(), c.size());
        EXPECT_EQ(a.size(), 500u);
        EXPECT_EQ(b.size(), 6u);
        EXPECT_EQ(c.size(), 0u);
    }
}

TEST(Gateway, IntervalCheaperThanOnline)
{
    const auto traffic = random_traffic(3, 500, 60'000'000);
    auto online = make_gateway(Online{});
    auto interval = make_gateway(Interval{10'000'000});
    const auto a = drive(online, traffic, 1'000'000, 60'000'000);
    const auto b = drive(interval, traffic, 1'000'000, 60'000'000);
    const Tariff t{1, 0.001, 0.5, 0.9};
    EXPECT_LT(total_cost(interval, b, t), total_cost(online, a, t));
    // Connection-free tariff: cost is only bytes, still never more for fewer batches here.
    const Tariff bytes_only{1, 0.001, 0.0, 0.9};
    EXPECT_LE(total_cost(interval, b, bytes_only), total_cost(online, a, bytes_only));
}

TEST(Tariff, CostComponents)
{
    const Tariff t{1, 0.01, 2.0, 0.5};
    EXPECT_EQ(transfer_cost(0, t), 2.0);
    const Tariff lin{1, 0.01, 0.0, 0.5};
    EXPECT_DOUBLE_EQ(transfer_cost(2000, lin), 2.0 * transfer_cost(1000, lin));
    EXPECT_LE(transfer_cost(10, t), transfer_cost(11, t));
}

TEST(Tariff, ProviderSelection)
{
    EXPECT_THROW(select_provider({}), NoProviders);
    const std::vector<Tariff> one{{4, 0, 0, 0.1}};
    EXPECT_EQ(select_provider(one).provider_id, 4u);
    const std::vector<Tariff> three{{1, 0, 0, 0.4}, {2, 0, 0, 0.9}, {3, 0, 0, 0.7}};
    EXPECT_EQ(select_provider(three).provider_id, 2u);

    RngStream rng(4);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<Tariff> ts;
        const int n = 1 + static_cast<int>(rng.below(6));
        for (int i = 0; i < n; ++i)
            ts.push_back({static_cast<std::uint32_t>(rng.below(50)), 0, 0, 0.1 * static_cast<double>(rng.below(3))});
        const auto& got = select_provider(ts);
        for (const auto& t : ts) {
            EXPECT_GE(got.signal_strength, t.signal_strength);
            if (t.signal_strength == got.signal_strength) {
                EXPECT_LE(got.provider_id, t.provider_id);
            }
        }
    }
}
