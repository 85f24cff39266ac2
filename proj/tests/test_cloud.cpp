#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fivegang/cloud/anomaly.hpp"
#include "fivegang/cloud/broker.hpp"
#include "fivegang/cloud/reconstruct.hpp"
#include "fivegang/sim/rng.hpp"

using namespace fivegang;
using namespace fivegang::cloud;
using sim::RngStream;
using sim::SimTime;

namespace {

/// Per-segment comparison written independently of the matcher.
bool oracle_match(const std::string& filter, const std::string& topic)
{
    auto split = [](const std::string& s) {
        std::vector<std::string> out{""};
        for (char c : s) {
            if (c == '/')
                out.emplace_back();
            else
                out.back() += c;
        }
        return out;
    };
    const auto f = split(filter), t = split(topic);
    if (f.size() != t.size())
        return false;
    for (std::size_t i = 0; i < f.size(); ++i)
        if (f[i] != "+" && f[i] != t[i])
            return false;
    return true;
}

node::PipelineConfig small_cfg()
{
    node::PipelineConfig cfg;
    cfg.window_n = 32;
    cfg.cs.m = 24;
    cfg.cs.sparsity = 6;
    cfg.channels = {0, 2};
    cfg.rlnc = {4, 1.5};
    return cfg;
}

std::vector<node::SensorFrame> frames_for(std::size_t n, std::uint64_t seed)
{
    node::SignalSpec s;
    s.normalize_mag = false;
    s.channels[0].components.push_back(node::Sinusoid::dct_bin(3, 1.5, 1000.0, n));
    s.channels[2].offset = 9.81;
    s.channels[2].components.push_back(node::Sinusoid::dct_bin(static_cast<double>(1 + seed % 20), 0.7, 1000.0, n));
    std::vector<node::SensorFrame> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(s.evaluate(SimTime{static_cast<std::int64_t>(i) * 1000}));
    return out;
}

} // namespace

TEST(Broker, NoSubscribersDeliversNothing)
{
    Broker b;
    EXPECT_EQ(b.publish("plant/line1/node7/vibration", {1}, "p", 0), 0u);
}

TEST(Broker, DuplicateIsSuppressed)
{
    Broker b;
    const auto s = b.subscribe("ui", "plant/+/node7/vibration");
    EXPECT_EQ(b.publish("plant/line1/node7/vibration", {1}, "p", 9), 1u);
    EXPECT_EQ(b.publish("plant/line1/node7/vibration", {1}, "p", 9), 0u);
    EXPECT_EQ(b.publish("plant/line1/node7/vibration", {1}, "q", 9), 1u); // other publisher
    EXPECT_EQ(b.drain(s).size(), 2u);
    EXPECT_EQ(b.duplicates(), 1u);
}

TEST(Broker, WildcardMatcherAgreesWithOracle)
{
    RngStream rng(17);
    const std::vector<std::string> seg{"plant", "line1", "line2", "node7", "node8", "vibration", "temp"};
    const std::string filter = "plant/+/node7/vibration";
    for (int i = 0; i < 100; ++i) {
        std::string topic;
        const int len = 1 + static_cast<int>(rng.below(5));
        for (int j = 0; j < len; ++j)
            topic += (j ? "/" : "") + seg[rng.below(seg.size())];
        EXPECT_EQ(topic_matches(filter, topic), oracle_match(filter, topic)) << topic;
    }
    EXPECT_TRUE(topic_matches(filter, "plant/x/node7/vibration"));
    EXPECT_FALSE(topic_matches(filter, "plant/x/node7/vibration/extra"));
    EXPECT_FALSE(topic_matches(filter, "plant/node7/vibration"));
}

TEST(Broker, MalformedTopicsRejected)
{
    Broker b;
    EXPECT_THROW(b.publish("", {}, "p", 0), MalformedTopic);
    EXPECT_THROW(b.publish("a//b", {}, "p", 0), MalformedTopic);
    EXPECT_THROW(b.publish("a/+/b", {}, "p", 0), MalformedTopic);
    EXPECT_THROW(b.subscribe("s", "a/b+/c"), MalformedTopic);
    EXPECT_THROW(b.subscribe("s", "a/#"), MalformedTopic);
}

TEST(Broker, DedupExactUnderRandomRetransmission)
{
    Broker b;
    const auto s1 = b.subscribe("a", "plant/+/x");
    const auto s2 = b.subscribe("b", "plant/l1/x");
    RngStream rng(3);
    std::vector<std::uint64_t> sent;
    for (std::uint64_t seq = 0; seq < 5000; ++seq) {
        b.publish("plant/l1/x", {}, "gw", seq);
        sent.push_back(seq);
        // Retransmit a few recent seqs, possibly out of order.
        for (int r = 0; r < 2; ++r)
            if (rng.bernoulli(0.3))
                b.publish("plant/l1/x", {}, "gw", sent[sent.size() - 1 - rng.below(std::min<std::size_t>(50, sent.size()))]);
    }
    for (auto id : {s1, s2}) {
        auto msgs = b.drain(id);
        ASSERT_EQ(msgs.size(), 5000u);
        std::vector<std::uint64_t> seqs;
        for (const auto& m : msgs)
            seqs.push_back(m.seq);
        std::sort(seqs.begin(), seqs.end());
        EXPECT_EQ(std::adjacent_find(seqs.begin(), seqs.end()), seqs.end());
    }
}

TEST(Broker, SeenWindowSlides)
{
    SeenWindow w;
    EXPECT_TRUE(w.insert(10));
    EXPECT_FALSE(w.insert(10));
    EXPECT_TRUE(w.insert(5));
    EXPECT_TRUE(w.insert(10 + SeenWindow::kSpan));
    EXPECT_FALSE(w.insert(10)); // fell out of the window
    EXPECT_TRUE(w.insert(20)); // inside the window, unseen
    EXPECT_FALSE(w.insert(10 + SeenWindow::kSpan));
    EXPECT_TRUE(w.insert(SeenWindow::kSpan * 5));
    EXPECT_TRUE(w.insert(SeenWindow::kSpan * 5 - 1));
}

TEST(Anomaly, IdenticalWindowsHitTheFloor)
{
    const std::vector<std::vector<double>> w(3, {1.0, 2.0, 3.0});
    const auto m = train(w, 4.0);
    EXPECT_EQ(m.mean, w[0]);
    for (double s : m.sigma)
        EXPECT_EQ(s, kSigmaFloor);
}

TEST(Anomaly, TwoWindowHandArithmetic)
{
    const std::vector<std::vector<double>> w{{0, 0, 0}, {2, 2, 2}};
    const auto m = train(w);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_DOUBLE_EQ(m.mean[i], 1.0);
        EXPECT_DOUBLE_EQ(m.sigma[i], std::sqrt(2.0));
    }
    EXPECT_EQ(m.trained_on, 2u);
}

TEST(Anomaly, TrainingIsPermutationInvariant)
{
    RngStream rng(2);
    std::vector<std::vector<double>> w(20, std::vector<double>(8));
    for (auto& v : w)
        for (auto& x : v)
            x = rng.normal(3, 2);
    const auto a = train(w);
    std::reverse(w.begin(), w.end());
    std::swap(w[3], w[11]);
    const auto b = train(w);
    for (std::size_t i = 0; i < 8; ++i) {
        EXPECT_NEAR(a.mean[i], b.mean[i], 1e-12);
        EXPECT_NEAR(a.sigma[i], b.sigma[i], 1e-12);
    }
}

TEST(Anomaly, GuardsOnTrainingAndShape)
{
    EXPECT_THROW(train(std::vector<std::vector<double>>{{1.0}}), InsufficientTraining);
    EXPECT_THROW(train(std::vector<std::vector<double>>{{1.0}, {1.0, 2.0}}), ShapeMismatch);
    const auto m = train(std::vector<std::vector<double>>{{0, 0}, {2, 2}});
    EXPECT_THROW(detect(m, std::vector<double>{1.0}), ShapeMismatch);
}

TEST(Anomaly, BaselineAndConstructedExceedance)
{
    const auto m = train(std::vector<std::vector<double>>{{0, 0, 0}, {2, 4, 6}}, 4.0);
    EXPECT_FALSE(detect(m, m.mean));
    EXPECT_EQ(anomaly_score(m, m.mean).first, 0.0);
    auto x = m.mean;
    x[1] += 5.0 * m.sigma[1];
    const auto a = detect(m, x);
    ASSERT_TRUE(a);
    EXPECT_NEAR(a->score, 5.0, 1e-12);
    EXPECT_EQ(a->index, 1u);
}

TEST(Anomaly, RocOnPlantedSixSigma)
{
    // 1000 test windows, half carrying a 6 sigma bump at a random index.
    RngStream rng(99);
    const std::size_t n = 64;
    std::vector<double> mu(n), sd(n);
    for (std::size_t i = 0; i < n; ++i) {
        mu[i] = rng.uniform(-1, 1);
        sd[i] = rng.uniform(0.1, 1.0);
    }
    std::vector<std::vector<double>> training(500, std::vector<double>(n));
    for (auto& w : training)
        for (std::size_t i = 0; i < n; ++i)
            w[i] = rng.normal(mu[i], sd[i]);
    const auto m = train(training, 4.0);
    int tp = 0, fp = 0, pos = 0, neg = 0;
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> w(n);
        for (std::size_t i = 0; i < n; ++i)
            w[i] = rng.normal(mu[i], sd[i]);
        const bool planted = t % 2 == 0;
        if (planted) {
            const auto i = rng.below(n);
            w[i] += (rng.bernoulli(0.5) ? 6.0 : -6.0) * sd[i];
        }
        const bool alarm = detect(m, w).has_value();
        (planted ? pos : neg)++;
        if (alarm)
            (planted ? tp : fp)++;
    }
    EXPECT_GE(static_cast<double>(tp) / pos, 0.95);
    EXPECT_LE(static_cast<double>(fp) / neg, 0.05);
}

TEST(Anomaly, PerIndexFalseAlarmRateUnderTrainingDistribution)
{
    RngStream rng(7);
    const std::size_t n = 16;
    std::vector<std::vector<double>> training(2000, std::vector<double>(n));
    for (auto& w : training)
        for (auto& x : w)
            x = rng.normal(0, 1);
    const auto m = train(training, 4.0);
    std::uint64_t exceed = 0, total = 0;
    for (int t = 0; t < 20000; ++t)
        for (std::size_t i = 0; i < n; ++i) {
            exceed += std::abs(rng.normal(0, 1) - m.mean[i]) / m.sigma[i] > 4.0;
            ++total;
        }
    EXPECT_LE(static_cast<double>(exceed) / total, 1e-3);
}

TEST(Reconstruct, RankGateReturnsIncomplete)
{
    const auto cfg = small_cfg();
    node::BatteryState b;
    RngStream rng(1);
    const auto frames = frames_for(cfg.window_n, 1);
    auto pkts = node::pipeline_encode(frames, cfg, 0, b, rng, SimTime{0});
    pkts.resize(cfg.rlnc.k - 1);
    StageCounters c;
    const auto r = reconstruct({"s", cfg, {}}, pkts, nullptr, c);
    ASSERT_TRUE(std::holds_alternative<Incomplete>(r));
    EXPECT_EQ(std::get<Incomplete>(r).rank, cfg.rlnc.k - 1);
    EXPECT_EQ(c.network_complete, 0u);
    EXPECT_EQ(c.source_decodes + c.cs_recoveries, 0u);
}

TEST(Reconstruct, ConfigMismatchOnFraming)
{
    auto cfg = small_cfg();
    node::BatteryState b;
    RngStream rng(1);
    const auto pkts = node::pipeline_encode(frames_for(cfg.window_n, 2), cfg, 0, b, rng, SimTime{0});
    auto other = cfg;
    other.rlnc.k = 5;
    StageCounters c;
    EXPECT_THROW(reconstruct({"s", other, {}}, pkts, nullptr, c), ConfigMismatch);
    other = cfg;
    other.channels = {0, 1};
    EXPECT_THROW(reconstruct({"s", other, {}}, pkts, nullptr, c), ConfigMismatch);
}

TEST(Reconstruct, IdempotentAndStageOrdered)
{
    auto cfg = small_cfg();
    node::BatteryState b;
    RngStream rng(3);
    const auto frames = frames_for(cfg.window_n, 3);
    const auto pkts = node::pipeline_encode(frames, cfg, 4, b, rng, SimTime{0});
    StageCounters c;
    const auto r1 = reconstruct({"s", cfg, {}}, pkts, nullptr, c);
    const auto r2 = reconstruct({"s", cfg, {}}, pkts, nullptr, c);
    ASSERT_TRUE(std::holds_alternative<Reconstruction>(r1));
    EXPECT_EQ(std::get<Reconstruction>(r1), std::get<Reconstruction>(r2));
    EXPECT_EQ(std::get<Reconstruction>(r1).window, 4u);
    EXPECT_EQ(c.network_complete, 2u);
    EXPECT_EQ(c.cs_recoveries, 2u * cfg.channels.size());
    EXPECT_EQ(c.source_decodes, 0u); // raw stream
}

TEST(Reconstruct, CorrelationViolationIsSubstitutedAndListed)
{
    auto raw_cfg = small_cfg();
    auto syn_cfg = small_cfg();
    syn_cfg.dsc_mode = node::DscMode::syndrome;
    node::BatteryState b;
    RngStream rng(5);
    const auto frames = frames_for(raw_cfg.window_n, 5);
    StageCounters c;
    auto side = std::get<Reconstruction>(
        reconstruct({"p", raw_cfg, {}}, node::pipeline_encode(frames, raw_cfg, 0, b, rng, SimTime{0}), nullptr, c));
    const auto syn_pkts = node::pipeline_encode(frames, syn_cfg, 0, b, rng, SimTime{0});

    // Clean side information: exact decode, nothing degraded.
    auto clean = std::get<Reconstruction>(reconstruct({"s", syn_cfg, "p"}, syn_pkts, &side, c));
    EXPECT_TRUE(clean.degraded.empty());
    EXPECT_EQ(clean.levels, side.levels);

    // Corrupt two bits inside the first 7-bit chunk of channel 0's side info.
    auto bad = side;
    bad.levels[0][0] ^= std::uint64_t{0b11} << (syn_cfg.quantizer.bits_per_sample - 2);
    const auto before = c.substitutions;
    auto r = std::get<Reconstruction>(reconstruct({"s", syn_cfg, "p"}, syn_pkts, &bad, c));
    EXPECT_FALSE(r.degraded.empty());
    EXPECT_EQ(c.substitutions, before + 1);
    for (const auto& d : r.degraded)
        EXPECT_EQ(d.channel, 0u);

    // Missing side information is a configuration error, not a crash.
    EXPECT_THROW(reconstruct({"s", syn_cfg, "p"}, syn_pkts, nullptr, c), ConfigMismatch);
}
