// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "fivegang/codec/cs.hpp"
#include "fivegang/codec/dsc.hpp"
#include "fivegang/codec/gf256.hpp"
#include "fivegang/codec/rlnc.hpp"
#include "fivegang/cloud/anomaly.hpp"
#include "fivegang/scenario/runner.hpp"
#include "fivegang/sim/channel.hpp"
#include "oracles.hpp"

using namespace fivegang;
using nlohmann::json;

namespace {

json load(const std::string& name)
{
    std::ifstream f(std::string(FIVEGANG_SCENARIO_DIR) + "/" + name);
    return json::parse(f);
}

struct Outcome
{
    bool ok = true;
    std::string detail;

    void check(bool cond, const std::string& what)
    {
        if (!cond) {
            ok = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

int failures = 0;

void criterion(int id, const char* name, double budget_s, const std::function<Outcome()>& body)
{
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    }
    catch (const std::exception& e) {
        o.ok = false;
        o.detail = std::string("exception: ") + e.what();
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (budget_s > 0 && s >= budget_s)
        o.check(false, "runtime " + std::to_string(s) + " s over budget");
    if (!o.ok)
        ++failures;
    std::printf("%s %2d %-24s %8.3f s  %s\n", o.ok ? "PASS" : "FAIL", id, name, s, o.detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

rlnc::Generation random_generation(std::uint32_t id, std::size_t k, std::size_t l, sim::RngStream& rng)
{
    rlnc::Generation g;
    g.id = id;
    g.true_length = k * l;
    g.symbols.assign(k, codec::Bytes(l));
    for (auto& s : g.symbols)
        for (auto& b : s)
            b = rng.byte();
    return g;
}

Outcome handover()
{
    Outcome o;
    auto doc = load("handover.json");
    const auto mbb = scenario::run(scenario::validate(doc));
    const auto& h = mbb.report.at("handover_reports").at(0);
    const auto lost = h.at("packets_lost_during_handover").get<std::uint64_t>();
    const auto dual = h.at("dual_active_us").get<std::int64_t>();
    const auto& f = mbb.snapshot().at("flows").at("f1");
    o.check(f.at("sent") == 10000, "flow is not 10^4 packets");
    o.check(h.at("started_at_us") == doc.at("duration_us").get<std::int64_t>() / 2, "migration not at duration/2");
    o.check(lost == 0, "make-before-break lost " + std::to_string(lost));
    o.check(dual > 0, "no dual-active interval");

    doc["handover"]["events"][0]["mode"] = "break-before-make";
    const auto bbm = scenario::run(scenario::validate(doc));
    const auto bbm_lost = bbm.report.at("handover_reports").at(0).at("packets_lost_during_handover").get<std::uint64_t>();
    o.check(bbm_lost >= 1, "break-before-make lost nothing");
    o.detail += "mbb lost=" + std::to_string(lost) + " dual_active=" + std::to_string(dual) +
                "us bbm lost=" + std::to_string(bbm_lost);
    return o;
}

Outcome rlnc_correctness()
{
    Outcome o;
    int bad_inv = 0;
    for (unsigned a = 1; a < 256; ++a) {
        const auto x = static_cast<std::uint8_t>(a);
        bad_inv += gf256::mul(x, gf256::inv(x)) != 1 || gf256::inv(x) != oracle::gf_inv(x);
    }
    o.check(bad_inv == 0, std::to_string(bad_inv) + " bad inverses");

    int bad_rt = 0;
    for (std::size_t k = 1; k <= 16; ++k)
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            sim::RngStream rng(seed * 977 + k);
            const auto g = random_generation(static_cast<std::uint32_t>(seed), k, 8, rng);
            rlnc::Decoder dec(g.id, k, 8);
            rlnc::InsertResult last = rlnc::Redundant{};
            while (!dec.complete())
                last = dec.insert(rlnc::encode(g, rng));
            bad_rt += std::get<rlnc::Complete>(last).generation.symbols != g.symbols;
        }
    o.check(bad_rt == 0, std::to_string(bad_rt) + " round trips wrong");

    double expect = 1.0;
    for (int i = 1; i <= 4; ++i)
        expect *= 1.0 - std::pow(256.0, -i);
    sim::RngStream rng(31337);
    const auto g = random_generation(0, 4, 1, rng);
    int full = 0;
    const int trials = 100000;
    for (int t = 0; t < trials; ++t) {
        rlnc::Decoder dec(0, 4, 1);
        for (int i = 0; i < 4; ++i)
            dec.insert(rlnc::encode(g, rng));
        full += dec.complete();
    }
    const double p = static_cast<double>(full) / trials;
    o.check(std::abs(p - expect) <= 0.005, "joint decodability off");
    o.detail += "inverses 255/255, round trips 1600, P(rank 4)=" + fmt("%.5f", p) + " vs " + fmt("%.5f", expect);
    return o;
}

Outcome cs_recovery()
{
    Outcome o;
    const std::size_t n = 128, k = 5;
    const auto m = static_cast<std::size_t>(std::ceil(4.0 * k * std::log(double(n) / k)));
    const cs::SparseBasis basis(n, cs::BasisKind::dct2);
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        sim::RngStream rng(5000 + seed);
        Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        for (std::size_t placed = 0; placed < k;) {
            const auto j = static_cast<Eigen::Index>(rng.below(n));
            if (coeffs(j) != 0.0)
                continue;
            coeffs(j) = (rng.bernoulli(0.5) ? -1.0 : 1.0) * rng.uniform(1.0, 3.0);
            ++placed;
        }
        const Eigen::VectorXd xv = basis.inverse(coeffs);
        const std::vector<double> x(xv.data(), xv.data() + xv.size());
        const auto rec = cs::decode(cs::encode(x, cs::MeasurementMatrix::bernoulli(m, n, seed)), k, 1e-10);
        ok += oracle::rel_l2(rec.signal, x) <= 1e-6;
    }
    o.check(ok >= 99, "only " + std::to_string(ok) + "/100 recovered");
    o.detail += "n=128 k=5 m=" + std::to_string(m) + " recovered " + std::to_string(ok) + "/100";
    return o;
}

Outcome dsc_exhaustive()
{
    Outcome o;
    const dsc::Quantizer q{7, 0.0, 128.0};
    int single_bad = 0, flagged = 0, decoded_ok = 0, silent = 0;
    for (unsigned x = 0; x < 128; ++x) {
        const auto blk = dsc::encode(std::vector<double>{x + 0.5}, q);
        for (int f = -1; f < 7; ++f) {
            const unsigned y = f < 0 ? x : x ^ (1u << f);
            const auto res = dsc::decode(blk, std::vector<double>{y + 0.5}, q);
            const auto* r = std::get_if<dsc::Reconstructed>(&res);
            single_bad += !r || r->levels[0] != x;
        }
        for (int a = 0; a < 7; ++a)
            for (int b = a + 1; b < 7; ++b) {
                const unsigned y = x ^ (1u << a) ^ (1u << b);
                const auto res = dsc::decode(blk, std::vector<double>{y + 0.5}, q);
                if (std::holds_alternative<dsc::CorrelationViolation>(res))
                    ++flagged;
                else if (std::get<dsc::Reconstructed>(res).levels[0] == x)
                    ++decoded_ok;
                else
                    ++silent;
            }
    }
    o.check(single_bad == 0, std::to_string(single_bad) + " single-flip failures");
    o.check(silent == 0, std::to_string(silent) + " silent corruptions");
    o.detail += "<=1 flip: 1024/1024 exact; 2 flips: " + std::to_string(flagged) + " flagged, " +
                std::to_string(decoded_ok) + " exact, " + std::to_string(silent) + " silent";
    return o;
}

Outcome pipeline()
{
    Outcome o;
    const auto doc = load("sensor-pipeline.json");
    o.check(doc.at("links").at(0).at("loss_probability") == 0.1, "scenario loss is not 10%");
    o.check(doc.at("nodes").at(0).at("pipeline").at("rlnc").at("redundancy") == 1.5, "redundancy is not 1.5");
    const auto r = scenario::run(scenario::validate(doc));
    const auto& rc = r.report.at("reconstruction");
    const double err = rc.at("relative_l2").get<double>();
    std::uint64_t lost = 0, sent = 0;
    for (const auto& [id, f] : r.snapshot().at("flows").items()) {
        lost += f.at("lost").get<std::uint64_t>();
        sent += f.at("sent").get<std::uint64_t>();
    }
    o.check(err <= 1e-3, "relative error " + fmt("%.3g", err));
    o.check(rc.at("windows_completed").get<std::uint64_t>() > 0, "nothing reconstructed");
    o.detail += "relative L2 " + fmt("%.3g", err) + ", windows " + rc.at("windows_completed").dump() + "/" +
                rc.at("windows_expected").dump() + ", packets lost " + std::to_string(lost) + "/" +
                std::to_string(sent);
    return o;
}

Outcome anomaly()
{
    Outcome o;
    sim::RngStream rng(6006);
    const std::size_t n = 64;
    std::vector<double> mu(n), sd(n);
    for (std::size_t i = 0; i < n; ++i) {
        mu[i] = rng.uniform(-5, 5);
        sd[i] = rng.uniform(0.05, 2.0);
    }
    std::vector<std::vector<double>> training(1000, std::vector<double>(n));
    for (auto& w : training)
        for (std::size_t i = 0; i < n; ++i)
            w[i] = rng.normal(mu[i], sd[i]);
    const auto model = cloud::train(training, 4.0);
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
        const bool alarm = cloud::detect(model, w).has_value();
        (planted ? pos : neg)++;
        if (alarm)
            (planted ? tp : fp)++;
    }
    const double tpr = static_cast<double>(tp) / pos, fpr = static_cast<double>(fp) / neg;
    o.check(tpr >= 0.95, "TPR " + fmt("%.3f", tpr));
    o.check(fpr <= 0.05, "FPR " + fmt("%.3f", fpr));
    o.detail += "TPR " + fmt("%.3f", tpr) + " FPR " + fmt("%.3f", fpr) + " over 1000 windows";
    return o;
}

Outcome profiles()
{
    Outcome o;
    sim::Link l;
    l.profile = sim::make_profile(sim::ProfileKind::URLLC);
    l.rng = sim::RngStream(125);
    std::int64_t worst = 0;
    for (int i = 0; i < 200000; ++i) {
        const auto at = std::get<sim::Delivered>(sim::channel_transmit(l, 1 + i % 125, sim::SimTime{0})).at.us;
        worst = std::max(worst, at);
    }
    o.check(worst < 1000, "URLLC worst delay " + std::to_string(worst) + " us");
    const auto e = sim::make_profile(sim::ProfileKind::eMBB);
    o.check(e.downlink_capacity_bps == 20e9, "eMBB peak is not 20 Gbit/s");
    o.check(e.per_user_rate_bps == 100e6, "eMBB user rate is not 100 Mbit/s");
    o.detail += "URLLC worst " + std::to_string(worst) + " us over 2e5 packets; eMBB 20 Gbit/s, 100 Mbit/s per user";
    return o;
}

Outcome mmtc()
{
    Outcome o;
    const auto doc = load("mmtc-scale.json");
    const auto r = scenario::run(scenario::validate(doc));
    const auto& flows = r.snapshot().at("flows");
    std::size_t bad = 0, open = 0;
    std::uint64_t sent = 0, lost = 0;
    for (const auto& [id, f] : flows.items()) {
        const auto s = f.at("sent").get<std::uint64_t>();
        bad += s != f.at("delivered").get<std::uint64_t>() + f.at("lost").get<std::uint64_t>();
        open += !f.at("closed").get<bool>();
        sent += s;
        lost += f.at("lost").get<std::uint64_t>();
    }
    o.check(flows.size() == 10000, std::to_string(flows.size()) + " flows");
    o.check(doc.at("duration_us") == 60000000, "duration is not 60 s");
    o.check(bad == 0 && open == 0, std::to_string(bad) + " flows violate conservation, " + std::to_string(open) + " open");

    // Hand computation from the bundled device config.
    const auto& dev = doc.at("nodes").at(0);
    const auto& b = dev.at("battery");
    const double bytes_per_s = dev.at("payload_bytes").get<double>() * 1e6 / dev.at("report_interval_us").get<double>();
    const double power_uw = b.at("idle_cost_uj_per_s").get<double>() +
                            dev.at("samples_per_s").get<double>() * b.at("sample_cost_uj").get<double>() +
                            bytes_per_s * b.at("tx_cost_uj_per_byte").get<double>();
    const double hand_years = b.at("capacity_uj").get<double>() / power_uw / (365.0 * 86400.0);
    const double years = r.report.at("battery_projections").at(0).at("lifetime_years").get<double>();
    o.check(std::abs(hand_years - 10.0) <= 0.1, "hand-computed lifetime is " + fmt("%.3f", hand_years) + " years");
    o.check(std::abs(years - hand_years) <= 0.01 * hand_years, "projection " + fmt("%.3f", years) + " years");
    o.detail += "10000 flows, " + std::to_string(sent) + " sent, " + std::to_string(lost) + " lost, all balanced; " +
                "lifetime " + fmt("%.3f", years) + " y (hand " + fmt("%.3f", hand_years) + " y)";
    return o;
}

Outcome determinism()
{
    Outcome o;
    for (const auto* name : {"handover.json", "sensor-pipeline.json", "gateway-modes.json", "mmtc-scale.json"}) {
        const auto sc = scenario::validate(load(name));
        const auto a = scenario::run(sc).jsonl;
        const auto b = scenario::run(sc).jsonl;
        o.check(a == b, std::string(name) + " differs between runs");
        o.detail += std::string(o.detail.empty() ? "" : ", ") + name + " " + scenario::scenario_hash(json(a)).substr(0, 8);
    }
    return o;
}

Outcome gateway_modes()
{
    Outcome o;
    const auto doc = load("gateway-modes.json");
    bool connection_cost = true;
    for (const auto& n : doc.at("nodes"))
        if (n.at("kind") == "gateway")
            for (const auto& t : n.at("tariffs"))
                connection_cost = connection_cost && t.at("cost_per_connection_event").get<double>() > 0;
    o.check(connection_cost, "a tariff has no connection cost");
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto r = scenario::run(scenario::validate(scenario::with_seed(doc, seed)));
        const auto& g = r.report.at("gateways");
        const auto on = g.at("gw-online").at("batches").get<std::uint64_t>();
        const auto iv = g.at("gw-interval").at("batches").get<std::uint64_t>();
        const auto sl = g.at("gw-sleep").at("batches").get<std::uint64_t>();
        const auto c_on = g.at("gw-online").at("cost").get<double>();
        const auto c_iv = g.at("gw-interval").at("cost").get<double>();
        o.check(on >= iv && iv >= sl, "seed " + std::to_string(seed) + " batch order broken");
        o.check(c_iv < c_on, "seed " + std::to_string(seed) + " interval not cheaper");
        if (seed == 0)
            o.detail += "seed 0: batches " + std::to_string(on) + " >= " + std::to_string(iv) + " >= " +
                        std::to_string(sl) + ", cost " + fmt("%.2f", c_iv) + " < " + fmt("%.2f", c_on) + "; 10 seeds";
    }
    return o;
}

} // namespace

int main()
{
    criterion(1, "zero-loss handover", 5, handover);
    criterion(2, "rlnc correctness", 30, rlnc_correctness);
    criterion(3, "cs recovery", 10, cs_recovery);
    criterion(4, "dsc exhaustiveness", 5, dsc_exhaustive);
    criterion(5, "end-to-end pipeline", 20, pipeline);
    criterion(6, "anomaly detection", 0, anomaly);
    criterion(7, "channel profiles", 0, profiles);
    criterion(8, "mmtc scale", 300, mmtc);
    criterion(9, "determinism", 0, determinism);
    criterion(10, "gateway modes", 0, gateway_modes);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
