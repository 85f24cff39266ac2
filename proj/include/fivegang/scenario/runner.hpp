#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "fivegang/errors.hpp"
#include "fivegang/scenario/scenario.hpp"
#include "fivegang/scenario/world.hpp"

namespace fivegang::scenario {

using json = nlohmann::json;

/// SHA-256 of the canonical dump (sorted keys, no whitespace).
inline std::string scenario_hash(const json& doc)
{
    const auto text = doc.dump();
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i)
        os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

struct RunReport
{
    std::string hash;
    std::uint64_t seed = 0;
    json report;      // report.json
    std::string jsonl; // metrics.jsonl
    std::vector<std::tuple<std::string, std::string, std::int64_t, double>> csv;
    json cloud_state;
    double wall_clock_ms = 0.0;

    const json& snapshot() const { return report.at("snapshot"); }
};

inline json with_seed(json doc, std::optional<std::uint64_t> seed)
{
    if (seed)
        doc["seed"] = *seed;
    return doc;
}

/// Runs a validated scenario entirely in memory.
inline RunReport run(const Scenario& sc)
{
    const auto t0 = std::chrono::steady_clock::now();
    RunReport out;
    out.hash = scenario_hash(sc.source);
    out.seed = sc.seed;

    World world(sc);
    auto res = world.run();

    std::string lines;
    lines += json{{"type", "header"},
                  {"schema_version", sim::kMetricsSchemaVersion},
                  {"scenario_hash", out.hash},
                  {"seed", sc.seed},
                  {"experiment", sc.experiment},
                  {"duration_us", sc.duration_us}}
                 .dump();
    lines += '\n';
    for (const auto& r : res.records) {
        lines += r.dump();
        lines += '\n';
    }
    auto snap = res.snapshot.to_json();
    auto tail = snap;
    tail["type"] = "snapshot";
    lines += tail.dump();
    lines += '\n';
    out.jsonl = std::move(lines);
    out.csv = res.snapshot.csv_rows();
    out.cloud_state = std::move(res.cloud_state);

    out.wall_clock_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    auto& r = out.report;
    r = std::move(res.report);
    r["schema_version"] = sim::kMetricsSchemaVersion;
    r["scenario_hash"] = out.hash;
    r["seed"] = sc.seed;
    r["experiment"] = sc.experiment;
    r["snapshot"] = std::move(snap);
    r["wall_clock_ms"] = out.wall_clock_ms;
    return out;
}

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream f(p, std::ios::binary);
    if (!f)
        throw IoFailure("cannot open " + p.string() + " for writing");
    f << text;
    if (!f.flush())
        throw IoFailure("write failed: " + p.string());
}

inline std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + '"';
}

inline std::string fmt_number(double v)
{
    return json(v).dump();
}

inline void make_dir(const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw IoFailure("cannot create " + dir.string() + ": " + ec.message());
}

} // namespace detail

inline void write_outputs(const RunReport& rep, const std::filesystem::path& dir, bool csv)
{
    detail::make_dir(dir);
    detail::write_file(dir / "metrics.jsonl", rep.jsonl);
    detail::write_file(dir / "report.json", rep.report.dump(2) + "\n");
    if (csv) {
        std::string text = "metric,entity,t_us,value\n";
        for (const auto& [metric, entity, t, v] : rep.csv)
            text += metric + "," + detail::csv_field(entity) + "," + std::to_string(t) + "," + detail::fmt_number(v) + "\n";
        detail::write_file(dir / "metrics.csv", text);
    }
}

/// Device-cloud state after a run: broker, streams and models.
inline json dump(const Scenario& sc)
{
    auto rep = run(sc);
    return {{"scenario_hash", rep.hash}, {"seed", rep.seed}, {"clouds", rep.cloud_state}};
}

// ---------------------------------------------------------------------------

struct SweepResult
{
    json value;
    RunReport report;
};

/// One summary row per run. Columns are fixed.
inline constexpr const char* kSweepColumns =
    "index,value,seed,scenario_hash,sent,delivered,lost,duplicated,reordered,windows_completed,windows_expected,"
    "completion_rate,relative_l2,handover_lost,alarms";

inline std::string sweep_row(std::size_t i, const SweepResult& r)
{
    const auto& rep = r.report.report;
    std::uint64_t sent = 0, delivered = 0, lost = 0, dup = 0, reord = 0;
    for (const auto& [id, f] : rep.at("snapshot").at("flows").items()) {
        sent += f.at("sent").get<std::uint64_t>();
        delivered += f.at("delivered").get<std::uint64_t>();
        lost += f.at("lost").get<std::uint64_t>();
        dup += f.at("duplicated").get<std::uint64_t>();
        reord += f.at("reordered").get<std::uint64_t>();
    }
    std::uint64_t wc = 0, we = 0;
    double rate = 0, rel = 0;
    if (rep.contains("reconstruction")) {
        const auto& rc = rep.at("reconstruction");
        wc = rc.at("windows_completed").get<std::uint64_t>();
        we = rc.at("windows_expected").get<std::uint64_t>();
        rate = rc.at("completion_rate").get<double>();
        rel = rc.at("relative_l2").get<double>();
    }
    std::uint64_t ho = 0;
    for (const auto& h : rep.at("handover_reports"))
        ho += h.at("packets_lost_during_handover").get<std::uint64_t>();
    std::ostringstream os;
    os << i << ',' << detail::csv_field(r.value.dump()) << ',' << r.report.seed << ',' << r.report.hash << ',' << sent
       << ',' << delivered << ',' << lost << ',' << dup << ',' << reord << ',' << wc << ',' << we << ','
       << detail::fmt_number(rate) << ',' << detail::fmt_number(rel) << ',' << ho << ',' << rep.at("alarms").size();
    return os.str();
}

/// Runs the scenario once per value with `parameter` (a JSON pointer) set to
/// that value and the seed advanced by the run index. Runs are independent
/// and may execute on `jobs` threads; results keep the order of `values`.
inline std::vector<SweepResult> sweep(const json& doc, const std::string& parameter, const std::vector<json>& values,
                                      unsigned jobs = 1)
{
    json::json_pointer ptr;
    try {
        ptr = json::json_pointer(parameter);
    }
    catch (const json::exception& e) {
        throw BadParameterPath(parameter + ": " + e.what());
    }
    if (!doc.contains(ptr))
        throw BadParameterPath(parameter + ": no such path");
    if (!doc.at(ptr).is_primitive() || doc.at(ptr).is_null())
        throw BadParameterPath(parameter + ": not a scalar");
    const auto base_seed = doc.value("seed", std::uint64_t{0});

    std::vector<Scenario> scenarios;
    scenarios.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!values[i].is_primitive() || values[i].is_null())
            throw BadParameterPath(parameter + ": sweep value " + values[i].dump() + " is not a scalar");
        json d = doc;
        d[ptr] = values[i];
        d["seed"] = base_seed + i;
        scenarios.push_back(validate(d));
    }

    std::vector<SweepResult> out(values.size());
    std::vector<std::exception_ptr> errors(values.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < values.size(); i = next++) {
            try {
                out[i] = {values[i], run(scenarios[i])};
            }
            catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const auto n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(values.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n; ++t)
        pool.emplace_back(worker);
    worker();
    for (auto& t : pool)
        t.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    return out;
}

inline void write_sweep(const std::vector<SweepResult>& results, const std::filesystem::path& dir, bool csv)
{
    detail::make_dir(dir);
    std::string text = std::string(kSweepColumns) + "\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
        write_outputs(results[i].report, dir / ("run-" + std::to_string(i)), csv);
        text += sweep_row(i, results[i]) + "\n";
    }
    detail::write_file(dir / "sweep.csv", text);
}

} // namespace fivegang::scenario
