// fivegang: validate, run, sweep and dump scenarios.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "fivegang/scenario/runner.hpp"

namespace fs = fivegang::scenario;
using nlohmann::json;

namespace {

enum Exit
{
    kOk = 0,
    kValidation = 2,
    kRuntime = 3,
    kIo = 4,
};

void setup_logging()
{
    auto logger = spdlog::stderr_color_mt("fivegang");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    const char* env = std::getenv("FIVEGANG_LOG");
    const std::string level = env ? env : "error";
    if (level == "debug")
        spdlog::set_level(spdlog::level::debug);
    else if (level == "info")
        spdlog::set_level(spdlog::level::info);
    else
        spdlog::set_level(spdlog::level::err);
}

// Machine-readable error record on stderr.
int fail(int code, const std::string& kind, const std::string& message, const std::string& path = {})
{
    json rec{{"type", "error"}, {"exit_code", code}, {"kind", kind}, {"message", message}};
    if (!path.empty())
        rec["path"] = path;
    std::cerr << rec.dump() << '\n';
    return code;
}

std::string read_file(const std::string& p)
{
    std::ifstream f(p, std::ios::binary);
    if (!f)
        throw fivegang::IoFailure("cannot read " + p);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

json parse_doc(const std::string& text)
{
    try {
        return json::parse(text);
    }
    catch (const json::parse_error& e) {
        throw fivegang::ParseError("", e.what());
    }
}

std::vector<json> parse_values(const std::string& text)
{
    // Either a JSON array or a comma separated list of JSON scalars.
    std::vector<json> out;
    if (!text.empty() && text.front() == '[') {
        for (auto& v : parse_doc(text))
            out.push_back(v);
        return out;
    }
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty())
            continue;
        try {
            out.push_back(json::parse(item));
        }
        catch (const json::parse_error&) {
            out.emplace_back(item);
        }
    }
    return out;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"fivegang: discrete-event simulator for a 5G industrial IoT stack"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    bool csv = false;
    std::string param;
    std::string values;
    unsigned jobs = 1;

    auto* validate = app.add_subcommand("validate", "check a scenario file and exit");
    auto* run = app.add_subcommand("run", "run a scenario and write metrics.jsonl and report.json");
    auto* sweep = app.add_subcommand("sweep", "run a scenario once per parameter value");
    auto* dump = app.add_subcommand("dump", "run a scenario and print the device-cloud state as JSON");
    for (auto* sub : {validate, run, sweep, dump}) {
        sub->add_option("--scenario", scenario_path, "scenario JSON file")->required();
        sub->add_option("--seed", seed, "override the scenario seed");
    }
    for (auto* sub : {run, sweep}) {
        sub->add_option("--out", out_dir, "output directory");
        sub->add_flag("--csv", csv, "also write metrics.csv");
    }
    sweep->add_option("--param", param, "JSON pointer to a scalar, e.g. /links/0/loss_probability")->required();
    sweep->add_option("--values", values, "values: JSON array or comma separated list")->required();
    sweep->add_option("--jobs", jobs, "parallel runs")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);
    setup_logging();

    std::string text;
    try {
        text = read_file(scenario_path);
    }
    catch (const fivegang::IoFailure& e) {
        return fail(kIo, "IoFailure", e.what());
    }

    json doc;
    fs::Scenario sc;
    try {
        doc = fs::with_seed(parse_doc(text), seed);
        sc = fs::validate(doc);
    }
    catch (const fivegang::ScenarioError& e) {
        return fail(kValidation, e.kind(), e.message(), e.path().empty() ? "/" : e.path());
    }
    catch (const fivegang::Error& e) {
        return fail(kValidation, "ValidationError", e.what());
    }
    spdlog::info("scenario {} validated: {} nodes, {} links, {} flows", scenario_path, sc.nodes.size(),
                 sc.links.size(), sc.flows.size());

    try {
        if (*validate) {
            std::cout << json{{"valid", true}, {"scenario_hash", fs::scenario_hash(sc.source)}}.dump() << '\n';
            return kOk;
        }
        if (*run) {
            const auto rep = fs::run(sc);
            spdlog::info("run finished in {:.1f} ms", rep.wall_clock_ms);
            fs::write_outputs(rep, out_dir, csv);
            spdlog::info("wrote {}", out_dir);
            return kOk;
        }
        if (*dump) {
            std::cout << fs::dump(sc).dump(2) << '\n';
            return kOk;
        }
        if (*sweep) {
            const auto vals = parse_values(values);
            spdlog::info("sweeping {} over {} values on {} threads", param, vals.size(), jobs);
            const auto results = fs::sweep(doc, param, vals, jobs);
            fs::write_sweep(results, out_dir, csv);
            return kOk;
        }
    }
    catch (const fivegang::IoFailure& e) {
        return fail(kIo, "IoFailure", e.what());
    }
    catch (const fivegang::ScenarioError& e) {
        return fail(kValidation, e.kind(), e.message(), e.path().empty() ? "/" : e.path());
    }
    catch (const fivegang::BadParameterPath& e) {
        return fail(kValidation, "BadParameterPath", e.what());
    }
    catch (const std::exception& e) {
        return fail(kRuntime, "RuntimeError", e.what());
    }
    return kOk;
}
