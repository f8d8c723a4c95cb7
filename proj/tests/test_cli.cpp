#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "commands.hpp"
#include "config.hpp"

using namespace tspread;
using namespace tspread::app;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("tspread_cli_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const fs::path& dir, const json& doc) {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << doc.dump(2);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result call(CommandOptions o) {
    std::ostringstream out, err;
    const int code = run_command(o, out, err);
    return {code, out.str(), err.str()};
}

json two_users(double lambda = 0.2) {
    return json{{"users",
                 {{{"distance_m", 100}, {"arrival_rate", lambda}, {"mean_file_bytes", 1e6}},
                  {{"distance_m", 100}, {"arrival_rate", lambda}, {"mean_file_bytes", 1e6}}}},
                {"scheduler", "greedy"},
                {"costs", {{"eta_s", 0}, {"phi_j", 1}, {"weight", 0}}}};
}

json short_stopping(double horizon) {
    return {{"relative_half_width", 1e-9}, {"max_sim_time_s", horizon}, {"initial_batch_arrivals", 50}};
}

}  // namespace

TEST_CASE("malformed configs exit 2 with the field path") {
    const auto dir = scratch("bad");
    auto run_with = [&](const json& doc) {
        return call({.command = "simulate", .config_path = write_config(dir, doc).string(), .out_dir = dir.string()});
    };
    auto doc = two_users();
    doc["users"][1]["arrival_rate"] = "fast";
    auto r = run_with(doc);
    CHECK(r.code == exit_config);
    CHECK(r.err.find("users[1].arrival_rate: expected a number") != std::string::npos);

    doc = two_users();
    doc["channel"] = {{"bandwith_hz", 1e6}};
    r = run_with(doc);
    CHECK(r.code == exit_config);
    CHECK(r.err.find("channel.bandwith_hz: unknown field") != std::string::npos);

    doc = two_users();
    doc["users"][0]["mean_file_bytes"] = -5;
    r = run_with(doc);
    CHECK(r.code == exit_config);
    CHECK(r.err.find("users[0].mean_file_bytes") != std::string::npos);

    doc = two_users();
    doc["costs"]["weight"] = {{0, 1}, {1}};
    r = run_with(doc);
    CHECK(r.code == exit_config);
    CHECK(r.err.find("costs.weight[1]") != std::string::npos);

    doc = two_users();
    doc["dispatcher"] = "random";
    r = run_with(doc);
    CHECK(r.code == exit_config);
    CHECK(r.err.find("dispatcher") != std::string::npos);

    doc = two_users();
    doc.erase("users");
    r = run_with(doc);
    CHECK(r.code == exit_config);
    CHECK(r.err.find("users: required") != std::string::npos);

    std::ofstream(dir / "broken.json") << "{ \"users\": [";
    r = call({.command = "simulate", .config_path = (dir / "broken.json").string(), .out_dir = dir.string()});
    CHECK(r.code == exit_config);

    r = call({.command = "simulate", .config_path = (dir / "missing.json").string(), .out_dir = dir.string()});
    CHECK(r.code == exit_config);

    r = call({.command = "solve", .config_path = write_config(dir, two_users()).string(), .out_dir = dir.string(),
              .weight = -1.0});
    CHECK(r.code == exit_config);
}

TEST_CASE("config round trip") {
    auto doc = two_users();
    doc["clusters"] = {{"positions", {{10, 0}, {200, 0}}}, {"comm_range_m", 50}, {"num_heads", 1}};
    doc["fading"] = "gauss-markov";
    doc["costs"]["phi_j"] = {{0, 2}, {"inf", 0}};
    const auto app = parse_config(doc);
    CHECK(app.scenario.clusters == std::vector<std::vector<int>>{{0}, {1}});
    CHECK(app.scenario.fading.kind == FadingProcess::Kind::gauss_markov);
    CHECK(app.scenario.fading.correlation == doctest::Approx(std::exp(-2 * M_PI * 5 * 0.01)));
    CHECK(std::isinf(app.scenario.costs.phi(1, 0)));
    const auto again = parse_config(to_json(app.scenario));
    CHECK(to_json(again.scenario) == to_json(app.scenario));
}

TEST_CASE("solve writes the policy grid, curves and summary") {
    const auto dir = scratch("solve");
    const auto cfg = write_config(dir, two_users());
    SUBCASE("w = 0 hugs the diagonal") {
        const auto r = call({.command = "solve", .config_path = cfg.string(), .out_dir = dir.string(), .trunc = 30});
        REQUIRE(r.code == exit_ok);
        const auto policy = lines(dir / "policy.csv");
        CHECK(policy[0] == "# schema=tspread.policy/1");
        CHECK(policy[1] == "q1,q2,action");
        CHECK(policy.size() == 2 + 31 * 31);
        const auto curve = lines(dir / "switching_curve.csv");
        CHECK(curve[0] == "# schema=tspread.switching/1");
        for (int q1 = 1; q1 <= 25; ++q1) {
            CHECK(curve[2 + q1] == std::to_string(q1) + "," + std::to_string(q1 - 1) + "," + std::to_string(q1 + 1));
        }
        const auto summary = json::parse(slurp(dir / "solution.json"));
        CHECK(summary["contiguous"] == true);
        CHECK(summary["residual_span"].get<double>() < 1e-8);
        const auto manifest = json::parse(slurp(dir / "manifest.json"));
        CHECK(manifest["command"] == "solve");
        CHECK(manifest["outputs"].size() == 3);
        CHECK(manifest.contains("tool_version"));
        CHECK(manifest.contains("wall_clock_s"));
    }
    SUBCASE("penalty proxy: nothing moves unless the own queue is full") {
        const auto r = call({.command = "solve", .config_path = cfg.string(), .out_dir = dir.string(),
                             .weight = 1e6, .trunc = 20});
        REQUIRE(r.code == exit_ok);
        const auto policy = lines(dir / "policy.csv");
        std::size_t moved = 0;
        for (std::size_t k = 2; k < policy.size(); ++k) {
            int q1, q2;
            char action[32];
            REQUIRE(std::sscanf(policy[k].c_str(), "%d,%d,%31s", &q1, &q2, action) == 3);
            const std::string a(action);
            if (a == "NONE") continue;
            ++moved;
            CHECK(((a == "U1_TO_U2" && q1 == 20) || (a == "U2_TO_U1" && q2 == 20)));
        }
        CHECK(moved == 2 * 20);
    }
    SUBCASE("solver failure exits 4") {
        auto doc = two_users();
        doc["solver"] = {{"max_iterations", 5}};
        const auto r = call({.command = "solve", .config_path = write_config(dir, doc).string(),
                             .out_dir = dir.string()});
        CHECK(r.code == exit_solver);
        CHECK(r.err.find("did not converge") != std::string::npos);
    }
    SUBCASE("solve needs two users") {
        auto doc = two_users();
        doc["users"].push_back(doc["users"][0]);
        const auto r = call({.command = "solve", .config_path = write_config(dir, doc).string(),
                             .out_dir = dir.string()});
        CHECK(r.code == exit_config);
    }
}

TEST_CASE("curves: one row per weight and column") {
    const auto dir = scratch("curves");
    const auto cfg = write_config(dir, two_users());
    const auto r = call({.command = "curves", .config_path = cfg.string(), .out_dir = dir.string(),
                         .weights = {30, 0}, .trunc = 15});
    REQUIRE(r.code == exit_ok);
    const auto rows = lines(dir / "curves.csv");
    CHECK(rows[0] == "# schema=tspread.curves/1");
    CHECK(rows[1] == "w,q1,q2a,q2b");
    CHECK(rows.size() == 2 + 2 * 16);
    CHECK(rows[2].rfind("0,0,", 0) == 0);
    CHECK(rows.back().rfind("30,15,", 0) == 0);
}

TEST_CASE("simulate: records mirror the report and repeat byte for byte") {
    const auto dir = scratch("sim");
    auto doc = two_users();
    doc["dispatcher"] = "jsq";
    doc["stopping"] = short_stopping(5000);
    const auto cfg = write_config(dir, doc);
    const auto a = call({.command = "simulate", .config_path = cfg.string(), .out_dir = (dir / "a").string()});
    const auto b = call({.command = "simulate", .config_path = cfg.string(), .out_dir = (dir / "b").string()});
    CHECK(a.code == exit_target_missed);
    CHECK(b.code == exit_target_missed);
    CHECK(slurp(dir / "a" / "metrics.jsonl") == slurp(dir / "b" / "metrics.jsonl"));
    const auto rec = json::parse(lines(dir / "a" / "metrics.jsonl").at(0));
    for (const char* key : {"mean_delay_s", "delay_half_width_s", "rerouting_power_w", "power_half_width_w",
                            "reroute_rate_files_per_s", "mean_total_queue", "littles_law_delay_s", "slots",
                            "batches", "target_met"}) {
        CHECK(rec.contains(key));
    }
    CHECK(rec["dispatcher"] == "jsq");
    const auto c = call({.command = "simulate", .config_path = cfg.string(), .out_dir = (dir / "c").string(),
                         .seed = 9u});
    CHECK(slurp(dir / "a" / "metrics.jsonl") != slurp(dir / "c" / "metrics.jsonl"));

    // A reachable target exits 0.
    doc["stopping"] = {{"relative_half_width", 0.1}};
    doc["dispatcher"] = "none";
    const auto ok = call({.command = "simulate", .config_path = write_config(dir, doc).string(),
                          .out_dir = (dir / "d").string()});
    CHECK(ok.code == exit_ok);
    CHECK(json::parse(slurp(dir / "d" / "metrics.jsonl"))["target_met"] == true);
}

TEST_CASE("simulate: heuristic on four users reports the reroute matrix") {
    const auto dir = scratch("heur");
    json doc{{"users",
              {{{"distance_m", 70}, {"arrival_rate", 0.09}},
               {{"distance_m", 95}, {"arrival_rate", 0.11}},
               {{"distance_m", 120}, {"arrival_rate", 0.08}},
               {{"distance_m", 85}, {"arrival_rate", 0.1}}}},
             {"dispatcher", "heuristic"},
             {"stopping", short_stopping(5000)}};
    const auto r = call({.command = "simulate", .config_path = write_config(dir, doc).string(),
                         .out_dir = dir.string()});
    CHECK(r.code == exit_target_missed);
    const auto rec = json::parse(slurp(dir / "metrics.jsonl"));
    REQUIRE(rec["reroute_rate_files_per_s"].size() == 4);
    double total = 0.0;
    for (const auto& row : rec["reroute_rate_files_per_s"]) {
        CHECK(row.size() == 4);
        for (const auto& x : row) total += x.get<double>();
    }
    CHECK(total > 0.0);
}

TEST_CASE("simulate: overload exits 3") {
    const auto dir = scratch("unstable");
    json doc{{"users", {{{"distance_m", 100}, {"arrival_rate", 0.7}}}}};
    const auto r = call({.command = "simulate", .config_path = write_config(dir, doc).string(),
                         .out_dir = dir.string()});
    CHECK(r.code == exit_instability);
    CHECK(r.err.find("offered load") != std::string::npos);
}

TEST_CASE("sweep: sorted tradeoff rows") {
    const auto dir = scratch("sweep");
    auto doc = two_users();
    doc["dispatcher"] = "optimal";
    doc["stopping"] = short_stopping(1e4);
    const auto r = call({.command = "sweep", .config_path = write_config(dir, doc).string(), .out_dir = dir.string(),
                         .weights = {1e6, 0}});
    CHECK(r.code == exit_target_missed);
    const auto rows = lines(dir / "tradeoff.csv");
    CHECK(rows[0] == "# schema=tspread.tradeoff/1");
    CHECK(rows[1] == "w,delay_s,delay_hw,power_W,power_hw");
    REQUIRE(rows.size() == 4);
    double w0, d0, h0, p0, ph0, w1, d1, h1, p1, ph1;
    REQUIRE(std::sscanf(rows[2].c_str(), "%lf,%lf,%lf,%lf,%lf", &w0, &d0, &h0, &p0, &ph0) == 5);
    REQUIRE(std::sscanf(rows[3].c_str(), "%lf,%lf,%lf,%lf,%lf", &w1, &d1, &h1, &p1, &ph1) == 5);
    CHECK(w0 == 0.0);
    CHECK(w1 == 1e6);
    CHECK(p1 <= 0.01 * p0);
    CHECK(lines(dir / "metrics.jsonl").size() == 2);
    const auto none = call({.command = "sweep", .config_path = write_config(dir, doc).string(),
                            .out_dir = dir.string()});
    CHECK(none.code == exit_config);
}

TEST_CASE("verify: clean, fault-injected and asymmetric") {
    const auto dir = scratch("verify");
    auto doc = two_users();
    doc["scheduler"] = "lcq";
    doc["costs"]["weight"] = 5;
    doc["verify"] = {{"on_off", {{"p_on", 0.6}}}, {"truncation", 30}};
    const auto cfg = write_config(dir, doc);

    auto clean = call({.command = "verify", .config_path = cfg.string(), .out_dir = dir.string()});
    CHECK(clean.code == exit_ok);
    auto report = json::parse(slurp(dir / "verify.json"));
    std::map<std::string, std::string> status;
    for (const auto& c : report["checks"]) status[c["check"]] = c["status"];
    for (const char* name : {"transition_sums", "solve", "deterministic_optimality", "delta_monotonicity",
                             "gain_reference_invariance", "contiguous_regions"}) {
        CHECK(status[name] == "PASS");
    }

    auto faulty = call({.command = "verify", .config_path = cfg.string(), .out_dir = dir.string(),
                        .inject_fault = "negative-rate"});
    CHECK(faulty.code == exit_verification);
    report = json::parse(slurp(dir / "verify.json"));
    CHECK(report["checks"][0]["check"] == "transition_sums");
    CHECK(report["checks"][0]["status"] == "FAIL");

    auto asym = two_users();
    asym["costs"]["weight"] = {{0, 1}, {10, 0}};
    asym["verify"] = {{"truncation", 12}};
    const auto skipped = call({.command = "verify", .config_path = write_config(dir, asym).string(),
                               .out_dir = dir.string()});
    CHECK(skipped.code == exit_ok);
    report = json::parse(slurp(dir / "verify.json"));
    bool found = false;
    for (const auto& c : report["checks"]) {
        if (c["check"] != "delta_monotonicity") continue;
        found = true;
        CHECK(c["status"] == "SKIP");
        CHECK(c["detail"].get<std::string>().find("symmetric") != std::string::npos);
    }
    CHECK(found);
}
