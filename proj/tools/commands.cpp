#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "config.hpp"
#include "tspread/mdp.hpp"
#include "tspread/structure.hpp"

#ifndef TSPREAD_VERSION
#define TSPREAD_VERSION "0.0.0"
#endif

namespace tspread::app {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kPolicySchema = "tspread.policy/1";
constexpr const char* kCurveSchema = "tspread.switching/1";
constexpr const char* kCurvesSchema = "tspread.curves/1";
constexpr const char* kTradeoffSchema = "tspread.tradeoff/1";

class VerificationFailed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TargetMissed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void set_weight(ScenarioConfig& c, double w) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("--weight: must be finite and >= 0");
    for (std::size_t a = 0; a < c.num_users(); ++a) {
        for (std::size_t b = 0; b < c.num_users(); ++b) c.costs.weights(a, b) = a == b ? 0.0 : w;
    }
}

/// Config file plus command-line overrides, validated again after the overrides.
AppConfig resolve(const CommandOptions& o) {
    if (o.config_path.empty()) throw ConfigError("--config: required");
    AppConfig app = load_config(o.config_path);
    ScenarioConfig& c = app.scenario;
    if (o.seed) c.seed = *o.seed;
    if (o.states) c.channel.num_states = *o.states;
    if (o.trunc) {
        if (*o.trunc < 2) throw ConfigError("--trunc: must be >= 2");
        c.dp_truncation = *o.trunc;
        app.verify.truncation = *o.trunc;
    }
    if (o.dispatcher) {
        try {
            c.dispatcher = dispatcher_from_string(*o.dispatcher);
        } catch (const InvalidInput& e) {
            throw ConfigError(std::string("--dispatcher: ") + e.what());
        }
    }
    if (o.weight) set_weight(c, *o.weight);
    if (!o.weights.empty()) app.weights = o.weights;
    try {
        c.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
    return app;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error(path.string() + ": cannot write");
    f << std::setprecision(10);
    return f;
}

struct Manifest {
    std::string command;
    std::string config_path;
    std::uint64_t seed = 0;
    std::vector<std::string> outputs;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void write(const fs::path& dir) const {
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const json doc{{"command", command},     {"config", config_path},  {"seed", seed},
                       {"outputs", outputs},     {"tool_version", version()}, {"wall_clock_s", wall}};
        auto f = open_out(dir / "manifest.json");
        f << doc.dump(2) << "\n";
    }
};

int two_user_truncation(const ScenarioConfig& c) { return c.dp_truncation > 0 ? c.dp_truncation : 40; }

void require_two_users(const ScenarioConfig& c, const std::string& command) {
    if (c.num_users() != 2) throw ConfigError("users: " + command + " needs exactly two users");
}

struct SolvedPolicy {
    MdpSolution solution;
    PolicyMetrics metrics;
    double power_w = 0.0;
};

SolvedPolicy solve_scenario(const ScenarioConfig& c) {
    const auto problem = dispatch_problem(c, two_user_truncation(c));
    SolvedPolicy out{solve(problem, c.solver), {}, 0.0};
    out.metrics = evaluate_policy(problem, out.solution);
    for (std::size_t j = 0; j < c.num_users(); ++j) {
        for (std::size_t i = 0; i < c.num_users(); ++i) {
            if (i != j) out.power_w += out.metrics.reroute_rate(j, i) * c.costs.phi(j, i);
        }
    }
    return out;
}

int cmd_solve(const CommandOptions& o, std::ostream& out) {
    const auto app = resolve(o);
    const auto& c = app.scenario;
    require_two_users(c, "solve");
    Manifest manifest{"solve", o.config_path, c.seed, {}};
    const auto solved = solve_scenario(c);
    const auto& sol = solved.solution;
    const fs::path dir(o.out_dir);

    {
        auto f = open_out(dir / "policy.csv");
        f << "# schema=" << kPolicySchema << "\n" << "q1,q2,action\n";
        for (std::size_t s = 0; s < sol.space.size(); ++s) {
            const auto q = sol.space.decode(s);
            f << q[0] << "," << q[1] << "," << to_string(two_user_action(sol, s)) << "\n";
        }
    }
    const auto curves = extract_switching_curves(sol);
    {
        auto f = open_out(dir / "switching_curve.csv");
        f << "# schema=" << kCurveSchema << "\n" << "q1,q2a,q2b\n";
        for (std::size_t q1 = 0; q1 < curves.q2a.size(); ++q1) {
            f << q1 << "," << curves.q2a[q1] << "," << curves.q2b[q1] << "\n";
        }
    }
    const auto regions = count_regions(sol);
    const json summary{
        {"gain", sol.gain},
        {"iterations", sol.iterations},
        {"residual_span", sol.residual_span},
        {"truncation", sol.space.limit(0)},
        {"mean_delay_s", solved.metrics.mean_delay_s},
        {"rerouting_power_w", solved.power_w},
        {"states_none", regions.none},
        {"states_u1_to_u2", regions.u1_to_u2},
        {"states_u2_to_u1", regions.u2_to_u1},
        {"contiguous", curves.all_contiguous()},
    };
    {
        auto f = open_out(dir / "solution.json");
        f << summary.dump(2) << "\n";
    }
    manifest.outputs = {"policy.csv", "switching_curve.csv", "solution.json"};
    manifest.write(dir);
    out << "solved " << sol.space.size() << " states in " << sol.iterations << " iterations: gain " << sol.gain
        << ", mean delay " << solved.metrics.mean_delay_s << " s, rerouting power " << solved.power_w << " W\n";
    return exit_ok;
}

std::vector<double> weight_list(const AppConfig& app, const CommandOptions& o) {
    if (!app.weights.empty()) return app.weights;
    if (o.weight) return {*o.weight};
    throw ConfigError("--weights: no weights given on the command line or in the config");
}

int cmd_curves(const CommandOptions& o, std::ostream& out) {
    const auto app = resolve(o);
    require_two_users(app.scenario, "curves");
    auto weights = weight_list(app, o);
    std::sort(weights.begin(), weights.end());
    Manifest manifest{"curves", o.config_path, app.scenario.seed, {"curves.csv"}};
    const fs::path dir(o.out_dir);
    auto f = open_out(dir / "curves.csv");
    f << "# schema=" << kCurvesSchema << "\n" << "w,q1,q2a,q2b\n";
    for (double w : weights) {
        ScenarioConfig c = app.scenario;
        set_weight(c, w);
        const auto solved = solve_scenario(c);
        const auto curves = extract_switching_curves(solved.solution);
        for (std::size_t q1 = 0; q1 < curves.q2a.size(); ++q1) {
            f << w << "," << q1 << "," << curves.q2a[q1] << "," << curves.q2b[q1] << "\n";
        }
        out << "w = " << w << ": gain " << solved.solution.gain << ", mean delay " << solved.metrics.mean_delay_s
            << " s, rerouting power " << solved.power_w << " W\n";
    }
    f.close();
    manifest.write(dir);
    return exit_ok;
}

void print_report(std::ostream& out, const SimReport& r) {
    out << "mean delay " << r.mean_delay_s << " +- " << r.delay_half_width << " s (Little " << r.littles_law_delay_s
        << " s), rerouting power " << r.rerouting_power_w << " +- " << r.power_half_width << " W, " << r.batches
        << " batches, " << r.slots << " slots" << (r.target_met ? "" : ", CI target NOT met") << "\n";
}

int cmd_simulate(const CommandOptions& o, std::ostream& out) {
    const auto app = resolve(o);
    Manifest manifest{"simulate", o.config_path, app.scenario.seed, {"metrics.jsonl"}};
    const auto report = run(app.scenario);
    const fs::path dir(o.out_dir);
    {
        auto f = open_out(dir / "metrics.jsonl");
        json rec = to_json(report);
        rec["dispatcher"] = to_string(app.scenario.dispatcher);
        rec["seed"] = app.scenario.seed;
        f << rec.dump() << "\n";
    }
    manifest.write(dir);
    print_report(out, report);
    if (!report.target_met) throw TargetMissed("simulation stopped at max_sim_time_s before reaching the CI target");
    return exit_ok;
}

int cmd_sweep(const CommandOptions& o, std::ostream& out) {
    const auto app = resolve(o);
    const auto weights = weight_list(app, o);
    Manifest manifest{"sweep", o.config_path, app.scenario.seed, {"tradeoff.csv", "metrics.jsonl"}};
    const auto rows = measure_tradeoff(app.scenario, weights);
    const fs::path dir(o.out_dir);
    auto csv = open_out(dir / "tradeoff.csv");
    auto jsonl = open_out(dir / "metrics.jsonl");
    csv << "# schema=" << kTradeoffSchema << "\n" << "w,delay_s,delay_hw,power_W,power_hw\n";
    bool all_met = true;
    for (const auto& row : rows) {
        const auto& r = row.report;
        csv << row.weight << "," << r.mean_delay_s << "," << r.delay_half_width << "," << r.rerouting_power_w << ","
            << r.power_half_width << "\n";
        json rec = to_json(r);
        rec["weight"] = row.weight;
        rec["dispatcher"] = to_string(app.scenario.dispatcher);
        rec["seed"] = app.scenario.seed;
        jsonl << rec.dump() << "\n";
        out << "w = " << row.weight << ": ";
        print_report(out, r);
        all_met = all_met && r.target_met;
    }
    csv.close();
    jsonl.close();
    manifest.write(dir);
    if (!all_met) throw TargetMissed("at least one sweep row stopped before reaching the CI target");
    return exit_ok;
}

struct CheckLine {
    std::string name;
    std::string status;   // PASS, FAIL or SKIP
    double margin;
    std::string detail;
};

int cmd_verify(const CommandOptions& o, std::ostream& out) {
    const auto app = resolve(o);
    const auto& c = app.scenario;
    const auto& v = app.verify;
    Manifest manifest{"verify", o.config_path, v.seed, {"verify.json"}};
    if (!o.inject_fault.empty() && o.inject_fault != "negative-rate") {
        throw ConfigError("--inject-fault: only \"negative-rate\" is supported");
    }

    const auto problem_for = [&]() {
        if (v.on_off) {
            require_two_users(c, "verify with on_off");
            if (c.users[0].arrival_rate != c.users[1].arrival_rate) {
                throw ConfigError("verify.on_off: both users need the same arrival_rate");
            }
            return make_onoff_lcq_problem(v.p_on, c.users[0].arrival_rate, c.costs.eta(0, 1), c.costs.phi(0, 1),
                                          c.costs.weights(0, 1), v.truncation);
        }
        return dispatch_problem(c, v.truncation);
    };
    MdpProblem problem = problem_for();
    if (o.inject_fault == "negative-rate") {
        // One interior state gets a negative service rate: its transition row leaves [0, 1].
        std::vector<int> q(problem.num_users(), 1);
        problem.poke_rate(problem.space().index(q), 0, -problem.max_total_rate());
    }

    std::vector<CheckLine> lines;
    auto guarded = [&](const std::string& name, auto&& body) {
        try {
            lines.push_back(body());
        } catch (const std::exception& e) {
            lines.push_back({name, "FAIL", NAN, e.what()});
        }
    };

    guarded("transition_sums", [&] {
        const auto t = check_transitions(problem);
        std::ostringstream d;
        d << "max row error " << t.max_row_error << ", min probability " << t.min_probability << " at state "
          << t.worst_state;
        return CheckLine{"transition_sums", t.ok ? "PASS" : "FAIL", t.max_row_error, d.str()};
    });

    std::optional<MdpSolution> solution;
    guarded("solve", [&] {
        solution = solve(problem, c.solver);
        std::ostringstream d;
        d << solution->iterations << " iterations, gain " << solution->gain;
        return CheckLine{"solve", "PASS", solution->residual_span, d.str()};
    });

    if (solution) {
        guarded("deterministic_optimality", [&] {
            Rng rng(v.seed);
            const auto r = check_deterministic_optimality(problem, solution->h, v.states, v.samples, rng);
            std::ostringstream d;
            d << r.states_checked << " states x " << v.samples << " randomized dispatch matrices";
            return CheckLine{"deterministic_optimality", r.ok ? "PASS" : "FAIL", r.worst_margin, d.str()};
        });
        guarded("policy_transition_sums", [&] {
            const auto t = check_transitions(problem, &*solution);
            return CheckLine{"policy_transition_sums", t.ok ? "PASS" : "FAIL", t.max_row_error, "under the solved policy"};
        });
        if (problem.num_users() == 2) {
            guarded("contiguous_regions", [&] {
                const auto curves = extract_switching_curves(*solution);
                const auto bad = std::count(curves.contiguous.begin(), curves.contiguous.end(), false);
                return CheckLine{"contiguous_regions", bad == 0 ? "PASS" : "FAIL", static_cast<double>(bad),
                                 std::to_string(bad) + " columns with split action regions"};
            });
        }
    }

    const auto rates = problem.arrival_rates();
    std::string skip;
    if (problem.num_users() != 2) {
        skip = "needs exactly two users";
    } else if (!problem.costs().homogeneous()) {
        skip = "needs a symmetric weight/eta/phi matrix (all off-diagonal entries equal)";
    } else if (rates[0] != rates[1]) {
        skip = "needs equal arrival rates";
    }
    if (!skip.empty()) {
        lines.push_back({"delta_monotonicity", "SKIP", NAN, "precondition unmet: " + skip});
    } else {
        guarded("delta_monotonicity", [&] {
            DeltaOptions delta;
            delta.tolerance = c.solver.tolerance;
            delta.max_iterations = c.solver.max_iterations;
            const auto r = verify_delta_monotonicity(problem, delta);
            double worst = INFINITY;
            for (double m : r.worst_interior_margin) worst = std::min(worst, m);
            std::ostringstream d;
            d << r.iterations << " iterations, " << r.interior_violations << " interior violations, "
              << r.boundary_violations << " at the box edge (excluded)";
            return CheckLine{"delta_monotonicity", r.monotone() && r.converged ? "PASS" : "FAIL", worst, d.str()};
        });
    }

    guarded("gain_reference_invariance", [&] {
        const auto g = check_gain_reference(problem, c.solver);
        std::ostringstream d;
        d << "gain " << g.gain_zero_ref << " vs " << g.gain_shifted_ref;
        return CheckLine{"gain_reference_invariance", g.ok ? "PASS" : "FAIL", g.shift, d.str()};
    });

    json report = json::array();
    bool failed = false;
    for (const auto& l : lines) {
        out << std::left << std::setw(5) << l.status << std::setw(28) << l.name << " margin " << l.margin << "  "
            << l.detail << "\n";
        report.push_back({{"check", l.name},
                          {"status", l.status},
                          {"margin", std::isnan(l.margin) ? json(nullptr) : json(l.margin)},
                          {"detail", l.detail}});
        failed = failed || l.status == "FAIL";
    }
    const fs::path dir(o.out_dir);
    {
        auto f = open_out(dir / "verify.json");
        f << json{{"fault_injected", o.inject_fault}, {"checks", report}}.dump(2) << "\n";
    }
    manifest.write(dir);
    if (failed) throw VerificationFailed("one or more verification checks failed");
    return exit_ok;
}

}  // namespace

std::string version() { return TSPREAD_VERSION; }

int run_command(const CommandOptions& o, std::ostream& out, std::ostream& err) {
    try {
        if (!o.out_dir.empty()) fs::create_directories(o.out_dir);
        if (o.command == "solve") return cmd_solve(o, out);
        if (o.command == "simulate") return cmd_simulate(o, out);
        if (o.command == "sweep") return cmd_sweep(o, out);
        if (o.command == "curves") return cmd_curves(o, out);
        if (o.command == "verify") return cmd_verify(o, out);
        err << "error: unknown command '" << o.command << "'\n";
        return exit_config;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const InvalidInput& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const InstabilityError& e) {
        err << "instability: " << e.what() << "\n";
        return exit_instability;
    } catch (const SolverError& e) {
        err << "solver failure: " << e.what() << " (last span " << e.last_span << " after " << e.iterations
            << " iterations)\n";
        return exit_solver;
    } catch (const VerificationFailed& e) {
        err << "verification failed: " << e.what() << "\n";
        return exit_verification;
    } catch (const TargetMissed& e) {
        err << "warning: " << e.what() << "\n";
        return exit_target_missed;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_failure;
    }
}

}  // namespace tspread::app
