#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace tspread::app {

/// Process exit codes.
enum ExitCode : int {
    exit_ok = 0,
    exit_failure = 1,          // I/O and other unexpected errors
    exit_config = 2,
    exit_instability = 3,
    exit_solver = 4,
    exit_verification = 5,
    exit_target_missed = 6,    // simulation hit max_sim_time_s before the CI target
};

struct CommandOptions {
    std::string command;       // solve | simulate | sweep | curves | verify
    std::string config_path;
    std::string out_dir = ".";
    std::optional<double> weight;
    std::vector<double> weights;
    std::optional<std::uint64_t> seed;
    std::optional<int> trunc;
    std::optional<int> states;
    std::optional<std::string> dispatcher;
    std::string inject_fault;  // verify only: "negative-rate"
};

/// Runs one command; human-readable progress goes to `out`, diagnostics to `err`.
int run_command(const CommandOptions& options, std::ostream& out, std::ostream& err);

std::string version();

}  // namespace tspread::app
