#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tspread/channel.hpp"
#include "tspread/mdp.hpp"
#include "tspread/scheduler.hpp"

namespace tspread {

enum class Dispatcher { none, jsq, optimal, heuristic, lower_bound };

std::string to_string(Dispatcher d);
Dispatcher dispatcher_from_string(const std::string& name);

struct UserConfig {
    double distance_m = 100.0;
    double arrival_rate = 0.2;      // files/s; 0 for a pure relay
    double mean_file_bytes = 1e6;
};

struct StoppingRule {
    double relative_half_width = 0.02;
    double confidence = 0.95;
    double power_floor_w = 1e-3;     // power half-width never needs to go below this
    int min_batches = 32;
    double initial_batch_arrivals = 1000;  // first batch length, in expected arrivals
    double warmup_fraction = 0.1;          // of the initial batching horizon
    double max_sim_time_s = 2e7;
};

struct ScenarioConfig {
    std::vector<UserConfig> users;
    ChannelConfig channel;
    FadingProcess fading;
    SchedulerPolicy scheduler;
    Dispatcher dispatcher = Dispatcher::none;
    CostModel costs;                  // empty: eta 0, phi 1 J, w 0
    bool local_link_congested = false;
    std::uint64_t seed = 1;
    StoppingRule stopping;
    int dp_truncation = 0;            // 0: 40 for two users, 20 otherwise
    int heuristic_truncation = 30;
    SolveOptions solver;              // tolerance and iteration cap for every DP solve
    /// Partition of users into clusters; empty means a single cluster.
    std::vector<std::vector<int>> clusters;
    long alpha_window_slots = 100000;
    long alpha_check_slots = 10000;
    double alpha_hysteresis = 0.05;
    /// Instability: backlog above this many files, or growth over this many consecutive batches.
    long instability_backlog = 20000;
    int instability_batches = 16;

    std::size_t num_users() const { return users.size(); }
    double total_arrival_rate() const;
    /// Fills defaults (costs, scheduler file sizes) and checks invariants.
    void validate();
};

struct SimReport {
    double mean_delay_s = 0.0;
    double delay_half_width = 0.0;
    double rerouting_power_w = 0.0;
    double power_half_width = 0.0;
    Matrix reroute_rate;              // files/s, row = owner, column = carrier
    double mean_total_queue = 0.0;
    double littles_law_delay_s = 0.0;
    long long slots = 0;
    int batches = 0;
    double batch_length_s = 0.0;
    double measured_time_s = 0.0;
    double energy_j = 0.0;            // rerouting energy charged in the measured window
    long long files_generated = 0;
    long long files_completed = 0;
    long long files_in_system = 0;
    std::vector<long long> generated_by_owner;
    std::vector<long long> completed_by_owner;
    std::vector<long long> in_system_by_owner;
    std::vector<double> alpha;        // last cluster time shares (cluster mode)
    bool target_met = false;

    bool operator==(const SimReport&) const = default;
};

class InstabilityError : public std::runtime_error {
public:
    InstabilityError(const std::string& what, double offered_load)
        : std::runtime_error(what), offered_load(offered_load) {}
    double offered_load;
};

SimReport run(ScenarioConfig config);

/// The whole-cell dispatching MDP of a scenario (every user in one group) on a box of
/// `truncation` files per queue; 0 picks the simulator's default box.
MdpProblem dispatch_problem(ScenarioConfig config, int truncation = 0);

/// Least remaining work (seconds) among `allowed`; ties keep the owner, then the lowest index.
std::size_t jsq_dispatch(std::span<const double> workloads, std::size_t owner,
                         std::span<const bool> allowed = {});

/// BS-side state of the lower-bound scheduler.
struct LowerBoundState {
    double theta_bs = 0.0;   // bits; signed ledger of data rerouted by the BS
};

/// One slot decision. step is 4, 8 or 12 when the modified rule fires, 17 for the base scheduler.
struct LowerBoundDecision {
    int step = 17;
    std::size_t queue = 0;    // queue drained
    std::size_t via = 0;      // user whose channel carries the data
};

/// `rates` are this slot's instantaneous rates, `hol_owner[i]` the owner of queue i's
/// head-of-line file (-1 if empty).
LowerBoundDecision lower_bound_schedule(std::span<const double> rates, std::span<const int> q,
                                        std::span<const int> hol_owner, const LowerBoundState& state);
/// Ledger update after `bits` were served under `decision`.
void record_lower_bound_service(const LowerBoundDecision& decision, double bits, LowerBoundState& state);

struct TradeoffRow {
    double weight;
    SimReport report;
};

/// One run per weight (all off-diagonal w set to the weight), sorted by weight.
std::vector<TradeoffRow> measure_tradeoff(const ScenarioConfig& config, std::vector<double> weights);

}  // namespace tspread
