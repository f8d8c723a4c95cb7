#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tspread/common.hpp"
#include "tspread/scheduler.hpp"

namespace tspread {

/// Mixed-radix indexing of the truncated queue box {0..T_1} x ... x {0..T_N}.
class StateSpace {
public:
    StateSpace() = default;
    explicit StateSpace(std::vector<int> truncation);

    std::size_t size() const { return size_; }
    std::size_t num_users() const { return truncation_.size(); }
    int limit(std::size_t user) const { return truncation_[user]; }
    std::span<const int> truncation() const { return truncation_; }
    std::size_t stride(std::size_t user) const { return strides_[user]; }

    bool contains(std::span<const int> q) const;
    std::size_t index(std::span<const int> q) const;
    /// Index of q with every coordinate clamped into the box.
    std::size_t clamped_index(std::span<const int> q) const;
    void decode(std::size_t index, std::span<int> q) const;
    std::vector<int> decode(std::size_t index) const;

private:
    std::vector<int> truncation_;
    std::vector<std::size_t> strides_;
    std::size_t size_ = 0;
};

/// Per-file forwarding delay eta_j^i (s), rerouting energy phi_j^i (J) and weights w_j^i.
/// Row = source (owner) j, column = target i. An infinite phi marks an infeasible pair.
struct CostModel {
    Matrix eta;
    Matrix phi;
    Matrix weights;

    static CostModel uniform(std::size_t n, double eta, double phi, double weight);

    std::size_t num_users() const { return phi.size(); }
    /// eta + w * phi for routing j's file through i; +inf for infeasible pairs.
    double penalty(std::size_t from, std::size_t to) const;
    void validate(std::size_t n) const;
    /// All off-diagonal entries equal (the setting of the monotonicity lemma).
    bool homogeneous() const;
};

/// Deterministic dispatching action: target[j] is the queue that receives user j's arrivals.
using Action = std::vector<int>;

/// Uniformized average-cost dispatching problem on a truncated box.
/// Rates are in files/s. A full queue accepts no files: its owner's arrivals must be rerouted
/// to a queue with room, and only when every admissible queue is full does the arrival become
/// a self-transition.
class MdpProblem {
public:
    using RateFn = std::function<void(std::span<const int> q, std::span<double> mu_files_per_s)>;

    /// mu_i(q) = table(q)_i / file_bits_i.
    static MdpProblem build(std::vector<double> arrival_rates, const ServiceRateTable& table,
                            std::span<const double> file_bits, CostModel costs, std::vector<int> truncation);
    static MdpProblem from_rates(std::vector<double> arrival_rates, std::vector<int> truncation,
                                 const RateFn& rates, CostModel costs);

    std::size_t num_users() const { return arrival_rates_.size(); }
    const StateSpace& space() const { return space_; }
    std::span<const double> arrival_rates() const { return arrival_rates_; }
    double total_arrival_rate() const { return total_arrival_; }
    const CostModel& costs() const { return costs_; }
    double penalty(std::size_t from, std::size_t to) const { return penalty_[from * num_users() + to]; }

    std::span<const double> rates(std::size_t state) const {
        return {rates_.data() + state * num_users(), num_users()};
    }
    double total_rate(std::size_t state) const { return total_rate_[state]; }
    double max_total_rate() const { return max_total_rate_; }

    double uniformization_rate() const { return uniformization_; }
    /// Must be >= |lambda| + max_q |mu(q)|.
    void set_uniformization_rate(double rate);

    /// Neighbor indices with the boundary closure applied.
    std::size_t up(std::size_t state, std::size_t user) const { return up_[state * num_users() + user]; }
    std::size_t down(std::size_t state, std::size_t user) const { return down_[state * num_users() + user]; }
    int total_queue(std::size_t state) const { return total_queue_[state]; }

    /// Admissible targets: queues with room in the box reachable at finite penalty. The own
    /// queue is also admissible when no such queue exists (the arrival is then a self-transition).
    bool can_route(std::size_t state, std::size_t from, std::size_t to) const {
        if (from == to) return own_allowed_[state * num_users() + from] != 0;
        return up(state, to) != state && penalty(from, to) < std::numeric_limits<double>::infinity();
    }

    /// |lambda| >= sum of rates with every queue at the box edge.
    bool stability_advisory() const;

    /// Test hook used for fault injection.
    void poke_rate(std::size_t state, std::size_t user, double value);

private:
    MdpProblem() = default;
    void finalize();

    std::vector<double> arrival_rates_;
    double total_arrival_ = 0.0;
    StateSpace space_;
    std::vector<double> rates_;
    std::vector<double> total_rate_;
    double max_total_rate_ = 0.0;
    CostModel costs_;
    std::vector<double> penalty_;
    double uniformization_ = 0.0;
    std::vector<std::size_t> up_;
    std::vector<std::size_t> down_;
    std::vector<int> total_queue_;
    std::vector<std::uint8_t> own_allowed_;
};

/// lambda'_i = sum_j [target_j == i] lambda_j.
std::vector<double> arrival_rates_under(std::span<const int> action, std::span<const double> arrival_rates);

/// Per-stage cost |q|/|lambda| + sum_j (lambda_j / phi_u) * penalty(j, target_j).
double stage_cost(std::span<const int> q, std::span<const int> action, const MdpProblem& problem);

struct Backup {
    double value;
    Action action;
};

/// One application of the Bellman operator at `state` (returns T h(q), not T h(q) - h(q)).
/// The per-source minimization keeps the own queue on ties, then the lowest target.
Backup bellman_backup(std::span<const double> h, const MdpProblem& problem, std::size_t state);

/// T^sigma h(q) for a row-stochastic dispatch matrix sigma (row = source).
double randomized_backup(std::span<const double> h, const MdpProblem& problem, std::size_t state,
                         const Matrix& sigma);

/// One Jacobi sweep: out[s] = T h(s). Returns (min, max) of T h - h.
std::pair<double, double> bellman_sweep(const MdpProblem& problem, std::span<const double> h, std::span<double> out);

struct SolveOptions {
    double tolerance = 1e-8;
    long max_iterations = 200'000;
    std::vector<int> reference;       // empty: all zeros
    std::vector<double> initial_h;    // empty: zeros
};

struct MdpSolution {
    StateSpace space;
    double gain = 0.0;                 // J*, cost per uniformized stage
    double uniformization_rate = 0.0;
    std::vector<double> h;             // h(reference) == 0
    std::vector<std::int8_t> policy;   // policy[state * N + j] = target of source j
    long iterations = 0;
    double residual_span = 0.0;

    std::size_t num_users() const { return space.num_users(); }
    int target(std::size_t state, std::size_t source) const {
        return policy[state * num_users() + source];
    }
    /// Action at q, clamped into the solved box.
    Action action(std::span<const int> q) const;
};

class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, double last_span, long iterations)
        : std::runtime_error(what), last_span(last_span), iterations(iterations) {}
    double last_span;
    long iterations;
};

/// Relative value iteration (Jacobi sweeps) stopped on the span seminorm of T h - h.
MdpSolution solve(const MdpProblem& problem, const SolveOptions& options = {});

/// Long-run behaviour of a fixed policy, from the stationary law of the uniformized chain.
struct PolicyMetrics {
    double mean_total_queue = 0.0;
    double mean_delay_s = 0.0;      // E|Q| / |lambda|
    Matrix reroute_rate;            // files/s from source j to target i
    double reroute_penalty_rate = 0.0;
};

PolicyMetrics evaluate_policy(const MdpProblem& problem, const MdpSolution& solution,
                              double tolerance = 1e-12, long max_iterations = 1'000'000);

/// Worst-case check of the uniformized transition law under `solution`'s policy
/// (or no rerouting when solution is null): every probability in [0, 1] and rows sum to 1.
struct TransitionCheck {
    double min_probability = 1.0;
    double max_row_error = 0.0;
    std::size_t worst_state = 0;
    bool ok = true;
};

TransitionCheck check_transitions(const MdpProblem& problem, const MdpSolution* solution = nullptr);

}  // namespace tspread
