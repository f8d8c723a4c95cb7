#pragma once

#include <atomic>
#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <shared_mutex>
#include <span>
#include <vector>

#include "tspread/mdp.hpp"
#include "tspread/scheduler.hpp"

namespace tspread {

/// Index of the user with the least work q_l / mu_l(e_l); ties go to the lowest index.
/// `solo_rates` are in files/s, so the work is in seconds.
std::size_t least_workload_user(std::span<const int> q, std::span<const double> solo_rates);

/// Static inputs of the N-user heuristic. Rates come from a mask-indexed (queue-unaware) table.
class HeuristicModel {
public:
    static HeuristicModel build(std::vector<double> arrival_rates, const ServiceRateTable& table,
                                std::vector<double> file_bits, CostModel costs);

    std::size_t num_users() const { return arrival_rates_.size(); }
    std::span<const double> arrival_rates() const { return arrival_rates_; }
    const CostModel& costs() const { return costs_; }
    /// mu_l at the non-empty set `mask`, in files/s.
    double rate(std::size_t user, std::uint32_t mask) const;
    std::span<const double> solo_rates() const { return solo_; }

private:
    std::vector<double> arrival_rates_;
    std::vector<double> file_bits_;
    ServiceRateTable table_;
    CostModel costs_;
    std::vector<double> solo_;
};

/// Two-user problem between the combined user (1) and the least-loaded user (2).
struct ReducedProblem {
    double lambda[2] = {0, 0};
    double mu1_alone = 0;  // combined queue busy, user 2 idle
    double mu1_both = 0;
    double mu2_alone = 0;
    double mu2_both = 0;
    double phi[2] = {0, 0};     // phi[0]: combined -> 2, phi[1]: 2 -> combined
    double weight[2] = {0, 0};
    double eta[2] = {0, 0};
};

/// Rates snapped to a 1e-4 relative log grid; costs kept bit-exact. No symmetry canonicalization.
struct CacheKey {
    std::vector<std::int64_t> rates;
    std::vector<std::uint64_t> costs;
    int truncation = 0;
    auto operator<=>(const CacheKey&) const = default;
};

CacheKey cache_key(const ReducedProblem& problem, int truncation);

/// The reduced problem the key stands for (rates at the grid points).
ReducedProblem representative(const CacheKey& key);

MdpProblem make_reduced_mdp(const ReducedProblem& problem, int truncation);

/// Solutions of reduced problems keyed by CacheKey. Readers share, insertion is exclusive.
class DpCache {
public:
    explicit DpCache(int truncation = 30, SolveOptions options = {});

    /// Solves the key's representative problem on a miss.
    std::shared_ptr<const MdpSolution> get(const ReducedProblem& problem);

    int truncation() const { return truncation_; }
    std::size_t size() const;
    std::size_t hits() const { return hits_.load(); }
    std::size_t misses() const { return misses_.load(); }

private:
    int truncation_;
    SolveOptions options_;
    mutable std::shared_mutex mutex_;
    std::map<CacheKey, std::shared_ptr<const MdpSolution>> entries_;
    std::atomic<std::size_t> hits_{0};
    std::atomic<std::size_t> misses_{0};
};

struct HeuristicDecision {
    std::size_t target = 0;
    int evaluations = 0;   // reduced problems consulted
};

/// Dispatching decision for a new arrival at user i.
HeuristicDecision dispatch(std::size_t i, std::span<const int> q, const HeuristicModel& model, DpCache& cache);

}  // namespace tspread
