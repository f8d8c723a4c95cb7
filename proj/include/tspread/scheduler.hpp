#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tspread/channel.hpp"
#include "tspread/common.hpp"

namespace tspread {

enum class SchedulerKind { greedy, log_rule, lcq };

std::string to_string(SchedulerKind kind);
SchedulerKind scheduler_kind_from_string(const std::string& name);

/// BS scheduling rule. Ties are always split uniformly among maximizers.
struct SchedulerPolicy {
    SchedulerKind kind = SchedulerKind::greedy;
    double log_rule_b = 1.0;
    std::vector<double> log_rule_a;  // empty: 1 for every user
    bool log_rule_argmin = false;    // literal "arg min" reading of the log rule
    std::vector<double> file_bits;   // mean file size per user, LCQ workload; empty: equal sizes

    bool queue_aware() const { return kind != SchedulerKind::greedy; }
    void validate(std::size_t num_users) const;
};

/// Selection probabilities xi_i(q, c). `c` holds per-user channel state indices.
std::vector<double> select(const SchedulerPolicy& policy, std::span<const int> q, std::span<const int> c,
                           std::span<const ChannelModel> models);

/// Allocation-free variant; `out` must have one slot per user.
void select_into(const SchedulerPolicy& policy, std::span<const int> q, std::span<const int> c,
                 std::span<const ChannelModel> models, std::span<double> out);

struct RateOptions {
    std::size_t enumeration_limit = std::size_t{1} << 20;  // max K^N enumerated exactly
    std::size_t mc_samples = 200000;
    std::uint64_t mc_seed = 0x5eed;
};

struct RateEstimate {
    std::vector<double> rates;      // bits/s per user
    std::vector<double> std_error;  // zero when exact
    bool exact = true;
};

/// mu_i(q) = sum_c (prod_j p_j^{c_j}) xi_i(q, c) R_i^{c_i}, exact when K^N is enumerable.
RateEstimate average_rates(const SchedulerPolicy& policy, std::span<const int> q,
                           std::span<const ChannelModel> models, const RateOptions& options = {});

/// Precomputed mu(q) in bits/s. Queue-unaware schedulers are keyed by the non-empty mask,
/// queue-aware ones by the queue vector clamped to the truncation box.
class ServiceRateTable {
public:
    static ServiceRateTable build(const SchedulerPolicy& policy, std::span<const ChannelModel> models,
                                  std::span<const int> truncation, const RateOptions& options = {},
                                  std::size_t max_entries = 2'000'000);

    /// Mask-indexed table from explicit rates; `rates[mask]` has one entry per user.
    static ServiceRateTable from_mask_rates(std::size_t num_users, std::vector<std::vector<double>> rates);

    const SchedulerPolicy& scheduler() const { return scheduler_; }
    std::size_t num_users() const { return num_users_; }
    bool mask_indexed() const { return mask_indexed_; }
    std::size_t size() const { return rates_.size() / num_users_; }
    std::span<const int> truncation() const { return truncation_; }

    std::span<const double> lookup(std::span<const int> q) const;
    std::span<const double> by_mask(std::uint32_t mask) const;

    /// Copy with every rate multiplied by `factor` (>= 0).
    ServiceRateTable scaled(double factor) const;

    /// Largest total rate |mu(q)| over all entries.
    double max_total_rate() const;

    /// Test hook: overwrite one rate.
    void poke(std::size_t entry, std::size_t user, double value) { rates_[entry * num_users_ + user] = value; }

private:
    SchedulerPolicy scheduler_;
    std::size_t num_users_ = 0;
    bool mask_indexed_ = true;
    std::vector<int> truncation_;
    std::vector<double> rates_;
};

std::uint32_t nonempty_mask(std::span<const int> q);

}  // namespace tspread
