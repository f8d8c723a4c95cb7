#pragma once

#include <span>
#include <vector>

#include "tspread/scheduler.hpp"

namespace tspread {

struct Position {
    double x = 0.0;
    double y = 0.0;
};

/// Users grouped so that every pair inside a cluster can talk directly. The BS sits at the origin.
struct ClusterState {
    std::vector<std::vector<int>> clusters;
    std::vector<int> heads;          // heads[l] heads cluster l; -1 for a cluster founded by a non-head
    std::vector<double> alpha;       // per-cluster share of BS time
    long window_start = 0;
    long window_end = -1;

    /// cluster index of every user
    std::vector<int> membership(std::size_t num_users) const;
};

/// The `num_heads` users closest to the BS (best mean SNR; lowest index on ties) head the first
/// clusters, in user order. Every other user, in index order, joins the lowest-indexed cluster
/// whose members are all within `comm_range_m`, or founds a new one.
ClusterState form_clusters(std::span<const Position> positions, double comm_range_m, std::size_t num_heads);

/// True if the clusters partition 0..n-1 and each one is pairwise within range.
bool clusters_feasible(const std::vector<std::vector<int>>& clusters, std::span<const Position> positions,
                       double comm_range_m);

/// alpha_l = #{t in [t_s, t_e] : served[t] in cluster l and q[t][served[t]] > 0} / (t_e - t_s + 1).
/// served[t] = -1 marks an idle slot.
std::vector<double> estimate_alpha(std::span<const std::vector<int>> q, std::span<const int> served,
                                   const std::vector<std::vector<int>>& clusters, long t_s, long t_e);

/// Sliding-window version of estimate_alpha fed one slot at a time.
class AlphaEstimator {
public:
    AlphaEstimator(std::size_t num_clusters, long window);
    /// `cluster` of the user served with a non-empty queue, or -1.
    void push(int cluster);
    long filled() const { return filled_; }
    std::vector<double> alpha() const;

private:
    std::vector<int> ring_;
    std::vector<long> counts_;
    long window_;
    long next_ = 0;
    long filled_ = 0;
};

/// In-cluster rates scaled by the cluster's BS time share.
ServiceRateTable scaled_rates(double alpha, const ServiceRateTable& base);

}  // namespace tspread
