#include "tspread/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tspread {

namespace {

double distance(const Position& a, const Position& b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

std::vector<int> ClusterState::membership(std::size_t num_users) const {
    std::vector<int> out(num_users, -1);
    for (std::size_t l = 0; l < clusters.size(); ++l) {
        for (int u : clusters[l]) {
            if (u < 0 || static_cast<std::size_t>(u) >= num_users) throw InvalidInput("cluster member out of range");
            out[u] = static_cast<int>(l);
        }
    }
    return out;
}

ClusterState form_clusters(std::span<const Position> positions, double comm_range_m, std::size_t num_heads) {
    const std::size_t n = positions.size();
    if (num_heads < 1) throw InvalidInput("form_clusters: need at least one head");
    if (!(comm_range_m >= 0.0)) throw InvalidInput("form_clusters: range must be >= 0");
    for (const auto& p : positions) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw InvalidInput("form_clusters: positions must be finite");
    }
    const Position bs{};
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return distance(positions[a], bs) < distance(positions[b], bs); });
    std::vector<int> heads(order.begin(), order.begin() + std::min(num_heads, n));
    std::sort(heads.begin(), heads.end());

    ClusterState state;
    std::vector<bool> is_head(n, false);
    for (int h : heads) {
        is_head[h] = true;
        state.clusters.push_back({h});
        state.heads.push_back(h);
    }
    for (std::size_t u = 0; u < n; ++u) {
        if (is_head[u]) continue;
        bool joined = false;
        for (auto& members : state.clusters) {
            const bool fits = std::all_of(members.begin(), members.end(), [&](int m) {
                return distance(positions[u], positions[m]) <= comm_range_m;
            });
            if (fits) {
                members.push_back(static_cast<int>(u));
                joined = true;
                break;
            }
        }
        if (!joined) {
            state.clusters.push_back({static_cast<int>(u)});
            state.heads.push_back(-1);
        }
    }
    state.alpha.assign(state.clusters.size(), 1.0 / static_cast<double>(std::max<std::size_t>(1, state.clusters.size())));
    return state;
}

bool clusters_feasible(const std::vector<std::vector<int>>& clusters, std::span<const Position> positions,
                       double comm_range_m) {
    std::vector<int> seen(positions.size(), 0);
    for (const auto& c : clusters) {
        for (int u : c) {
            if (u < 0 || static_cast<std::size_t>(u) >= positions.size()) return false;
            ++seen[u];
        }
        for (std::size_t a = 0; a < c.size(); ++a) {
            for (std::size_t b = a + 1; b < c.size(); ++b) {
                if (distance(positions[c[a]], positions[c[b]]) > comm_range_m) return false;
            }
        }
    }
    return std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; });
}

std::vector<double> estimate_alpha(std::span<const std::vector<int>> q, std::span<const int> served,
                                   const std::vector<std::vector<int>>& clusters, long t_s, long t_e) {
    if (t_e < t_s || t_s < 0) throw InvalidInput("estimate_alpha: empty window");
    if (static_cast<std::size_t>(t_e) >= served.size() || q.size() != served.size()) {
        throw InvalidInput("estimate_alpha: window exceeds the history");
    }
    std::size_t num_users = 0;
    for (const auto& c : clusters) {
        for (int u : c) num_users = std::max(num_users, static_cast<std::size_t>(u) + 1);
    }
    ClusterState tmp;
    tmp.clusters = clusters;
    const auto member = tmp.membership(num_users);

    std::vector<double> alpha(clusters.size(), 0.0);
    for (long t = t_s; t <= t_e; ++t) {
        const int s = served[t];
        if (s < 0) continue;
        if (static_cast<std::size_t>(s) >= num_users || member[s] < 0) continue;
        if (q[t].at(s) > 0) alpha[member[s]] += 1.0;
    }
    const double len = static_cast<double>(t_e - t_s + 1);
    for (auto& a : alpha) a /= len;
    return alpha;
}

AlphaEstimator::AlphaEstimator(std::size_t num_clusters, long window)
    : ring_(static_cast<std::size_t>(window), -1), counts_(num_clusters, 0), window_(window) {
    if (window < 1) throw InvalidInput("alpha window must be >= 1 slot");
}

void AlphaEstimator::push(int cluster) {
    int& slot = ring_[static_cast<std::size_t>(next_)];
    if (filled_ == window_ && slot >= 0) --counts_[slot];
    slot = cluster;
    if (cluster >= 0) ++counts_[cluster];
    next_ = (next_ + 1) % window_;
    filled_ = std::min(filled_ + 1, window_);
}

std::vector<double> AlphaEstimator::alpha() const {
    std::vector<double> out(counts_.size(), 0.0);
    if (filled_ == 0) return out;
    for (std::size_t l = 0; l < counts_.size(); ++l) out[l] = static_cast<double>(counts_[l]) / filled_;
    return out;
}

ServiceRateTable scaled_rates(double alpha, const ServiceRateTable& base) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidInput("scaled_rates: alpha must be in [0, 1]");
    return base.scaled(alpha);
}

}  // namespace tspread
