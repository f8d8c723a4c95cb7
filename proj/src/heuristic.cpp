#include "tspread/heuristic.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>

namespace tspread {

namespace {

const double kLogStep = std::log1p(1e-4);
constexpr std::int64_t kZero = std::numeric_limits<std::int64_t>::min();

std::int64_t snap(double x) {
    if (x == 0.0) return kZero;
    if (!(x > 0.0) || !std::isfinite(x)) throw InvalidInput("reduced problem rates must be finite and >= 0");
    return std::llround(std::log(x) / kLogStep);
}

double unsnap(std::int64_t k) { return k == kZero ? 0.0 : std::exp(static_cast<double>(k) * kLogStep); }

std::string describe(const ReducedProblem& p) {
    std::ostringstream os;
    os << "lambda=(" << p.lambda[0] << "," << p.lambda[1] << ") mu1=(" << p.mu1_alone << "," << p.mu1_both
       << ") mu2=(" << p.mu2_alone << "," << p.mu2_both << ") phi=(" << p.phi[0] << "," << p.phi[1] << ") w=("
       << p.weight[0] << "," << p.weight[1] << ") eta=(" << p.eta[0] << "," << p.eta[1] << ")";
    return os.str();
}

}  // namespace

std::size_t least_workload_user(std::span<const int> q, std::span<const double> solo_rates) {
    if (q.size() != solo_rates.size() || q.empty()) throw InvalidInput("least_workload_user: size mismatch");
    std::size_t best = 0;
    double best_work = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < q.size(); ++l) {
        if (!(solo_rates[l] > 0.0)) throw InvalidInput("least_workload_user: solo rates must be positive");
        const double work = q[l] / solo_rates[l];
        if (work < best_work) {
            best_work = work;
            best = l;
        }
    }
    return best;
}

HeuristicModel HeuristicModel::build(std::vector<double> arrival_rates, const ServiceRateTable& table,
                                     std::vector<double> file_bits, CostModel costs) {
    const std::size_t n = arrival_rates.size();
    if (n < 2) throw InvalidInput("heuristic needs at least two users");
    if (!table.mask_indexed()) throw InvalidInput("heuristic needs a queue-unaware (mask-indexed) rate table");
    if (table.num_users() != n || file_bits.size() != n) throw InvalidInput("heuristic: size mismatch");
    costs.validate(n);
    HeuristicModel m;
    m.arrival_rates_ = std::move(arrival_rates);
    m.file_bits_ = std::move(file_bits);
    m.table_ = table;
    m.costs_ = std::move(costs);
    for (std::size_t l = 0; l < n; ++l) {
        if (!(m.arrival_rates_[l] >= 0.0)) throw InvalidInput("heuristic: arrival rates must be >= 0");
        if (!(m.file_bits_[l] > 0.0)) throw InvalidInput("heuristic: file sizes must be positive");
        m.solo_.push_back(m.rate(l, 1U << l));
    }
    return m;
}

double HeuristicModel::rate(std::size_t user, std::uint32_t mask) const {
    return table_.by_mask(mask)[user] / file_bits_[user];
}

CacheKey cache_key(const ReducedProblem& p, int truncation) {
    CacheKey key;
    key.truncation = truncation;
    key.rates = {snap(p.lambda[0]), snap(p.lambda[1]), snap(p.mu1_alone),
                 snap(p.mu1_both),  snap(p.mu2_alone), snap(p.mu2_both)};
    for (double c : {p.phi[0], p.phi[1], p.weight[0], p.weight[1], p.eta[0], p.eta[1]}) {
        key.costs.push_back(std::bit_cast<std::uint64_t>(c));
    }
    return key;
}

ReducedProblem representative(const CacheKey& key) {
    ReducedProblem p;
    p.lambda[0] = unsnap(key.rates[0]);
    p.lambda[1] = unsnap(key.rates[1]);
    p.mu1_alone = unsnap(key.rates[2]);
    p.mu1_both = unsnap(key.rates[3]);
    p.mu2_alone = unsnap(key.rates[4]);
    p.mu2_both = unsnap(key.rates[5]);
    double* costs[6] = {&p.phi[0], &p.phi[1], &p.weight[0], &p.weight[1], &p.eta[0], &p.eta[1]};
    for (std::size_t k = 0; k < 6; ++k) *costs[k] = std::bit_cast<double>(key.costs[k]);
    return p;
}

MdpProblem make_reduced_mdp(const ReducedProblem& p, int truncation) {
    CostModel costs = CostModel::uniform(2, 0.0, 0.0, 0.0);
    costs.phi(0, 1) = p.phi[0];
    costs.phi(1, 0) = p.phi[1];
    costs.weights(0, 1) = p.weight[0];
    costs.weights(1, 0) = p.weight[1];
    costs.eta(0, 1) = p.eta[0];
    costs.eta(1, 0) = p.eta[1];
    const ReducedProblem r = p;
    return MdpProblem::from_rates(
        {p.lambda[0], p.lambda[1]}, {truncation, truncation},
        [r](std::span<const int> q, std::span<double> mu) {
            mu[0] = q[0] == 0 ? 0.0 : (q[1] == 0 ? r.mu1_alone : r.mu1_both);
            mu[1] = q[1] == 0 ? 0.0 : (q[0] == 0 ? r.mu2_alone : r.mu2_both);
        },
        std::move(costs));
}

DpCache::DpCache(int truncation, SolveOptions options) : truncation_(truncation), options_(std::move(options)) {
    if (truncation < 1) throw InvalidInput("cache truncation must be >= 1");
}

std::shared_ptr<const MdpSolution> DpCache::get(const ReducedProblem& problem) {
    const CacheKey key = cache_key(problem, truncation_);
    {
        std::shared_lock lock(mutex_);
        auto it = entries_.find(key);
        if (it != entries_.end()) {
            ++hits_;
            return it->second;
        }
    }
    const ReducedProblem rep = representative(key);
    std::shared_ptr<const MdpSolution> solution;
    try {
        solution = std::make_shared<const MdpSolution>(solve(make_reduced_mdp(rep, truncation_), options_));
    } catch (const SolverError& e) {
        throw SolverError(std::string(e.what()) + " [reduced problem " + describe(rep) + "]", e.last_span,
                          e.iterations);
    }
    std::unique_lock lock(mutex_);
    ++misses_;
    return entries_.try_emplace(key, std::move(solution)).first->second;
}

std::size_t DpCache::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

HeuristicDecision dispatch(std::size_t i, std::span<const int> q, const HeuristicModel& model, DpCache& cache) {
    const std::size_t n = model.num_users();
    if (q.size() != n || i >= n) throw InvalidInput("dispatch: bad user index or queue vector");
    HeuristicDecision out;
    out.target = i;

    const std::size_t j = least_workload_user(q, model.solo_rates());
    if (j == i) return out;

    std::vector<bool> in_s(n, false), in_b(n, true), in_p(n, false);
    in_s[j] = true;
    in_b[j] = false;

    const std::uint32_t all = (n >= 32 ? 0xFFFFFFFFU : (1U << n) - 1U);
    const std::uint32_t all_but_j = all & ~(1U << j);
    ReducedProblem r;
    int q1 = 0;
    for (std::size_t l = 0; l < n; ++l) {
        if (l == j) continue;
        q1 += q[l];
        r.mu1_alone += model.rate(l, all_but_j);
        r.mu1_both += model.rate(l, all);
    }
    const int q2 = q[j];
    r.mu2_alone = model.rate(j, 1U << j);
    r.mu2_both = model.rate(j, all);

    const auto& costs = model.costs();
    const auto work = [&](std::size_t l) { return q[l] / model.solo_rates()[l]; };
    for (;;) {
        std::size_t star = n;
        for (std::size_t l = 0; l < n; ++l) {
            if (in_b[l] && (star == n || work(l) > work(star))) star = l;
        }
        if (star == n) break;

        r.lambda[0] = r.lambda[1] = 0.0;
        for (std::size_t l = 0; l < n; ++l) r.lambda[in_s[l] ? 1 : 0] += model.arrival_rates()[l];
        r.phi[0] = costs.phi(star, j);
        r.phi[1] = costs.phi(j, star);
        r.weight[0] = costs.weights(star, j);
        r.weight[1] = costs.weights(j, star);
        r.eta[0] = costs.eta(star, j);
        r.eta[1] = costs.eta(j, star);

        const auto sigma = cache.get(r);
        ++out.evaluations;
        const int state[2] = {q1, q2};
        const bool reroute = sigma->action(state)[0] == 1;
        in_b[star] = false;
        if (reroute) {
            if (star == i) {
                out.target = j;
                return out;
            }
            in_s[star] = true;
        } else {
            if (star == i) return out;
            in_p[star] = true;
        }
    }
    return out;
}

}  // namespace tspread
