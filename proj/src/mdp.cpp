#include "tspread/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <tuple>

namespace tspread {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Targets within this relative distance of the incumbent count as ties.
double tie_eps(double v) { return 1e-10 * std::max(1.0, std::abs(v)); }

}  // namespace

// ---------------------------------------------------------------------------------------------
// StateSpace

StateSpace::StateSpace(std::vector<int> truncation) : truncation_(std::move(truncation)) {
    if (truncation_.empty()) throw InvalidInput("state space needs at least one user");
    strides_.resize(truncation_.size());
    double size = 1.0;
    std::size_t stride = 1;
    for (std::size_t i = 0; i < truncation_.size(); ++i) {
        if (truncation_[i] < 1) throw InvalidInput("truncation must be >= 1");
        strides_[i] = stride;
        stride *= static_cast<std::size_t>(truncation_[i]) + 1;
        size *= truncation_[i] + 1.0;
    }
    if (size > 5e7) throw ResourceError("state space too large");
    size_ = stride;
}

bool StateSpace::contains(std::span<const int> q) const {
    if (q.size() != num_users()) return false;
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (q[i] < 0 || q[i] > truncation_[i]) return false;
    }
    return true;
}

std::size_t StateSpace::index(std::span<const int> q) const {
    if (!contains(q)) throw InvalidInput("queue state outside the truncation box");
    std::size_t idx = 0;
    for (std::size_t i = 0; i < q.size(); ++i) idx += static_cast<std::size_t>(q[i]) * strides_[i];
    return idx;
}

std::size_t StateSpace::clamped_index(std::span<const int> q) const {
    if (q.size() != num_users()) throw InvalidInput("queue state has wrong length");
    std::size_t idx = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        idx += static_cast<std::size_t>(std::clamp(q[i], 0, truncation_[i])) * strides_[i];
    }
    return idx;
}

void StateSpace::decode(std::size_t index, std::span<int> q) const {
    for (std::size_t i = 0; i < num_users(); ++i) {
        const auto radix = static_cast<std::size_t>(truncation_[i]) + 1;
        q[i] = static_cast<int>(index % radix);
        index /= radix;
    }
}

std::vector<int> StateSpace::decode(std::size_t index) const {
    std::vector<int> q(num_users());
    decode(index, q);
    return q;
}

// ---------------------------------------------------------------------------------------------
// CostModel

CostModel CostModel::uniform(std::size_t n, double eta, double phi, double weight) {
    CostModel c{Matrix(n), Matrix(n), Matrix(n)};
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            if (i == j) continue;
            c.eta(j, i) = eta;
            c.phi(j, i) = phi;
            c.weights(j, i) = weight;
        }
    }
    return c;
}

double CostModel::penalty(std::size_t from, std::size_t to) const {
    if (from == to) return 0.0;
    if (std::isinf(phi(from, to)) || std::isinf(eta(from, to))) return kInf;
    return eta(from, to) + weights(from, to) * phi(from, to);
}

void CostModel::validate(std::size_t n) const {
    if (eta.size() != n || phi.size() != n || weights.size() != n) {
        throw InvalidInput("cost matrices must be N x N");
    }
    for (std::size_t j = 0; j < n; ++j) {
        if (eta(j, j) != 0.0 || phi(j, j) != 0.0) throw InvalidInput("cost diagonals must be exactly zero");
        for (std::size_t i = 0; i < n; ++i) {
            if (!(eta(j, i) >= 0.0) || !(phi(j, i) >= 0.0) || !(weights(j, i) >= 0.0) ||
                std::isinf(weights(j, i))) {
                throw InvalidInput("cost entries must be non-negative (weights finite)");
            }
        }
    }
}

bool CostModel::homogeneous() const {
    const std::size_t n = num_users();
    if (n < 2) return true;
    const double e = eta(0, 1), p = phi(0, 1), w = weights(0, 1);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            if (i == j) continue;
            if (eta(j, i) != e || phi(j, i) != p || weights(j, i) != w) return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------------------------
// MdpProblem

MdpProblem MdpProblem::build(std::vector<double> arrival_rates, const ServiceRateTable& table,
                             std::span<const double> file_bits, CostModel costs, std::vector<int> truncation) {
    const std::size_t n = arrival_rates.size();
    if (table.num_users() != n || file_bits.size() != n) {
        throw InvalidInput("mdp: rate table, file sizes and arrival rates disagree on user count");
    }
    for (double b : file_bits) {
        if (!(b > 0.0)) throw InvalidInput("mdp: file sizes must be positive");
    }
    const std::vector<double> bits(file_bits.begin(), file_bits.end());
    return from_rates(std::move(arrival_rates), std::move(truncation),
                      [&table, &bits](std::span<const int> q, std::span<double> mu) {
                          const auto r = table.lookup(q);
                          for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = r[i] / bits[i];
                      },
                      std::move(costs));
}

MdpProblem MdpProblem::from_rates(std::vector<double> arrival_rates, std::vector<int> truncation,
                                  const RateFn& rate_fn, CostModel costs) {
    const std::size_t n = arrival_rates.size();
    if (n == 0) throw InvalidInput("mdp: no users");
    if (truncation.size() != n) throw InvalidInput("mdp: truncation needs one entry per user");
    MdpProblem p;
    p.arrival_rates_ = std::move(arrival_rates);
    for (double l : p.arrival_rates_) {
        if (!(l >= 0.0) || !std::isfinite(l)) throw InvalidInput("mdp: arrival rates must be finite and >= 0");
    }
    p.total_arrival_ = std::accumulate(p.arrival_rates_.begin(), p.arrival_rates_.end(), 0.0);
    if (!(p.total_arrival_ > 0.0)) throw InvalidInput("mdp: invalid problem, total arrival rate is zero");
    costs.validate(n);
    p.costs_ = std::move(costs);
    p.space_ = StateSpace(std::move(truncation));

    p.rates_.assign(p.space_.size() * n, 0.0);
    std::vector<int> q(n);
    for (std::size_t s = 0; s < p.space_.size(); ++s) {
        p.space_.decode(s, q);
        rate_fn(q, std::span<double>(p.rates_.data() + s * n, n));
    }
    p.finalize();
    return p;
}

void MdpProblem::finalize() {
    const std::size_t n = num_users();
    const std::size_t states = space_.size();
    penalty_.assign(n * n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) penalty_[j * n + i] = costs_.penalty(j, i);
    }
    total_rate_.assign(states, 0.0);
    up_.resize(states * n);
    down_.resize(states * n);
    total_queue_.resize(states);
    std::vector<int> q(n);
    max_total_rate_ = 0.0;
    for (std::size_t s = 0; s < states; ++s) {
        space_.decode(s, q);
        int total = 0;
        double mu = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            total += q[i];
            mu += std::abs(rates_[s * n + i]);
            up_[s * n + i] = q[i] < space_.limit(i) ? s + space_.stride(i) : s;
            down_[s * n + i] = q[i] > 0 ? s - space_.stride(i) : s;
        }
        total_queue_[s] = total;
        total_rate_[s] = 0.0;
        for (std::size_t i = 0; i < n; ++i) total_rate_[s] += rates_[s * n + i];
        max_total_rate_ = std::max(max_total_rate_, mu);
    }
    own_allowed_.assign(states * n, 1);
    for (std::size_t s = 0; s < states; ++s) {
        for (std::size_t j = 0; j < n; ++j) {
            if (up_[s * n + j] != s) continue;
            for (std::size_t i = 0; i < n; ++i) {
                if (i != j && can_route(s, j, i)) own_allowed_[s * n + j] = 0;
            }
        }
    }
    uniformization_ = total_arrival_ + max_total_rate_;
}

void MdpProblem::set_uniformization_rate(double rate) {
    if (rate < total_arrival_ + max_total_rate_) {
        throw InvalidInput("uniformization rate must be >= |lambda| + max |mu(q)|");
    }
    uniformization_ = rate;
}

bool MdpProblem::stability_advisory() const {
    std::vector<int> full(space_.truncation().begin(), space_.truncation().end());
    return total_arrival_ >= total_rate_[space_.index(full)];
}

void MdpProblem::poke_rate(std::size_t state, std::size_t user, double value) {
    rates_[state * num_users() + user] = value;
    total_rate_[state] = 0.0;
    for (std::size_t i = 0; i < num_users(); ++i) total_rate_[state] += rates_[state * num_users() + i];
}

// ---------------------------------------------------------------------------------------------
// Bellman machinery

std::vector<double> arrival_rates_under(std::span<const int> action, std::span<const double> arrival_rates) {
    const std::size_t n = arrival_rates.size();
    if (action.size() != n) throw InvalidInput("action must assign one target per source");
    std::vector<double> out(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        if (action[j] < 0 || static_cast<std::size_t>(action[j]) >= n) throw InvalidInput("action target out of range");
        out[static_cast<std::size_t>(action[j])] += arrival_rates[j];
    }
    return out;
}

double stage_cost(std::span<const int> q, std::span<const int> action, const MdpProblem& problem) {
    const std::size_t n = problem.num_users();
    if (q.size() != n || action.size() != n) throw InvalidInput("stage_cost: vector lengths differ from user count");
    double total = 0.0;
    for (int qi : q) total += qi;
    double cost = total / problem.total_arrival_rate();
    const double phi_u = problem.uniformization_rate();
    for (std::size_t j = 0; j < n; ++j) {
        if (action[j] < 0 || static_cast<std::size_t>(action[j]) >= n) throw InvalidInput("action target out of range");
        const auto i = static_cast<std::size_t>(action[j]);
        if (i != j) cost += problem.arrival_rates()[j] / phi_u * problem.penalty(j, i);
    }
    return cost;
}

namespace {

// Shared core: the departure and self-loop part of T h(q).
double service_part(std::span<const double> h, const MdpProblem& p, std::size_t s) {
    const std::size_t n = p.num_users();
    const double inv_phi = 1.0 / p.uniformization_rate();
    const auto mu = p.rates(s);
    double v = static_cast<double>(p.total_queue(s)) / p.total_arrival_rate();
    for (std::size_t i = 0; i < n; ++i) v += mu[i] * inv_phi * h[p.down(s, i)];
    v += (1.0 - (p.total_arrival_rate() + p.total_rate(s)) * inv_phi) * h[s];
    return v;
}

// min over admissible targets of penalty + h(A_i q). The returned value is the exact minimum;
// the returned target prefers the own queue, then the lowest index, among near-ties.
std::pair<double, std::size_t> best_target(std::span<const double> h, const MdpProblem& p, std::size_t s,
                                           std::size_t j) {
    const std::size_t n = p.num_users();
    double best = kInf;
    double chosen = kInf;
    std::size_t best_i = j;
    if (p.can_route(s, j, j)) best = chosen = h[p.up(s, j)];
    for (std::size_t i = 0; i < n; ++i) {
        if (i == j || !p.can_route(s, j, i)) continue;
        const double cand = p.penalty(j, i) + h[p.up(s, i)];
        best = std::min(best, cand);
        if (chosen == kInf || cand < chosen - tie_eps(chosen)) {
            chosen = cand;
            best_i = i;
        }
    }
    return {best, best_i};
}

}  // namespace

Backup bellman_backup(std::span<const double> h, const MdpProblem& problem, std::size_t state) {
    const std::size_t n = problem.num_users();
    if (h.size() != problem.space().size()) throw InvalidInput("bellman_backup: value vector has wrong size");
    const double inv_phi = 1.0 / problem.uniformization_rate();
    double v = service_part(h, problem, state);
    Backup out{0.0, Action(n)};
    for (std::size_t j = 0; j < n; ++j) {
        const auto [best, best_i] = best_target(h, problem, state, j);
        out.action[j] = static_cast<int>(best_i);
        v += problem.arrival_rates()[j] * inv_phi * best;
    }
    out.value = v;
    return out;
}

double randomized_backup(std::span<const double> h, const MdpProblem& problem, std::size_t state,
                         const Matrix& sigma) {
    const std::size_t n = problem.num_users();
    if (sigma.size() != n) throw InvalidInput("randomized_backup: sigma must be N x N");
    const double inv_phi = 1.0 / problem.uniformization_rate();
    double v = service_part(h, problem, state);
    for (std::size_t j = 0; j < n; ++j) {
        double row = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (sigma(j, i) == 0.0) continue;
            if (!problem.can_route(state, j, i)) throw InvalidInput("randomized_backup: mass on an inadmissible target");
            row += sigma(j, i) * (problem.penalty(j, i) + h[problem.up(state, i)]);
        }
        v += problem.arrival_rates()[j] * inv_phi * row;
    }
    return v;
}

Action MdpSolution::action(std::span<const int> q) const {
    const std::size_t s = space.clamped_index(q);
    Action a(num_users());
    for (std::size_t j = 0; j < num_users(); ++j) a[j] = target(s, j);
    return a;
}

std::pair<double, double> bellman_sweep(const MdpProblem& problem, std::span<const double> h, std::span<double> out) {
    const std::size_t n = problem.num_users();
    const std::size_t states = problem.space().size();
    const double inv_phi = 1.0 / problem.uniformization_rate();
    const auto lambda = problem.arrival_rates();
    double lo = kInf, hi = -kInf;
    for (std::size_t s = 0; s < states; ++s) {
        double v = service_part(h, problem, s);
        for (std::size_t j = 0; j < n; ++j) {
            v += lambda[j] * inv_phi * best_target(h, problem, s, j).first;
        }
        out[s] = v;
        const double r = v - h[s];
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    return {lo, hi};
}

MdpSolution solve(const MdpProblem& problem, const SolveOptions& options) {
    const std::size_t n = problem.num_users();
    const std::size_t states = problem.space().size();
    if (problem.uniformization_rate() < problem.total_arrival_rate() + problem.max_total_rate()) {
        throw InvalidInput("solve: uniformization rate below |lambda| + max |mu|");
    }
    std::size_t ref = 0;
    if (!options.reference.empty()) ref = problem.space().index(options.reference);

    std::vector<double> h(states, 0.0);
    if (!options.initial_h.empty()) {
        if (options.initial_h.size() != states) throw InvalidInput("solve: initial values have wrong size");
        h = options.initial_h;
        const double shift = h[ref];
        for (double& x : h) x -= shift;
    }
    std::vector<double> next(states);

    double span = kInf;
    double lo = 0.0, hi = 0.0;
    long it = 0;
    for (; it < options.max_iterations; ++it) {
        std::tie(lo, hi) = bellman_sweep(problem, h, next);
        span = hi - lo;
        if (!std::isfinite(span)) break;
        const double shift = next[ref];
        for (std::size_t s = 0; s < states; ++s) h[s] = next[s] - shift;
        if (span < options.tolerance) {
            ++it;
            break;
        }
    }
    if (!std::isfinite(span)) {
        std::ostringstream msg;
        msg << "relative value iteration diverged at iteration " << it << " (span " << span << ")";
        throw SolverError(msg.str(), span, it);
    }
    if (!(span < options.tolerance)) {
        std::ostringstream msg;
        msg << "relative value iteration did not converge in " << it << " iterations (span " << span << ")";
        throw SolverError(msg.str(), span, it);
    }

    MdpSolution sol;
    sol.space = problem.space();
    sol.gain = 0.5 * (lo + hi);
    sol.uniformization_rate = problem.uniformization_rate();
    sol.iterations = it;
    sol.residual_span = span;
    sol.policy.resize(states * n);
    for (std::size_t s = 0; s < states; ++s) {
        const auto b = bellman_backup(h, problem, s);
        for (std::size_t j = 0; j < n; ++j) sol.policy[s * n + j] = static_cast<std::int8_t>(b.action[j]);
    }
    sol.h = std::move(h);
    return sol;
}

PolicyMetrics evaluate_policy(const MdpProblem& problem, const MdpSolution& solution, double tolerance,
                              long max_iterations) {
    const std::size_t n = problem.num_users();
    const std::size_t states = problem.space().size();
    if (solution.space.size() != states) throw InvalidInput("evaluate_policy: solution box differs from problem");
    const double inv_phi = 1.0 / problem.uniformization_rate();
    const auto lambda = problem.arrival_rates();

    // Power iteration on the uniformized chain; lazy mixing with the self-loop keeps it aperiodic.
    std::vector<double> pi(states, 0.0), next(states);
    pi[0] = 1.0;
    for (long it = 0; it < max_iterations; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t s = 0; s < states; ++s) {
            const double mass = pi[s];
            if (mass == 0.0) continue;
            const auto mu = problem.rates(s);
            double stay = 1.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double pd = mu[i] * inv_phi;
                next[problem.down(s, i)] += mass * pd;
                stay -= pd;
            }
            for (std::size_t j = 0; j < n; ++j) {
                const double pa = lambda[j] * inv_phi;
                next[problem.up(s, static_cast<std::size_t>(solution.target(s, j)))] += mass * pa;
                stay -= pa;
            }
            next[s] += mass * stay;
        }
        double diff = 0.0;
        for (std::size_t s = 0; s < states; ++s) diff += std::abs(next[s] - pi[s]);
        pi.swap(next);
        if (diff < tolerance) break;
    }

    PolicyMetrics m;
    m.reroute_rate = Matrix(n);
    for (std::size_t s = 0; s < states; ++s) {
        m.mean_total_queue += pi[s] * problem.total_queue(s);
        for (std::size_t j = 0; j < n; ++j) {
            const auto i = static_cast<std::size_t>(solution.target(s, j));
            if (i != j) m.reroute_rate(j, i) += pi[s] * lambda[j];
        }
    }
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            if (i != j && m.reroute_rate(j, i) > 0.0) m.reroute_penalty_rate += m.reroute_rate(j, i) * problem.penalty(j, i);
        }
    }
    m.mean_delay_s = m.mean_total_queue / problem.total_arrival_rate();
    return m;
}

TransitionCheck check_transitions(const MdpProblem& problem, const MdpSolution* solution) {
    const std::size_t n = problem.num_users();
    const double inv_phi = 1.0 / problem.uniformization_rate();
    const auto lambda = problem.arrival_rates();
    TransitionCheck out;
    std::vector<double> lam_prime(n);
    for (std::size_t s = 0; s < problem.space().size(); ++s) {
        std::fill(lam_prime.begin(), lam_prime.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t i = solution ? static_cast<std::size_t>(solution->target(s, j)) : j;
            lam_prime[i] += lambda[j];
        }
        const auto mu = problem.rates(s);
        double sum = 0.0, worst = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double pa = lam_prime[i] * inv_phi;
            const double pd = mu[i] * inv_phi;
            sum += pa + pd;
            worst = std::min({worst, pa, pd});
        }
        const double self = 1.0 - (problem.total_arrival_rate() + problem.total_rate(s)) * inv_phi;
        sum += self;
        worst = std::min(worst, self);
        const double err = std::abs(sum - 1.0);
        if (worst < out.min_probability) {
            out.min_probability = worst;
            out.worst_state = s;
        }
        out.max_row_error = std::max(out.max_row_error, err);
    }
    out.ok = out.min_probability >= 0.0 && out.max_row_error <= 1e-12;
    return out;
}

}  // namespace tspread
