#include "tspread/sim.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <queue>
#include <sstream>

#include "tspread/cluster.hpp"
#include "tspread/heuristic.hpp"

namespace tspread {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Counter-based draws: the same (seed, slot, stream) gives the same uniform in every run,
/// whatever the dispatcher did in between.
std::uint64_t slot_key(std::uint64_t seed, long long slot) { return mix(seed ^ mix(static_cast<std::uint64_t>(slot))); }

double slot_uniform(std::uint64_t key, std::uint64_t stream) {
    const std::uint64_t h = mix(key ^ (stream * 0xD1B54A32D192ED03ULL));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double exponential(Rng& rng, double mean) { return -mean * std::log1p(-uniform01(rng)); }

struct Job {
    int owner;
    double remaining_bits;
    double request_time;
    double extra_delay;
};

struct Completion {
    double time;
    int owner;
    double request_time;
    bool operator>(const Completion& o) const { return time > o.time; }
};

/// Sums over one batch window.
struct Window {
    double duration = 0.0;
    double area = 0.0;
    double delay_sum = 0.0;
    long long completed = 0;
    double energy = 0.0;
    std::vector<long long> reroutes;

    void reset(std::size_t n) {
        *this = Window{};
        reroutes.assign(n * n, 0);
    }
    void absorb(const Window& o) {
        duration += o.duration;
        area += o.area;
        delay_sum += o.delay_sum;
        completed += o.completed;
        energy += o.energy;
        for (std::size_t k = 0; k < reroutes.size(); ++k) reroutes[k] += o.reroutes[k];
    }
};

double half_width(const std::vector<double>& xs, double confidence) {
    const std::size_t n = xs.size();
    if (n < 2) return kInf;
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (n - 1));
    const boost::math::students_t dist(static_cast<double>(n - 1));
    const double t = boost::math::quantile(boost::math::complement(dist, (1.0 - confidence) / 2.0));
    return t * sd / std::sqrt(static_cast<double>(n));
}

/// Users that may exchange files, with the policy state needed to dispatch among them.
struct Group {
    std::vector<int> users;
    double alpha = 1.0;
    ServiceRateTable base_table;
    std::shared_ptr<const MdpSolution> solution;
    std::map<long, std::shared_ptr<const MdpSolution>> by_alpha;   // keyed by alpha in hundredths
    std::optional<HeuristicModel> heuristic;
    std::unique_ptr<DpCache> cache;
};

class Simulation {
public:
    explicit Simulation(ScenarioConfig config);
    SimReport run();

private:
    void build_group(Group& g, double alpha);
    std::size_t dispatch(std::size_t owner);
    void advance(double t);
    void on_boundary();
    void close_window();
    void admit(std::size_t owner, double t);
    void complete(const Completion& c);
    int channel_state(std::size_t user, long long slot, std::uint64_t key);
    std::size_t serve_slot(long long slot);
    void refresh_first_arrival() {
        const auto it = std::min_element(next_arrival_.begin(), next_arrival_.end());
        first_arrival_ = *it;
        first_owner_ = static_cast<std::size_t>(it - next_arrival_.begin());
    }

    ScenarioConfig cfg_;
    std::size_t n_;
    double tau_;
    double total_lambda_;
    std::vector<ChannelModel> models_;
    std::vector<double> file_bits_;
    std::vector<Group> groups_;
    std::vector<int> group_of_;
    bool clustered_ = false;
    Dispatcher user_dispatcher_;

    // Randomness: one stream per user for arrivals and sizes; channel and tie draws are counter based.
    std::vector<Rng> arrival_rng_;
    std::vector<Rng> size_rng_;
    std::vector<double> next_arrival_;
    double first_arrival_ = kInf;     // min of next_arrival_
    std::size_t first_owner_ = 0;
    long long queued_ = 0;            // sum of q_
    std::vector<int> chan_;
    std::vector<long long> chan_slot_;

    std::vector<std::deque<Job>> queues_;
    std::vector<int> q_;
    std::vector<double> queue_bits_;
    std::priority_queue<Completion, std::vector<Completion>, std::greater<>> pending_;
    LowerBoundState lb_state_;

    // Measurement.
    double clock_ = 0.0;
    long long n_sys_ = 0;
    double boundary_ = 0.0;
    bool warming_ = true;
    double batch_len_ = 0.0;
    Window acc_;
    std::vector<Window> batches_;
    bool done_ = false;
    bool target_met_ = false;
    std::vector<long long> backlog_history_;
    double offered_load_ = 0.0;

    std::vector<long long> generated_, completed_;
    std::optional<AlphaEstimator> alpha_est_;

    // Scratch.
    std::vector<double> xi_, rates_;
    std::vector<int> hol_;
    std::vector<int> states_;
};

Simulation::Simulation(ScenarioConfig config) : cfg_(std::move(config)) {
    cfg_.validate();
    n_ = cfg_.num_users();
    tau_ = cfg_.channel.slot_s;
    total_lambda_ = cfg_.total_arrival_rate();
    for (const auto& u : cfg_.users) {
        models_.push_back(discretize(cfg_.channel, u.distance_m));
        file_bits_.push_back(u.mean_file_bytes * 8.0);
    }

    user_dispatcher_ = cfg_.local_link_congested ? Dispatcher::none : cfg_.dispatcher;
    if (user_dispatcher_ == Dispatcher::lower_bound) {
        if (cfg_.clusters.size() > 1) throw InvalidInput("lower-bound dispatcher is not defined for clustered cells");
    }

    // Capacity with every queue backlogged under greedy: the offered-load denominator.
    {
        const std::vector<int> ones(n_, 1);
        const auto est = average_rates(SchedulerPolicy{}, ones, models_);
        double cap = std::accumulate(est.rates.begin(), est.rates.end(), 0.0);
        double load_bits = 0.0;
        for (std::size_t i = 0; i < n_; ++i) load_bits += cfg_.users[i].arrival_rate * file_bits_[i];
        offered_load_ = cap > 0 ? load_bits / cap : kInf;
    }

    std::vector<std::vector<int>> parts = cfg_.clusters;
    if (parts.empty()) {
        parts.emplace_back(n_);
        std::iota(parts[0].begin(), parts[0].end(), 0);
    }
    clustered_ = parts.size() > 1;
    group_of_.assign(n_, -1);
    groups_.resize(parts.size());
    for (std::size_t l = 0; l < parts.size(); ++l) {
        groups_[l].users = parts[l];
        for (int u : parts[l]) group_of_[u] = static_cast<int>(l);
    }
    const bool needs_policy = user_dispatcher_ == Dispatcher::optimal || user_dispatcher_ == Dispatcher::heuristic ||
                              user_dispatcher_ == Dispatcher::lower_bound;
    if (needs_policy) {
        for (auto& g : groups_) build_group(g, clustered_ ? 1.0 / static_cast<double>(groups_.size()) : 1.0);
    }
    if (clustered_) alpha_est_.emplace(groups_.size(), cfg_.alpha_window_slots);

    arrival_rng_.reserve(n_);
    for (std::size_t i = 0; i < n_; ++i) {
        arrival_rng_.emplace_back(mix(cfg_.seed ^ mix(2 * i + 1)));
        size_rng_.emplace_back(mix(cfg_.seed ^ mix(2 * i + 2)));
        const double lam = cfg_.users[i].arrival_rate;
        next_arrival_.push_back(lam > 0 ? exponential(arrival_rng_[i], 1.0 / lam) : kInf);
    }
    refresh_first_arrival();
    chan_.assign(n_, 0);
    chan_slot_.assign(n_, -1);
    queues_.resize(n_);
    q_.assign(n_, 0);
    queue_bits_.assign(n_, 0.0);
    generated_.assign(n_, 0);
    completed_.assign(n_, 0);
    xi_.resize(n_);
    rates_.resize(n_);
    hol_.resize(n_);
    states_.resize(n_);

    batch_len_ = cfg_.stopping.initial_batch_arrivals / total_lambda_;
    boundary_ = cfg_.stopping.warmup_fraction * cfg_.stopping.min_batches * batch_len_;
    warming_ = true;
    acc_.reset(n_);
}

void Simulation::build_group(Group& g, double alpha) {
    const std::size_t m = g.users.size();
    // Policies are built on a 0.01 grid of time shares so a noisy estimate reuses earlier solves.
    alpha = std::clamp(std::round(alpha * 100.0) / 100.0, 0.01, 1.0);
    g.alpha = alpha;
    if (m < 2) return;
    std::vector<ChannelModel> models;
    std::vector<double> lam, bits;
    CostModel costs = CostModel::uniform(m, 0, 0, 0);
    SchedulerPolicy sched = cfg_.scheduler;
    sched.file_bits.clear();
    if (!sched.log_rule_a.empty()) sched.log_rule_a.clear();
    for (std::size_t a = 0; a < m; ++a) {
        const int u = g.users[a];
        models.push_back(models_[u]);
        lam.push_back(cfg_.users[u].arrival_rate);
        bits.push_back(file_bits_[u]);
        sched.file_bits.push_back(file_bits_[u]);
        if (!cfg_.scheduler.log_rule_a.empty()) sched.log_rule_a.push_back(cfg_.scheduler.log_rule_a[u]);
        for (std::size_t b = 0; b < m; ++b) {
            costs.eta(a, b) = cfg_.costs.eta(u, g.users[b]);
            costs.phi(a, b) = cfg_.costs.phi(u, g.users[b]);
            costs.weights(a, b) = cfg_.costs.weights(u, g.users[b]);
        }
    }
    if (std::accumulate(lam.begin(), lam.end(), 0.0) <= 0.0) return;

    bool use_heuristic = user_dispatcher_ == Dispatcher::heuristic;
    if (user_dispatcher_ == Dispatcher::lower_bound) use_heuristic = m > 3 && !sched.queue_aware();
    if (use_heuristic) {
        if (g.base_table.num_users() == 0) {
            g.base_table = ServiceRateTable::build(sched, models, std::vector<int>(m, cfg_.heuristic_truncation));
        }
        const auto table = clustered_ ? scaled_rates(alpha, g.base_table) : g.base_table;
        g.heuristic = HeuristicModel::build(lam, table, bits, costs);
        if (!g.cache) g.cache = std::make_unique<DpCache>(cfg_.heuristic_truncation, cfg_.solver);
    } else {
        const int t = cfg_.dp_truncation > 0 ? cfg_.dp_truncation : (m == 2 ? 40 : 20);
        const std::vector<int> trunc(m, t);
        if (g.base_table.num_users() == 0) g.base_table = ServiceRateTable::build(sched, models, trunc);
        const long key = std::lround(alpha * 100.0);
        if (auto it = g.by_alpha.find(key); it != g.by_alpha.end()) {
            g.solution = it->second;
            return;
        }
        const auto table = clustered_ ? scaled_rates(alpha, g.base_table) : g.base_table;
        SolveOptions options = cfg_.solver;
        if (g.solution) options.initial_h = g.solution->h;
        g.solution = std::make_shared<const MdpSolution>(solve(MdpProblem::build(lam, table, bits, costs, trunc), options));
        g.by_alpha.emplace(key, g.solution);
    }
}

std::size_t Simulation::dispatch(std::size_t owner) {
    const Group& g = groups_[group_of_[owner]];
    if (g.users.size() < 2) return owner;
    switch (user_dispatcher_) {
        case Dispatcher::none:
            return owner;
        case Dispatcher::jsq: {
            std::vector<double> work(n_, kInf);
            std::unique_ptr<bool[]> allowed(new bool[n_]());
            for (int u : g.users) {
                if (static_cast<std::size_t>(u) != owner && !std::isfinite(cfg_.costs.penalty(owner, u))) continue;
                allowed[u] = true;
                work[u] = queue_bits_[u] / models_[u].mean_rate();
            }
            return jsq_dispatch(work, owner, std::span<const bool>(allowed.get(), n_));
        }
        case Dispatcher::optimal:
        case Dispatcher::heuristic:
        case Dispatcher::lower_bound: {
            std::vector<int> local(g.users.size());
            std::size_t me = 0;
            for (std::size_t a = 0; a < g.users.size(); ++a) {
                local[a] = q_[g.users[a]];
                if (static_cast<std::size_t>(g.users[a]) == owner) me = a;
            }
            if (g.heuristic) return g.users[tspread::dispatch(me, local, *g.heuristic, *g.cache).target];
            if (g.solution) return g.users[g.solution->action(local)[me]];
            return owner;
        }
    }
    return owner;
}

void Simulation::advance(double t) {
    while (t >= boundary_ && !done_) {
        acc_.area += static_cast<double>(n_sys_) * (boundary_ - clock_);
        acc_.duration += boundary_ - clock_;
        clock_ = boundary_;
        on_boundary();
    }
    acc_.area += static_cast<double>(n_sys_) * (t - clock_);
    acc_.duration += t - clock_;
    clock_ = t;
}

void Simulation::on_boundary() {
    backlog_history_.push_back(n_sys_);
    if (n_sys_ > cfg_.instability_backlog) {
        std::ostringstream os;
        os << "queues do not stabilize: " << n_sys_ << " files in system at t = " << clock_
           << " s; offered load " << offered_load_ << " of the all-backlogged greedy capacity";
        throw InstabilityError(os.str(), offered_load_);
    }
    const std::size_t h = static_cast<std::size_t>(cfg_.instability_batches);
    if (backlog_history_.size() > h) {
        const auto first = backlog_history_.end() - static_cast<long>(h) - 1;
        bool growing = true;
        for (auto it = first; it + 1 != backlog_history_.end(); ++it) growing = growing && *(it + 1) > *it;
        if (growing && backlog_history_.back() - *first > 100) {
            std::ostringstream os;
            os << "queues grow linearly over " << h << " consecutive batches (backlog " << backlog_history_.back()
               << " files); offered load " << offered_load_ << " of the all-backlogged greedy capacity";
            throw InstabilityError(os.str(), offered_load_);
        }
    }

    if (warming_) {
        warming_ = false;
        acc_.reset(n_);
    } else {
        close_window();
    }
    boundary_ = clock_ + batch_len_;
}

void Simulation::close_window() {
    batches_.push_back(acc_);
    acc_.reset(n_);
    const auto& stop = cfg_.stopping;
    if (batches_.size() >= 2 * static_cast<std::size_t>(stop.min_batches)) {
        std::vector<Window> merged;
        for (std::size_t b = 0; b + 1 < batches_.size(); b += 2) {
            Window w = batches_[b];
            w.absorb(batches_[b + 1]);
            merged.push_back(std::move(w));
        }
        batches_ = std::move(merged);
        batch_len_ *= 2.0;
    }
    if (batches_.size() >= static_cast<std::size_t>(stop.min_batches)) {
        std::vector<double> delays, powers;
        Window total;
        total.reset(n_);
        for (const auto& w : batches_) {
            total.absorb(w);
            if (w.completed > 0) delays.push_back(w.delay_sum / w.completed);
            powers.push_back(w.energy / w.duration);
        }
        const double delay = total.completed > 0 ? total.delay_sum / total.completed : 0.0;
        const double power = total.energy / total.duration;
        const bool ok = half_width(delays, stop.confidence) <= stop.relative_half_width * delay &&
                        half_width(powers, stop.confidence) <= std::max(stop.relative_half_width * power,
                                                                         stop.power_floor_w);
        if (ok) {
            done_ = true;
            target_met_ = true;
        }
    }
    if (clock_ >= stop.max_sim_time_s) done_ = true;
}

void Simulation::admit(std::size_t owner, double t) {
    advance(t);
    ++n_sys_;
    ++generated_[owner];
    const std::size_t carrier = dispatch(owner);
    Job job{static_cast<int>(owner), 0.0, t, 0.0};
    job.remaining_bits = exponential(size_rng_[owner], file_bits_[owner]);
    if (carrier != owner) {
        acc_.energy += cfg_.costs.phi(owner, carrier);
        acc_.reroutes[owner * n_ + carrier] += 1;
        job.extra_delay = cfg_.costs.eta(owner, carrier);
    }
    queue_bits_[carrier] += job.remaining_bits;
    ++q_[carrier];
    ++queued_;
    queues_[carrier].push_back(job);
    next_arrival_[owner] = t + exponential(arrival_rng_[owner], 1.0 / cfg_.users[owner].arrival_rate);
    refresh_first_arrival();
}

void Simulation::complete(const Completion& c) {
    advance(c.time);
    --n_sys_;
    ++completed_[c.owner];
    acc_.delay_sum += c.time - c.request_time;
    acc_.completed += 1;
}

int Simulation::channel_state(std::size_t user, long long slot, std::uint64_t key) {
    const auto& model = models_[user];
    const double rho = cfg_.fading.effective_correlation();
    const long long last = chan_slot_[user];
    chan_slot_[user] = slot;
    if (rho <= 0.0 || last < 0) return chan_[user] = model.sample(slot_uniform(key, 4 * user + 1));
    const double stay = slot - last == 1 ? rho : std::pow(rho, static_cast<double>(slot - last));
    if (slot_uniform(key, 4 * user + 2) < stay) return chan_[user];
    return chan_[user] = model.sample(slot_uniform(key, 4 * user + 1));
}

std::size_t Simulation::serve_slot(long long slot) {
    std::vector<int>& c = hol_;
    std::vector<int>& states = states_;
    const std::uint64_t key = slot_key(cfg_.seed, slot);
    for (std::size_t i = 0; i < n_; ++i) {
        states[i] = channel_state(i, slot, key);
        rates_[i] = models_[i].rate(states[i]);
    }
    const double t0 = static_cast<double>(slot) * tau_;

    std::size_t queue = n_;
    double rate = 0.0;
    std::optional<LowerBoundDecision> lb;
    if (cfg_.dispatcher == Dispatcher::lower_bound && !cfg_.local_link_congested) {
        for (std::size_t i = 0; i < n_; ++i) c[i] = queues_[i].empty() ? -1 : queues_[i].front().owner;
        const auto d = lower_bound_schedule(rates_, q_, c, lb_state_);
        if (d.step != 17) {
            lb = d;
            queue = d.queue;
            rate = rates_[d.via];
        }
    }
    if (queue == n_) {
        int candidates = 0;
        if (cfg_.scheduler.kind == SchedulerKind::greedy) {
            // Same rule as select_into, without the per-user metric dispatch.
            double best = -1.0;
            for (std::size_t i = 0; i < n_; ++i) {
                if (q_[i] == 0) continue;
                const double r = rates_[i];
                if (candidates > 0 && std::abs(r - best) <= 1e-12 * std::max(r, best)) {
                    ++candidates;
                } else if (r > best) {
                    best = r;
                    queue = i;
                    candidates = 1;
                }
            }
            if (candidates > 1) {
                const double share = 1.0 / candidates;
                for (std::size_t i = 0; i < n_; ++i) {
                    xi_[i] = q_[i] > 0 && std::abs(rates_[i] - best) <= 1e-12 * std::max(rates_[i], best) ? share : 0.0;
                }
            }
        } else {
            select_into(cfg_.scheduler, q_, states, models_, xi_);
            for (std::size_t i = 0; i < n_; ++i) {
                if (xi_[i] > 0.0) {
                    ++candidates;
                    queue = i;
                }
            }
        }
        if (candidates > 1) {
            double u = slot_uniform(key, 4 * n_ + 3);
            for (std::size_t i = 0; i < n_; ++i) {
                if (xi_[i] <= 0.0) continue;
                queue = i;
                if (u < xi_[i]) break;
                u -= xi_[i];
            }
        }
        if (queue == n_) return n_;
        rate = rates_[queue];
    }

    double capacity = rate * tau_;
    double used = 0.0;
    double served = 0.0;
    auto& dq = queues_[queue];
    while (capacity > 0.0 && !dq.empty()) {
        Job& job = dq.front();
        if (job.remaining_bits <= capacity) {
            capacity -= job.remaining_bits;
            served += job.remaining_bits;
            used += job.remaining_bits / rate;
            queue_bits_[queue] -= job.remaining_bits;
            pending_.push({t0 + used + job.extra_delay, job.owner, job.request_time});
            dq.pop_front();
            --q_[queue];
            --queued_;
        } else {
            job.remaining_bits -= capacity;
            queue_bits_[queue] -= capacity;
            served += capacity;
            capacity = 0.0;
        }
    }
    if (dq.empty()) queue_bits_[queue] = 0.0;
    if (lb) record_lower_bound_service(*lb, served, lb_state_);
    return served > 0.0 ? queue : n_;
}

SimReport Simulation::run() {
    long long slot = 0;
    long long last_alpha_check = 0;
    while (!done_) {
        const bool empty = queued_ == 0;
        if (empty) {
            double next = first_arrival_;
            if (!pending_.empty()) next = std::min(next, pending_.top().time);
            const long long jump = static_cast<long long>(std::floor(next / tau_));
            if (jump > slot) {
                if (alpha_est_) {
                    const long long idle = std::min<long long>(jump - slot, cfg_.alpha_window_slots);
                    for (long long k = 0; k < idle; ++k) alpha_est_->push(-1);
                }
                slot = jump;
            }
        }
        const double t1 = static_cast<double>(slot + 1) * tau_;

        std::size_t served_queue = n_;
        if (!empty) served_queue = serve_slot(slot);
        if (alpha_est_) {
            alpha_est_->push(served_queue < n_ ? group_of_[served_queue] : -1);
        }

        // Arrivals and completions inside [t0, t1) in time order.
        for (;;) {
            const std::size_t who = first_owner_;
            const double ta = first_arrival_;
            const double tc = pending_.empty() ? kInf : pending_.top().time;
            if (std::min(ta, tc) >= t1 || done_) break;
            if (tc <= ta) {
                const Completion c = pending_.top();
                pending_.pop();
                complete(c);
            } else {
                admit(who, ta);
            }
        }
        if (!done_) advance(t1);
        ++slot;

        if (alpha_est_ && slot - last_alpha_check >= cfg_.alpha_check_slots &&
            alpha_est_->filled() >= cfg_.alpha_window_slots) {
            last_alpha_check = slot;
            const auto alpha = alpha_est_->alpha();
            const bool needs_policy = user_dispatcher_ == Dispatcher::optimal || user_dispatcher_ == Dispatcher::heuristic;
            for (std::size_t l = 0; l < groups_.size(); ++l) {
                if (std::abs(alpha[l] - groups_[l].alpha) > cfg_.alpha_hysteresis) {
                    if (needs_policy) {
                        build_group(groups_[l], std::clamp(alpha[l], 0.01, 1.0));
                    } else {
                        groups_[l].alpha = alpha[l];
                    }
                }
            }
        }
    }

    SimReport r;
    Window total;
    total.reset(n_);
    std::vector<double> delays, powers;
    for (const auto& w : batches_) {
        total.absorb(w);
        if (w.completed > 0) delays.push_back(w.delay_sum / w.completed);
        powers.push_back(w.energy / w.duration);
    }
    r.batches = static_cast<int>(batches_.size());
    r.batch_length_s = batch_len_;
    r.measured_time_s = total.duration;
    r.mean_delay_s = total.completed > 0 ? total.delay_sum / total.completed : 0.0;
    r.delay_half_width = half_width(delays, cfg_.stopping.confidence);
    r.energy_j = total.energy;
    r.rerouting_power_w = total.duration > 0 ? total.energy / total.duration : 0.0;
    r.power_half_width = half_width(powers, cfg_.stopping.confidence);
    r.reroute_rate = Matrix(n_);
    for (std::size_t a = 0; a < n_; ++a) {
        for (std::size_t b = 0; b < n_; ++b) {
            r.reroute_rate(a, b) = total.duration > 0 ? total.reroutes[a * n_ + b] / total.duration : 0.0;
        }
    }
    r.mean_total_queue = total.duration > 0 ? total.area / total.duration : 0.0;
    r.littles_law_delay_s = r.mean_total_queue / total_lambda_;
    r.slots = slot;
    r.generated_by_owner = generated_;
    r.completed_by_owner = completed_;
    r.in_system_by_owner.assign(n_, 0);
    for (std::size_t i = 0; i < n_; ++i) r.in_system_by_owner[i] = generated_[i] - completed_[i];
    r.files_generated = std::accumulate(generated_.begin(), generated_.end(), 0LL);
    r.files_completed = std::accumulate(completed_.begin(), completed_.end(), 0LL);
    r.files_in_system = n_sys_;
    if (clustered_) {
        r.alpha = alpha_est_ && alpha_est_->filled() > 0 ? alpha_est_->alpha() : std::vector<double>{};
        if (r.alpha.empty()) {
            for (const auto& g : groups_) r.alpha.push_back(g.alpha);
        }
    }
    r.target_met = target_met_;
    return r;
}

}  // namespace

std::string to_string(Dispatcher d) {
    switch (d) {
        case Dispatcher::none: return "none";
        case Dispatcher::jsq: return "jsq";
        case Dispatcher::optimal: return "optimal";
        case Dispatcher::heuristic: return "heuristic";
        case Dispatcher::lower_bound: return "lower-bound";
    }
    return "none";
}

Dispatcher dispatcher_from_string(const std::string& name) {
    if (name == "none") return Dispatcher::none;
    if (name == "jsq") return Dispatcher::jsq;
    if (name == "optimal") return Dispatcher::optimal;
    if (name == "heuristic") return Dispatcher::heuristic;
    if (name == "lower-bound" || name == "lower_bound") return Dispatcher::lower_bound;
    throw InvalidInput("unknown dispatcher '" + name + "' (expected none, jsq, optimal, heuristic, lower-bound)");
}

double ScenarioConfig::total_arrival_rate() const {
    double s = 0.0;
    for (const auto& u : users) s += u.arrival_rate;
    return s;
}

void ScenarioConfig::validate() {
    const std::size_t n = users.size();
    if (n == 0) throw InvalidInput("users: at least one user is required");
    if (n > 30) throw InvalidInput("users: at most 30 users");
    for (std::size_t i = 0; i < n; ++i) {
        const auto& u = users[i];
        const std::string where = "users[" + std::to_string(i) + "]";
        if (!(u.distance_m > 0.0) || !std::isfinite(u.distance_m)) throw InvalidInput(where + ".distance_m must be > 0");
        if (!(u.arrival_rate >= 0.0) || !std::isfinite(u.arrival_rate)) {
            throw InvalidInput(where + ".arrival_rate must be >= 0");
        }
        if (!(u.mean_file_bytes > 0.0) || !std::isfinite(u.mean_file_bytes)) {
            throw InvalidInput(where + ".mean_file_bytes must be > 0");
        }
    }
    if (!(total_arrival_rate() > 0.0)) throw InvalidInput("users: total arrival rate must be > 0");
    channel.validate();
    if (scheduler.file_bits.empty()) {
        for (const auto& u : users) scheduler.file_bits.push_back(u.mean_file_bytes * 8.0);
    }
    scheduler.validate(n);
    if (costs.num_users() == 0) costs = CostModel::uniform(n, 0.0, 1.0, 0.0);
    costs.validate(n);
    if (fading.kind == FadingProcess::Kind::gauss_markov && !(fading.correlation >= 0.0 && fading.correlation < 1.0)) {
        throw InvalidInput("fading.correlation must be in [0, 1)");
    }
    if (dp_truncation < 0) throw InvalidInput("dp_truncation must be >= 0");
    if (heuristic_truncation < 1) throw InvalidInput("heuristic_truncation must be >= 1");
    if (!(solver.tolerance > 0.0)) throw InvalidInput("solver.tolerance must be > 0");
    if (solver.max_iterations < 1) throw InvalidInput("solver.max_iterations must be >= 1");
    if (!clusters.empty()) {
        std::vector<int> seen(n, 0);
        for (const auto& c : clusters) {
            if (c.empty()) throw InvalidInput("clusters: empty cluster");
            for (int u : c) {
                if (u < 0 || static_cast<std::size_t>(u) >= n) throw InvalidInput("clusters: user index out of range");
                ++seen[u];
            }
        }
        if (std::any_of(seen.begin(), seen.end(), [](int s) { return s != 1; })) {
            throw InvalidInput("clusters: must partition the users");
        }
    }
    if (alpha_window_slots < 1 || alpha_check_slots < 1) throw InvalidInput("alpha window and cadence must be >= 1");
    const auto& s = stopping;
    if (!(s.relative_half_width > 0.0)) throw InvalidInput("stopping.relative_half_width must be > 0");
    if (!(s.confidence > 0.0 && s.confidence < 1.0)) throw InvalidInput("stopping.confidence must be in (0, 1)");
    if (s.min_batches < 2) throw InvalidInput("stopping.min_batches must be >= 2");
    if (!(s.initial_batch_arrivals > 0.0)) throw InvalidInput("stopping.initial_batch_arrivals must be > 0");
    if (!(s.warmup_fraction >= 0.0)) throw InvalidInput("stopping.warmup_fraction must be >= 0");
    if (!(s.power_floor_w >= 0.0)) throw InvalidInput("stopping.power_floor_w must be >= 0");
    if (!(s.max_sim_time_s > 0.0)) throw InvalidInput("stopping.max_sim_time_s must be > 0");
    if (instability_backlog < 1 || instability_batches < 2) throw InvalidInput("instability limits must be positive");
}

SimReport run(ScenarioConfig config) { return Simulation(std::move(config)).run(); }

MdpProblem dispatch_problem(ScenarioConfig config, int truncation) {
    config.validate();
    const std::size_t n = config.num_users();
    if (truncation <= 0) truncation = config.dp_truncation > 0 ? config.dp_truncation : (n == 2 ? 40 : 20);
    std::vector<ChannelModel> models;
    std::vector<double> lam, bits;
    for (const auto& u : config.users) {
        models.push_back(discretize(config.channel, u.distance_m));
        lam.push_back(u.arrival_rate);
        bits.push_back(u.mean_file_bytes * 8.0);
    }
    CostModel costs = config.costs;
    if (config.local_link_congested) {
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = 0; b < n; ++b) {
                if (a != b) costs.phi(a, b) = std::numeric_limits<double>::infinity();
            }
        }
    }
    const std::vector<int> trunc(n, truncation);
    const auto table = ServiceRateTable::build(config.scheduler, models, trunc);
    return MdpProblem::build(lam, table, bits, costs, trunc);
}

std::size_t jsq_dispatch(std::span<const double> workloads, std::size_t owner, std::span<const bool> allowed) {
    if (owner >= workloads.size()) throw InvalidInput("jsq_dispatch: owner out of range");
    if (!allowed.empty() && allowed.size() != workloads.size()) throw InvalidInput("jsq_dispatch: mask length");
    std::size_t best = owner;
    for (std::size_t i = 0; i < workloads.size(); ++i) {
        if (!allowed.empty() && !allowed[i]) continue;
        if (workloads[i] < workloads[best]) best = i;
    }
    return best;
}

LowerBoundDecision lower_bound_schedule(std::span<const double> rates, std::span<const int> q,
                                        std::span<const int> hol_owner, const LowerBoundState& state) {
    const std::size_t n = rates.size();
    if (q.size() != n || hol_owner.size() != n) throw InvalidInput("lower_bound_schedule: size mismatch");
    LowerBoundDecision d;
    std::size_t j = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (rates[i] > rates[j]) j = i;
    }
    if (q[j] > 0) return d;

    auto longest = [&](auto pred) {
        std::size_t best = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (q[i] > 0 && pred(i) && (best == n || q[i] > q[best])) best = i;
        }
        return best;
    };
    d.via = j;
    if (const auto k = longest([&](std::size_t i) { return hol_owner[i] == static_cast<int>(j); }); k < n) {
        d.step = 4;
        d.queue = k;
        return d;
    }
    if (const auto k = longest([&](std::size_t i) { return hol_owner[i] >= 0 && hol_owner[i] != static_cast<int>(i); });
        k < n) {
        d.step = 8;
        d.queue = k;
        return d;
    }
    if (state.theta_bs < 0.0) {
        if (const auto k = longest([](std::size_t) { return true; }); k < n) {
            d.step = 12;
            d.queue = k;
            return d;
        }
    }
    d.via = 0;
    return d;
}

void record_lower_bound_service(const LowerBoundDecision& decision, double bits, LowerBoundState& state) {
    if (decision.step == 4) state.theta_bs -= bits;
    if (decision.step == 12) state.theta_bs += bits;
}

std::vector<TradeoffRow> measure_tradeoff(const ScenarioConfig& config, std::vector<double> weights) {
    for (double w : weights) {
        if (!(w >= 0.0)) throw InvalidInput("weights must be >= 0");
    }
    std::sort(weights.begin(), weights.end());
    std::vector<TradeoffRow> rows;
    for (double w : weights) {
        ScenarioConfig c = config;
        c.validate();
        for (std::size_t a = 0; a < c.num_users(); ++a) {
            for (std::size_t b = 0; b < c.num_users(); ++b) c.costs.weights(a, b) = a == b ? 0.0 : w;
        }
        rows.push_back({w, run(std::move(c))});
    }
    return rows;
}

}  // namespace tspread
