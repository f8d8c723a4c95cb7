#include "tspread/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tspread {

namespace {

constexpr double kTieRel = 1e-12;

bool ties(double a, double b) { return std::abs(a - b) <= kTieRel * std::max(std::abs(a), std::abs(b)); }

void check_lengths(std::size_t n, std::span<const int> q, std::span<const int> c,
                   std::span<const ChannelModel> models) {
    if (q.size() != n || c.size() != n || models.size() != n) {
        throw InvalidInput("scheduler: queue, channel and model vectors must have equal length");
    }
}

double user_metric(const SchedulerPolicy& policy, std::size_t i, int qi, int ci, const ChannelModel& model) {
    const double r = model.rate(ci);
    switch (policy.kind) {
        case SchedulerKind::greedy:
            return r;
        case SchedulerKind::log_rule: {
            const double mean = model.mean_rate();
            const double a = policy.log_rule_a.empty() ? 1.0 : policy.log_rule_a[i];
            const double normalized = mean > 0.0 ? r / mean : 0.0;
            return normalized * std::log(policy.log_rule_b + a * qi);
        }
        case SchedulerKind::lcq: {
            const double bits = policy.file_bits.empty() ? 1.0 : policy.file_bits[i];
            const double solo = model.mean_rate();
            return solo > 0.0 ? qi * bits / solo : 0.0;
        }
    }
    return 0.0;
}

}  // namespace

std::string to_string(SchedulerKind kind) {
    switch (kind) {
        case SchedulerKind::greedy: return "greedy";
        case SchedulerKind::log_rule: return "log-rule";
        case SchedulerKind::lcq: return "lcq";
    }
    return "?";
}

SchedulerKind scheduler_kind_from_string(const std::string& name) {
    if (name == "greedy") return SchedulerKind::greedy;
    if (name == "log-rule" || name == "log_rule") return SchedulerKind::log_rule;
    if (name == "lcq") return SchedulerKind::lcq;
    throw InvalidInput("unknown scheduler '" + name + "'");
}

void SchedulerPolicy::validate(std::size_t num_users) const {
    if (!(log_rule_b > 0.0)) throw InvalidInput("scheduler.log_rule_b must be positive");
    if (!log_rule_a.empty()) {
        if (log_rule_a.size() != num_users) throw InvalidInput("scheduler.log_rule_a needs one entry per user");
        for (double a : log_rule_a) {
            if (!(a > 0.0)) throw InvalidInput("scheduler.log_rule_a entries must be positive");
        }
    }
    if (!file_bits.empty()) {
        if (file_bits.size() != num_users) throw InvalidInput("scheduler.file_bits needs one entry per user");
        for (double b : file_bits) {
            if (!(b > 0.0)) throw InvalidInput("scheduler.file_bits entries must be positive");
        }
    }
}

void select_into(const SchedulerPolicy& policy, std::span<const int> q, std::span<const int> c,
                 std::span<const ChannelModel> models, std::span<double> out) {
    const std::size_t n = q.size();
    check_lengths(n, q, c, models);
    if (out.size() != n) throw InvalidInput("scheduler: output span has wrong length");

    const bool minimize = policy.kind == SchedulerKind::log_rule && policy.log_rule_argmin;
    double best = minimize ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    int count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = 0.0;
        if (q[i] < 0) throw InvalidInput("scheduler: negative queue length");
        if (q[i] == 0) continue;
        if (policy.kind == SchedulerKind::lcq && models[i].rate(c[i]) <= 0.0) continue;
        const double m = user_metric(policy, i, q[i], c[i], models[i]);
        if (count > 0 && ties(m, best)) {
            out[i] = 1.0;
            ++count;
        } else if (count == 0 || (minimize ? m < best : m > best)) {
            for (std::size_t k = 0; k < i; ++k) out[k] = 0.0;
            out[i] = 1.0;
            best = m;
            count = 1;
        }
    }
    if (count > 1) {
        const double share = 1.0 / count;
        for (std::size_t i = 0; i < n; ++i) out[i] *= share;
    }
}

std::vector<double> select(const SchedulerPolicy& policy, std::span<const int> q, std::span<const int> c,
                           std::span<const ChannelModel> models) {
    std::vector<double> out(q.size());
    select_into(policy, q, c, models, out);
    return out;
}

RateEstimate average_rates(const SchedulerPolicy& policy, std::span<const int> q,
                           std::span<const ChannelModel> models, const RateOptions& options) {
    const std::size_t n = q.size();
    if (models.size() != n) throw InvalidInput("average_rates: queue and model vectors differ in length");
    RateEstimate est;
    est.rates.assign(n, 0.0);
    est.std_error.assign(n, 0.0);
    if (n == 0) return est;

    double combos = 1.0;
    for (const auto& m : models) combos *= m.num_states();

    std::vector<int> c(n, 0);
    std::vector<double> xi(n, 0.0);
    if (combos <= static_cast<double>(options.enumeration_limit)) {
        while (true) {
            double prob = 1.0;
            for (std::size_t j = 0; j < n; ++j) prob *= models[j].state(c[j]).probability;
            if (prob > 0.0) {
                select_into(policy, q, c, models, xi);
                for (std::size_t i = 0; i < n; ++i) {
                    if (xi[i] > 0.0) est.rates[i] += prob * xi[i] * models[i].rate(c[i]);
                }
            }
            std::size_t pos = 0;
            while (pos < n && ++c[pos] == models[pos].num_states()) c[pos++] = 0;
            if (pos == n) break;
        }
        return est;
    }

    est.exact = false;
    Rng rng(options.mc_seed);
    std::vector<double> sum_sq(n, 0.0);
    const auto samples = static_cast<double>(options.mc_samples);
    for (std::size_t s = 0; s < options.mc_samples; ++s) {
        for (std::size_t j = 0; j < n; ++j) c[j] = models[j].sample(uniform01(rng));
        select_into(policy, q, c, models, xi);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = xi[i] * models[i].rate(c[i]);
            est.rates[i] += x;
            sum_sq[i] += x * x;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double mean = est.rates[i] / samples;
        const double var = std::max(0.0, sum_sq[i] / samples - mean * mean);
        est.rates[i] = mean;
        est.std_error[i] = std::sqrt(var / samples);
    }
    return est;
}

std::uint32_t nonempty_mask(std::span<const int> q) {
    std::uint32_t mask = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (q[i] > 0) mask |= (std::uint32_t{1} << i);
    }
    return mask;
}

ServiceRateTable ServiceRateTable::build(const SchedulerPolicy& policy, std::span<const ChannelModel> models,
                                         std::span<const int> truncation, const RateOptions& options,
                                         std::size_t max_entries) {
    const std::size_t n = models.size();
    if (n == 0 || n > 30) throw InvalidInput("rate table: user count must be in [1, 30]");
    if (truncation.size() != n) throw InvalidInput("rate table: truncation needs one entry per user");
    for (int t : truncation) {
        if (t < 1) throw InvalidInput("rate table: truncation must be >= 1");
    }
    policy.validate(n);

    ServiceRateTable table;
    table.scheduler_ = policy;
    table.num_users_ = n;
    table.mask_indexed_ = !policy.queue_aware();
    table.truncation_.assign(truncation.begin(), truncation.end());

    std::vector<int> q(n, 0);
    if (table.mask_indexed_) {
        const std::size_t entries = std::size_t{1} << n;
        if (entries > max_entries) throw ResourceError("rate table: mask count exceeds configured cap");
        table.rates_.resize(entries * n);
        for (std::size_t mask = 0; mask < entries; ++mask) {
            for (std::size_t i = 0; i < n; ++i) q[i] = (mask >> i) & 1U;
            const auto est = average_rates(policy, q, models, options);
            std::copy(est.rates.begin(), est.rates.end(), table.rates_.begin() + static_cast<long>(mask * n));
        }
        return table;
    }

    double entries_d = 1.0;
    for (int t : truncation) entries_d *= (t + 1);
    if (entries_d > static_cast<double>(max_entries)) {
        throw ResourceError("rate table: truncated queue grid exceeds configured cap");
    }
    const auto entries = static_cast<std::size_t>(entries_d);
    table.rates_.resize(entries * n);
    for (std::size_t e = 0; e < entries; ++e) {
        const auto est = average_rates(policy, q, models, options);
        std::copy(est.rates.begin(), est.rates.end(), table.rates_.begin() + static_cast<long>(e * n));
        std::size_t pos = 0;
        while (pos < n && ++q[pos] > truncation[pos]) q[pos++] = 0;
    }
    return table;
}

ServiceRateTable ServiceRateTable::from_mask_rates(std::size_t num_users, std::vector<std::vector<double>> rates) {
    if (num_users == 0 || num_users > 30) throw InvalidInput("rate table: user count must be in [1, 30]");
    if (rates.size() != (std::size_t{1} << num_users)) throw InvalidInput("rate table: need one row per mask");
    ServiceRateTable table;
    table.num_users_ = num_users;
    table.mask_indexed_ = true;
    table.truncation_.assign(num_users, std::numeric_limits<int>::max());
    for (const auto& row : rates) {
        if (row.size() != num_users) throw InvalidInput("rate table: row length must equal user count");
        table.rates_.insert(table.rates_.end(), row.begin(), row.end());
    }
    return table;
}

std::span<const double> ServiceRateTable::by_mask(std::uint32_t mask) const {
    if (!mask_indexed_) throw InvalidInput("rate table: mask lookup on a queue-indexed table");
    return {rates_.data() + static_cast<std::size_t>(mask) * num_users_, num_users_};
}

std::span<const double> ServiceRateTable::lookup(std::span<const int> q) const {
    if (q.size() != num_users_) throw InvalidInput("rate table: queue vector has wrong length");
    if (mask_indexed_) return by_mask(nonempty_mask(q));
    std::size_t index = 0;
    std::size_t stride = 1;
    for (std::size_t i = 0; i < num_users_; ++i) {
        const int qi = std::clamp(q[i], 0, truncation_[i]);
        index += static_cast<std::size_t>(qi) * stride;
        stride *= static_cast<std::size_t>(truncation_[i]) + 1;
    }
    return {rates_.data() + index * num_users_, num_users_};
}

ServiceRateTable ServiceRateTable::scaled(double factor) const {
    if (!(factor >= 0.0) || !std::isfinite(factor)) throw InvalidInput("rate table: scale factor must be finite and >= 0");
    ServiceRateTable out = *this;
    for (auto& r : out.rates_) r *= factor;
    return out;
}

double ServiceRateTable::max_total_rate() const {
    double best = 0.0;
    for (std::size_t e = 0; e < size(); ++e) {
        double total = 0.0;
        for (std::size_t i = 0; i < num_users_; ++i) total += std::abs(rates_[e * num_users_ + i]);
        best = std::max(best, total);
    }
    return best;
}

}  // namespace tspread
