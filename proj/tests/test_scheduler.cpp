#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "tspread/scheduler.hpp"

using namespace tspread;

namespace {

std::vector<ChannelModel> onoff_pair(double p1, double p2, double snr_on = 6.0) {
    return {ChannelModel::on_off(p1, 1.4e6, snr_on), ChannelModel::on_off(p2, 1.4e6, snr_on)};
}

std::vector<ChannelModel> rayleigh(std::vector<double> distances, int k = 8, double bandwidth = 1.4e6) {
    ChannelConfig cfg;
    cfg.num_states = k;
    cfg.bandwidth_hz = bandwidth;
    std::vector<ChannelModel> out;
    for (double d : distances) out.push_back(discretize(cfg, d));
    return out;
}

SchedulerPolicy policy(SchedulerKind kind) {
    SchedulerPolicy p;
    p.kind = kind;
    return p;
}

}  // namespace

TEST_CASE("greedy selection") {
    const auto models = rayleigh({100, 100});
    const std::vector<int> c{3, 7};
    auto xi = select(policy(SchedulerKind::greedy), std::vector<int>{3, 0}, c, models);
    CHECK(xi == std::vector<double>{1.0, 0.0});

    xi = select(policy(SchedulerKind::greedy), std::vector<int>{1, 1}, std::vector<int>{5, 5}, models);
    CHECK(xi == std::vector<double>{0.5, 0.5});

    xi = select(policy(SchedulerKind::greedy), std::vector<int>{1, 1}, c, models);
    CHECK(xi == std::vector<double>{0.0, 1.0});

    xi = select(policy(SchedulerKind::greedy), std::vector<int>{0, 0}, c, models);
    CHECK(xi == std::vector<double>{0.0, 0.0});

    CHECK_THROWS_AS(select(policy(SchedulerKind::greedy), std::vector<int>{1, 1, 1}, c, models), InvalidInput);
}

TEST_CASE("lcq selection serves the longest connected queue") {
    const auto models = onoff_pair(0.5, 0.5);
    const auto lcq = policy(SchedulerKind::lcq);
    CHECK(select(lcq, std::vector<int>{2, 2}, std::vector<int>{1, 1}, models) == std::vector<double>{0.5, 0.5});
    CHECK(select(lcq, std::vector<int>{2, 5}, std::vector<int>{1, 1}, models) == std::vector<double>{0.0, 1.0});
    CHECK(select(lcq, std::vector<int>{2, 5}, std::vector<int>{1, 0}, models) == std::vector<double>{1.0, 0.0});
    CHECK(select(lcq, std::vector<int>{2, 5}, std::vector<int>{0, 0}, models) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("log rule direction and flag") {
    const auto models = rayleigh({100, 100});
    auto lr = policy(SchedulerKind::log_rule);
    // Same channel state, longer queue has the larger log weight.
    CHECK(select(lr, std::vector<int>{1, 9}, std::vector<int>{4, 4}, models) == std::vector<double>{0.0, 1.0});
    lr.log_rule_argmin = true;
    CHECK(select(lr, std::vector<int>{1, 9}, std::vector<int>{4, 4}, models) == std::vector<double>{1.0, 0.0});
    lr.log_rule_b = 0.0;
    CHECK_THROWS_AS(lr.validate(2), InvalidInput);
}

TEST_CASE("average rates: two-user on/off greedy by hand enumeration") {
    const double p = 0.3;
    const auto models = onoff_pair(p, p);
    const double r = models[0].rate(1);
    const auto g = policy(SchedulerKind::greedy);

    // Channel vectors: (on,off) -> user 1 alone; (on,on) -> split; (off,*) -> rate 0.
    const auto both = average_rates(g, std::vector<int>{1, 1}, models);
    CHECK(both.exact);
    CHECK(both.rates[0] == doctest::Approx(r * (p * (1 - p) + p * p / 2)).epsilon(1e-14));
    CHECK(both.rates[1] == doctest::Approx(both.rates[0]).epsilon(1e-14));

    const auto empty = average_rates(g, std::vector<int>{0, 0}, models);
    CHECK(empty.rates == std::vector<double>{0.0, 0.0});

    const auto solo = average_rates(g, std::vector<int>{1, 0}, models);
    CHECK(solo.rates[0] == doctest::Approx(p * r).epsilon(1e-14));
    CHECK(solo.rates[1] == 0.0);
}

TEST_CASE("lcq two-user on/off rates, all three workload orderings") {
    const auto lcq = policy(SchedulerKind::lcq);
    for (auto [p1, p2] : {std::pair{0.4, 0.4}, std::pair{0.3, 0.7}, std::pair{0.9, 0.5}}) {
        const auto models = onoff_pair(p1, p2, 2.0);  // 1.4e6 bits/s when on
        const double r = models[0].rate(1);
        auto mu = [&](int a, int b) { return average_rates(lcq, std::vector<int>{a, b}, models).rates; };

        // Shorter queue is served only when the longer one is off.
        auto m = mu(1, 9);
        CHECK(m[0] == doctest::Approx(r * p1 * (1 - p2)));
        CHECK(m[1] == doctest::Approx(r * p2));
        m = mu(9, 1);
        CHECK(m[0] == doctest::Approx(r * p1));
        CHECK(m[1] == doctest::Approx(r * p2 * (1 - p1)));
        // Equal workload q_i / mu_solo_i is the tie case.
        const int t1 = static_cast<int>(std::lround(10 * p1)), t2 = static_cast<int>(std::lround(10 * p2));
        m = mu(t1, t2);
        CHECK(m[0] == doctest::Approx(r * (p1 - p1 * p2 / 2)));
        CHECK(m[1] == doctest::Approx(r * (p2 - p1 * p2 / 2)));
        if (p1 == p2) CHECK(m[0] == doctest::Approx(r * (p1 + p2 - p1 * p2) / 2));
        // Conservation of the served fraction.
        CHECK(mu(2, 5)[0] + mu(2, 5)[1] == doctest::Approx(r * (p1 + p2 - p1 * p2)));
    }
}

TEST_CASE("rate invariants over random states") {
    const auto models = rayleigh({60, 100, 140});
    Rng rng(1);
    for (auto kind : {SchedulerKind::greedy, SchedulerKind::log_rule, SchedulerKind::lcq}) {
        const auto pol = policy(kind);
        double best_rate = 0.0;
        for (const auto& m : models) best_rate = std::max(best_rate, m.rate(m.num_states() - 1));
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<int> q(3), c(3);
            for (int i = 0; i < 3; ++i) {
                q[i] = static_cast<int>(rng() % 4);
                c[i] = static_cast<int>(rng() % 8);
            }
            const auto xi = select(pol, q, c, models);
            double total = 0.0;
            for (int i = 0; i < 3; ++i) {
                total += xi[i];
                if (q[i] == 0) CHECK(xi[i] == 0.0);
            }
            const bool any = q[0] + q[1] + q[2] > 0;
            if (kind != SchedulerKind::lcq) CHECK(total == doctest::Approx(any ? 1.0 : 0.0));

            const auto mu = average_rates(pol, q, models).rates;
            double sum = 0.0;
            for (int i = 0; i < 3; ++i) {
                if (q[i] == 0) CHECK(mu[i] == 0.0);
                sum += mu[i];
            }
            CHECK(sum <= best_rate * (1 + 1e-12));
        }
    }
}

TEST_CASE("greedy: competitors never raise a user's own rate; opportunistic gain") {
    const auto models = rayleigh({100, 100, 100});
    const auto g = policy(SchedulerKind::greedy);
    const auto table = ServiceRateTable::build(g, models, std::vector<int>{5, 5, 5});
    for (std::uint32_t mask = 1; mask < 8; ++mask) {
        for (int i = 0; i < 3; ++i) {
            if (!(mask >> i & 1U)) continue;
            CHECK(table.by_mask(1U << i)[i] >= table.by_mask(mask)[i]);
        }
    }
    const auto all = table.by_mask(7);
    const double total = all[0] + all[1] + all[2];
    for (int j = 0; j < 3; ++j) CHECK(total >= table.by_mask(1U << j)[j]);
}

TEST_CASE("average rates scale linearly with the rate alphabet") {
    const auto base = rayleigh({80, 100});
    const auto scaled = rayleigh({80, 100}, 8, 1.4e6 * 2.5);
    for (auto kind : {SchedulerKind::greedy, SchedulerKind::log_rule, SchedulerKind::lcq}) {
        const auto a = average_rates(policy(kind), std::vector<int>{2, 3}, base).rates;
        const auto b = average_rates(policy(kind), std::vector<int>{2, 3}, scaled).rates;
        CHECK(b[0] == doctest::Approx(2.5 * a[0]).epsilon(1e-12));
        CHECK(b[1] == doctest::Approx(2.5 * a[1]).epsilon(1e-12));
    }
}

TEST_CASE("monte-carlo fallback agrees with enumeration") {
    const auto models = rayleigh({70, 100, 120});
    RateOptions mc;
    mc.enumeration_limit = 10;
    mc.mc_samples = 400000;
    const std::vector<int> q{1, 2, 1};
    const auto exact = average_rates(policy(SchedulerKind::greedy), q, models);
    const auto est = average_rates(policy(SchedulerKind::greedy), q, models, mc);
    CHECK_FALSE(est.exact);
    for (int i = 0; i < 3; ++i) {
        CHECK(est.std_error[i] > 0.0);
        CHECK(std::abs(est.rates[i] - exact.rates[i]) <= 4.0 * est.std_error[i]);
    }
}

TEST_CASE("rate tables") {
    const auto models = rayleigh({92, 100});
    const std::vector<int> trunc{30, 30};

    const auto greedy = ServiceRateTable::build(policy(SchedulerKind::greedy), models, trunc);
    CHECK(greedy.mask_indexed());
    CHECK(greedy.size() == 4);

    const auto logr = ServiceRateTable::build(policy(SchedulerKind::log_rule), models, trunc);
    CHECK_FALSE(logr.mask_indexed());
    CHECK(logr.size() == 31 * 31);

    Rng rng(9);
    for (int k = 0; k < 100; ++k) {
        const std::vector<int> q{static_cast<int>(rng() % 31), static_cast<int>(rng() % 31)};
        for (const auto* table : {&greedy, &logr}) {
            const auto direct = average_rates(table->scheduler(), q, models).rates;
            const auto looked = table->lookup(q);
            CHECK(looked[0] == direct[0]);
            CHECK(looked[1] == direct[1]);
        }
    }
    CHECK_THROWS_AS(ServiceRateTable::build(policy(SchedulerKind::log_rule), models, trunc, {}, 500), ResourceError);
    CHECK_THROWS_AS(ServiceRateTable::build(policy(SchedulerKind::greedy), models, std::vector<int>{0, 3}), InvalidInput);
}
