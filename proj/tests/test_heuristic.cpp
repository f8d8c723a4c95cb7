#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <thread>

#include "tspread/heuristic.hpp"

using namespace tspread;

namespace {

struct Setup {
    std::vector<ChannelModel> models;
    ServiceRateTable table;
    std::vector<double> bits;
};

Setup greedy_setup(std::size_t n, int truncation) {
    ChannelConfig cfg;
    Setup s;
    s.models.assign(n, discretize(cfg, 100.0));
    s.table = ServiceRateTable::build(SchedulerPolicy{}, s.models, std::vector<int>(n, truncation));
    s.bits.assign(n, 8e6);
    return s;
}

}  // namespace

TEST_CASE("least workload user") {
    CHECK(least_workload_user(std::vector<int>{0, 5}, std::vector<double>{1, 1}) == 0);
    CHECK(least_workload_user(std::vector<int>{5, 0}, std::vector<double>{1, 1}) == 1);
    CHECK(least_workload_user(std::vector<int>{4, 2}, std::vector<double>{2, 1}) == 0);
    // Equal bit rates, 1 MB vs 2 MB files: the 2 MB user clears half as many files per second.
    const double bitrate = 8e6;
    CHECK(least_workload_user(std::vector<int>{2, 2}, std::vector<double>{bitrate / 8e6, bitrate / 16e6}) == 0);
    CHECK_THROWS_AS(least_workload_user(std::vector<int>{1}, std::vector<double>{1, 1}), InvalidInput);
    CHECK_THROWS_AS(least_workload_user(std::vector<int>{1, 1}, std::vector<double>{1, 0}), InvalidInput);
}

TEST_CASE("cache keys") {
    ReducedProblem a;
    a.lambda[0] = 0.3;
    a.lambda[1] = 0.1;
    a.mu1_alone = std::exp(4000 * std::log1p(1e-4));  // a grid point
    a.mu1_both = 0.4;
    a.mu2_alone = 0.5;
    a.mu2_both = 0.2;
    a.phi[0] = a.phi[1] = 1.0;
    a.weight[0] = a.weight[1] = 5.0;
    CHECK(cache_key(a, 30) == cache_key(a, 30));
    CHECK(cache_key(a, 30) != cache_key(a, 20));

    ReducedProblem b = a;
    b.mu1_alone *= 1 + 5e-6;
    CHECK(cache_key(a, 30) == cache_key(b, 30));
    b.mu1_alone = a.mu1_alone * (1 + 3e-4);
    CHECK(cache_key(a, 30) != cache_key(b, 30));

    ReducedProblem c = a;
    c.weight[0] = std::nextafter(5.0, 6.0);
    CHECK(cache_key(a, 30) != cache_key(c, 30));

    // Swapped roles are not canonicalized.
    ReducedProblem swapped = a;
    std::swap(swapped.lambda[0], swapped.lambda[1]);
    std::swap(swapped.mu1_alone, swapped.mu2_alone);
    std::swap(swapped.mu1_both, swapped.mu2_both);
    CHECK(cache_key(a, 30) != cache_key(swapped, 30));

    const auto rep = representative(cache_key(a, 30));
    CHECK(rep.mu1_alone == doctest::Approx(a.mu1_alone).epsilon(1e-12));
    CHECK(std::abs(rep.mu2_both / a.mu2_both - 1) <= 5.1e-5);
    CHECK(rep.weight[0] == a.weight[0]);
}

TEST_CASE("two users: the heuristic is the optimal two-user policy") {
    const int T = 30;
    const auto s = greedy_setup(2, T);
    for (double w : {0.0, 5.0}) {
        const auto costs = CostModel::uniform(2, 0.0, 1.0, w);
        const auto model = HeuristicModel::build({0.2, 0.2}, s.table, s.bits, costs);
        const auto problem = MdpProblem::build({0.2, 0.2}, s.table, s.bits, costs, {T, T});
        const auto optimal = solve(problem);
        DpCache cache(T);
        std::size_t mismatches = 0;
        for (std::size_t st = 0; st < problem.space().size(); ++st) {
            const auto q = problem.space().decode(st);
            for (std::size_t i = 0; i < 2; ++i) {
                const auto d = dispatch(i, q, model, cache);
                CHECK(d.evaluations <= 1);
                if (d.target != static_cast<std::size_t>(optimal.target(st, i))) ++mismatches;
            }
        }
        CHECK(mismatches == 0);
        CHECK(cache.size() <= 2);
        CHECK(cache.hits() > 0);
    }
}

TEST_CASE("three users: dispatch matches the full dp at q = (9, 9, 0)") {
    const auto s = greedy_setup(3, 20);
    const std::vector<double> lam(3, 0.4 / 3);
    const auto costs = CostModel::uniform(3, 0.0, 1.0, 0.0);
    const auto full = solve(MdpProblem::build(lam, s.table, s.bits, costs, {20, 20, 20}));
    const std::vector<int> q{9, 9, 0};
    CHECK(full.action(q)[0] == 2);

    const auto model = HeuristicModel::build(lam, s.table, s.bits, costs);
    DpCache cache(30);
    const auto d = dispatch(0, q, model, cache);
    CHECK(d.target == 2);
    CHECK(d.evaluations == 1);
    // Arrival at the least loaded user is sent directly without consulting the cache.
    const auto direct = dispatch(2, q, model, cache);
    CHECK(direct.target == 2);
    CHECK(direct.evaluations == 0);
}

TEST_CASE("heuristic properties on random states") {
    const std::size_t n = 4;
    const auto s = greedy_setup(n, 20);
    const std::vector<double> lam(n, 0.08);
    const auto model = HeuristicModel::build(lam, s.table, s.bits, CostModel::uniform(n, 0.0, 1.0, 0.0));
    DpCache cache(20);
    DpCache fresh(20);
    Rng rng(17);
    for (int k = 0; k < 200; ++k) {
        std::vector<int> q(n);
        for (auto& v : q) v = static_cast<int>(rng() % 12);
        const std::size_t i = rng() % n;
        const auto d = dispatch(i, q, model, cache);
        CHECK(d.evaluations <= static_cast<int>(n) - 1);
        CHECK((d.target == i || d.target == least_workload_user(q, model.solo_rates())));
        // Homogeneous, w = 0: never towards more work.
        CHECK(q[d.target] <= q[i]);
        CHECK(dispatch(i, q, model, fresh).target == d.target);
    }
}

TEST_CASE("concurrent dispatch shares one cache") {
    const std::size_t n = 3;
    const auto s = greedy_setup(n, 20);
    const auto model = HeuristicModel::build(std::vector<double>(n, 0.12), s.table, s.bits,
                                             CostModel::uniform(n, 0.0, 1.0, 3.0));
    std::vector<std::vector<int>> states;
    Rng rng(2);
    for (int k = 0; k < 60; ++k) {
        std::vector<int> q(n);
        for (auto& v : q) v = static_cast<int>(rng() % 15);
        states.push_back(q);
    }
    DpCache serial_cache(20);
    std::vector<std::size_t> serial;
    for (const auto& q : states) serial.push_back(dispatch(0, q, model, serial_cache).target);

    DpCache shared(20);
    std::vector<std::vector<std::size_t>> results(4, std::vector<std::size_t>(states.size()));
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&, t] {
            for (std::size_t k = 0; k < states.size(); ++k) results[t][k] = dispatch(0, states[k], model, shared).target;
        });
    }
    for (auto& th : threads) th.join();
    for (const auto& r : results) CHECK(r == serial);
}

TEST_CASE("heuristic input validation") {
    const auto s = greedy_setup(2, 10);
    const auto model = HeuristicModel::build({0.2, 0.2}, s.table, s.bits, CostModel::uniform(2, 0, 1, 0));
    DpCache cache(10);
    CHECK_THROWS_AS(dispatch(2, std::vector<int>{1, 1}, model, cache), InvalidInput);
    CHECK_THROWS_AS(dispatch(0, std::vector<int>{1}, model, cache), InvalidInput);

    SchedulerPolicy lr;
    lr.kind = SchedulerKind::log_rule;
    const auto aware = ServiceRateTable::build(lr, s.models, std::vector<int>{5, 5});
    CHECK_THROWS_AS(HeuristicModel::build({0.2, 0.2}, aware, s.bits, CostModel::uniform(2, 0, 1, 0)), InvalidInput);
    CHECK_THROWS_AS(DpCache(0), InvalidInput);
}

TEST_CASE("solver failures carry the reduced problem") {
    SolveOptions opts;
    opts.max_iterations = 3;
    DpCache cache(10, opts);
    ReducedProblem r;
    r.lambda[0] = 0.3;
    r.lambda[1] = 0.1;
    r.mu1_alone = r.mu1_both = r.mu2_alone = r.mu2_both = 0.5;
    r.phi[0] = r.phi[1] = 1.0;
    try {
        cache.get(r);
        FAIL("expected SolverError");
    } catch (const SolverError& e) {
        CHECK(std::string(e.what()).find("reduced problem lambda=(") != std::string::npos);
    }
}
