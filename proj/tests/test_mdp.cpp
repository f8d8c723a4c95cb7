#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "tspread/mdp.hpp"
#include "tspread/structure.hpp"

using namespace tspread;

namespace {

// Two users with constant per-queue service rate mu whenever the queue is non-empty.
MdpProblem constant_rate_problem(double lambda, double mu, double w, int truncation) {
    return MdpProblem::from_rates(
        {lambda, lambda}, {truncation, truncation},
        [mu](std::span<const int> q, std::span<double> out) {
            for (std::size_t i = 0; i < q.size(); ++i) out[i] = q[i] > 0 ? mu : 0.0;
        },
        CostModel::uniform(2, 0.0, 1.0, w));
}

MdpProblem greedy_problem(double lambda, double w, int truncation) {
    ChannelConfig cfg;
    std::vector<ChannelModel> models(2, discretize(cfg, 100.0));
    SchedulerPolicy g;
    const std::vector<int> trunc{truncation, truncation};
    const auto table = ServiceRateTable::build(g, models, trunc);
    const std::vector<double> bits{8e6, 8e6};
    return MdpProblem::build({lambda, lambda}, table, bits, CostModel::uniform(2, 0.0, 1.0, w), trunc);
}

}  // namespace

TEST_CASE("arrival_rates_under") {
    const std::vector<double> lam{0.1, 0.25};
    CHECK(arrival_rates_under(std::vector<int>{0, 1}, lam) == lam);
    CHECK(arrival_rates_under(std::vector<int>{0, 0}, lam) == std::vector<double>{0.35, 0.0});

    Rng rng(3);
    const std::vector<double> four{0.1, 0.2, 0.3, 0.45};
    for (int k = 0; k < 20; ++k) {
        std::vector<int> action(4);
        for (auto& a : action) a = static_cast<int>(rng() % 4);
        const auto out = arrival_rates_under(action, four);
        CHECK(std::accumulate(out.begin(), out.end(), 0.0) == doctest::Approx(1.05).epsilon(1e-15));
    }
}

TEST_CASE("stage cost") {
    const auto p = constant_rate_problem(0.2, 1.0, 5.0, 10);
    CHECK(stage_cost(std::vector<int>{0, 0}, std::vector<int>{0, 1}, p) == 0.0);
    CHECK(stage_cost(std::vector<int>{2, 3}, std::vector<int>{0, 1}, p) == doctest::Approx(12.5));
    const double phi_u = p.uniformization_rate();
    CHECK(phi_u == doctest::Approx(0.4 + 2.0));
    CHECK(stage_cost(std::vector<int>{0, 5}, std::vector<int>{0, 0}, p) ==
          doctest::Approx(5 / 0.4 + 0.2 / phi_u * 5.0));

    CHECK_THROWS_AS(MdpProblem::from_rates(
                        {0.0, 0.0}, {3, 3}, [](std::span<const int>, std::span<double> out) { out[0] = out[1] = 1; },
                        CostModel::uniform(2, 0, 1, 0)),
                    InvalidInput);
}

TEST_CASE("bellman backup at the empty state with h = 0") {
    const auto p = greedy_problem(0.2, 0.0, 10);
    const std::vector<double> h(p.space().size(), 0.0);
    const auto b = bellman_backup(h, p, 0);
    CHECK(b.value == 0.0);
    CHECK(b.action == Action{0, 1});
}

TEST_CASE("bellman backup against a hand-built value function") {
    for (double w : {5.0, 25.0}) {
        const auto p = constant_rate_problem(0.3, 1.0, w, 10);
        std::vector<double> h(p.space().size());
        auto hv = [](int a, int b) { return double((a - b) * (a - b) + a + b); };
        for (std::size_t s = 0; s < h.size(); ++s) {
            const auto q = p.space().decode(s);
            h[s] = hv(q[0], q[1]);
        }
        const double phi = 2.6;
        REQUIRE(p.uniformization_rate() == doctest::Approx(phi));
        // q = (0,5): only queue 2 drains; user 1 keeps its arrival (h(1,5) = 22 < h(0,6) + w);
        // user 2 reroutes to queue 1 iff w < h(0,6) - h(1,5) = 20.
        const double own2 = hv(0, 6), moved2 = w + hv(1, 5);
        const double expected = 5 / 0.6 + 1.0 / phi * hv(0, 4) + (1 - 1.6 / phi) * hv(0, 5) +
                                0.3 / phi * std::min(hv(1, 5), w + hv(0, 6)) + 0.3 / phi * std::min(own2, moved2);
        const auto b = bellman_backup(h, p, p.space().index(std::vector<int>{0, 5}));
        CHECK(b.value == doctest::Approx(expected).epsilon(1e-14));
        CHECK(b.action[0] == 0);
        CHECK(b.action[1] == (w < 20 ? 0 : 1));
    }
}

TEST_CASE("deterministic per-source argmin beats randomized dispatch") {
    const auto p = greedy_problem(0.25, 5.0, 20);
    const auto sol = solve(p);
    Rng rng(11);
    const auto check = check_deterministic_optimality(p, sol.h, 50, 100, rng);
    CHECK(check.ok);
    CHECK(check.states_checked == 50);
    CHECK(check.samples == 5000);
    CHECK(check.worst_margin >= -1e-12);

    // Also at an arbitrary non-optimal h.
    std::vector<double> h(p.space().size());
    for (auto& v : h) v = 50 * uniform01(rng);
    CHECK(check_deterministic_optimality(p, h, 50, 100, rng).ok);
}

TEST_CASE("transition probabilities sum to one") {
    const auto p = greedy_problem(0.3, 5.0, 25);
    const auto none = check_transitions(p);
    CHECK(none.ok);
    CHECK(none.min_probability >= 0.0);
    CHECK(none.max_row_error <= 1e-12);
    const auto sol = solve(p);
    const auto with = check_transitions(p, &sol);
    CHECK(with.ok);

    auto broken = greedy_problem(0.3, 5.0, 25);
    broken.poke_rate(5, 0, 10 * broken.uniformization_rate());
    CHECK_FALSE(check_transitions(broken).ok);
}

TEST_CASE("uniformization rate") {
    const auto p = greedy_problem(0.2, 0.0, 10);
    CHECK(p.uniformization_rate() == doctest::Approx(0.4 + p.max_total_rate()).epsilon(1e-15));
    auto q = p;
    CHECK_THROWS_AS(q.set_uniformization_rate(0.3), InvalidInput);
    q.set_uniformization_rate(5.0);
    CHECK(q.uniformization_rate() == 5.0);
}

TEST_CASE("gain invariance and policy stationarity") {
    const auto p = greedy_problem(0.2, 5.0, 30);
    SolveOptions opts;
    const auto g = check_gain_reference(p, opts);
    CHECK(g.ok);
    CHECK(g.shift < 10 * opts.tolerance);

    const auto sol = solve(p);
    SolveOptions warm;
    warm.initial_h = sol.h;
    const auto again = solve(p, warm);
    CHECK(again.policy == sol.policy);
    CHECK(again.iterations < sol.iterations);
}

TEST_CASE("gain matches the stationary cost of the returned policy") {
    const auto p = greedy_problem(0.25, 5.0, 30);
    const auto sol = solve(p);
    const auto m = evaluate_policy(p, sol);
    CHECK(sol.gain == doctest::Approx(m.mean_delay_s + m.reroute_penalty_rate / p.uniformization_rate()).epsilon(1e-6));
}

TEST_CASE("light-traffic limit") {
    // With lambda -> 0 the gain tends to the solo service time 1/mu, and nothing is rerouted at the origin.
    const auto p = constant_rate_problem(1e-4, 1.0, 0.0, 4);
    const auto sol = solve(p);
    CHECK(sol.gain == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(sol.action(std::vector<int>{0, 0}) == Action{0, 1});
}

TEST_CASE("w = 0 dispatches to the shorter queue") {
    const int T = 40;
    const auto p = greedy_problem(0.2, 0.0, T);
    const auto sol = solve(p);
    const auto jsq = compare_with_jsq(p, sol);
    MESSAGE("agree " << jsq.agree << " disagree " << jsq.disagree << " ties " << jsq.ties);
    CHECK(jsq.fraction() >= 0.98);
    // Near the origin the value gaps are large and the match is exact.
    for (int a = 0; a < 12; ++a) {
        for (int b = 0; b < 12; ++b) {
            if (a == b) continue;
            const int shorter = a < b ? 0 : 1;
            CHECK(sol.action(std::vector<int>{a, b}) == Action{shorter, shorter});
        }
    }
}

TEST_CASE("huge weight: no rerouting away from the full faces") {
    const int T = 30;
    const auto p = greedy_problem(0.2, 1e6, T);
    const auto sol = solve(p);
    for (std::size_t s = 0; s < p.space().size(); ++s) {
        const auto q = p.space().decode(s);
        for (int j = 0; j < 2; ++j) {
            if (q[j] < T) {
                CHECK(sol.target(s, j) == j);
            } else if (q[1 - j] < T) {
                CHECK(sol.target(s, j) == 1 - j);  // a full queue accepts nothing
            }
        }
    }
}

TEST_CASE("truncation insensitivity") {
    // Forced rerouting off the full faces reaches a few cells into the box; beyond that the
    // 30 and 40 boxes give the same policy.
    for (double w : {0.0, 5.0, 30.0}) {
        const auto small = solve(greedy_problem(0.2, w, 30));
        const auto large = solve(greedy_problem(0.2, w, 40));
        for (int a = 0; a <= 25; ++a) {
            for (int b = 0; b <= 25; ++b) {
                const std::vector<int> q{a, b};
                CHECK(small.action(q) == large.action(q));
            }
        }
    }
}

TEST_CASE("solver reports non-convergence") {
    const auto p = greedy_problem(0.2, 5.0, 20);
    SolveOptions opts;
    opts.max_iterations = 5;
    try {
        solve(p, opts);
        FAIL("expected SolverError");
    } catch (const SolverError& e) {
        CHECK(e.iterations == 5);
        CHECK(e.last_span > opts.tolerance);
    }
}

TEST_CASE("state space indexing") {
    const StateSpace space({3, 4, 2});
    CHECK(space.size() == 4 * 5 * 3);
    for (std::size_t s = 0; s < space.size(); ++s) CHECK(space.index(space.decode(s)) == s);
    CHECK(space.clamped_index(std::vector<int>{9, -1, 2}) == space.index(std::vector<int>{3, 0, 2}));
    CHECK_FALSE(space.contains(std::vector<int>{4, 0, 0}));
    CHECK_THROWS_AS(StateSpace({-1, 2}), InvalidInput);
}

TEST_CASE("cost model") {
    auto c = CostModel::uniform(3, 0.5, 2.0, 3.0);
    CHECK(c.penalty(0, 1) == 6.5);
    CHECK(c.homogeneous());
    c.phi(0, 2) = std::numeric_limits<double>::infinity();
    CHECK(std::isinf(c.penalty(0, 2)));
    CHECK_FALSE(c.homogeneous());
    c.eta(1, 1) = 1.0;
    CHECK_THROWS_AS(c.validate(3), InvalidInput);
}
