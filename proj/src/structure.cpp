#include "tspread/structure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

namespace tspread {

std::string to_string(TwoUserAction action) {
    switch (action) {
        case TwoUserAction::none: return "NONE";
        case TwoUserAction::u1_to_u2: return "U1_TO_U2";
        case TwoUserAction::u2_to_u1: return "U2_TO_U1";
    }
    return "?";
}

TwoUserAction two_user_action(const MdpSolution& solution, std::size_t state) {
    if (solution.num_users() != 2) throw InvalidInput("two-user action requested from an N != 2 solution");
    const bool one_to_two = solution.target(state, 0) == 1;
    const bool two_to_one = solution.target(state, 1) == 0;
    if (one_to_two && two_to_one) throw InvalidInput("policy swaps both users' arrivals");
    if (one_to_two) return TwoUserAction::u1_to_u2;
    if (two_to_one) return TwoUserAction::u2_to_u1;
    return TwoUserAction::none;
}

bool SwitchingCurves::all_contiguous() const {
    return std::all_of(contiguous.begin(), contiguous.end(), [](bool b) { return b; });
}

SwitchingCurves extract_switching_curves(const MdpSolution& solution) {
    if (solution.num_users() != 2) throw InvalidInput("switching curves need a two-user solution");
    SwitchingCurves c;
    c.limit_q1 = solution.space.limit(0);
    c.limit_q2 = solution.space.limit(1);
    for (int q1 = 0; q1 <= c.limit_q1; ++q1) {
        int a = -1;
        int b = c.limit_q2 + 1;
        int count_a = 0, count_b = 0;
        for (int q2 = 0; q2 <= c.limit_q2; ++q2) {
            const int q[2] = {q1, q2};
            const auto act = two_user_action(solution, solution.space.index(q));
            if (act == TwoUserAction::u1_to_u2) {
                a = q2;
                ++count_a;
            } else if (act == TwoUserAction::u2_to_u1) {
                b = std::min(b, q2);
                ++count_b;
            }
        }
        // Contiguous iff U1->U2 fills exactly [0, a] and U2->U1 fills exactly [b, limit].
        const bool ok = count_a == a + 1 && count_b == c.limit_q2 + 1 - b && a < b;
        c.q2a.push_back(a);
        c.q2b.push_back(b);
        c.contiguous.push_back(ok);
    }
    return c;
}

RegionCounts count_regions(const MdpSolution& solution) {
    RegionCounts r;
    for (std::size_t s = 0; s < solution.space.size(); ++s) {
        switch (two_user_action(solution, s)) {
            case TwoUserAction::none: ++r.none; break;
            case TwoUserAction::u1_to_u2: ++r.u1_to_u2; break;
            case TwoUserAction::u2_to_u1: ++r.u2_to_u1; break;
        }
    }
    return r;
}

MdpProblem make_onoff_lcq_problem(double p_on, double lambda_each, double eta, double phi, double weight,
                                  int truncation) {
    // snr 2 gives exactly 1 bit/s at 1 Hz, so with 1-bit files a connected user clears one file/s.
    const std::vector<ChannelModel> models(2, ChannelModel::on_off(p_on, 1.0, 2.0));
    SchedulerPolicy lcq;
    lcq.kind = SchedulerKind::lcq;
    const std::vector<int> trunc{truncation, truncation};
    const auto table = ServiceRateTable::build(lcq, models, trunc);
    const std::vector<double> bits{1.0, 1.0};
    return MdpProblem::build({lambda_each, lambda_each}, table, bits, CostModel::uniform(2, eta, phi, weight), trunc);
}

DeltaReport verify_delta_monotonicity(const MdpProblem& problem, const DeltaOptions& options) {
    if (problem.num_users() != 2) throw InvalidInput("delta scan needs a two-user problem");
    if (!problem.costs().homogeneous()) throw InvalidInput("delta scan needs homogeneous (symmetric) costs");
    if (problem.arrival_rates()[0] != problem.arrival_rates()[1]) {
        throw InvalidInput("delta scan needs equal arrival rates");
    }
    const auto& space = problem.space();
    const int t1 = space.limit(0), t2 = space.limit(1);
    if (t1 < 3 || t2 < 3) throw InvalidInput("delta scan needs a box of at least 3 per queue");

    const std::size_t states = space.size();
    std::vector<double> h(states, 0.0), next(states);
    std::vector<double> delta(static_cast<std::size_t>(t1) * t2);
    const bool square = t1 == t2;

    DeltaReport report;
    auto at = [&](int a, int b) {
        const int q[2] = {a, b};
        return h[space.index(q)];
    };
    auto scan = [&](long k) {
        // Delta(q) for q1 in [0, t1-1], q2 in [0, t2-1].
        for (int q1 = 0; q1 < t1; ++q1) {
            for (int q2 = 0; q2 < t2; ++q2) {
                delta[static_cast<std::size_t>(q1) * t2 + q2] = at(q1 + 1, q2) - at(q1, q2 + 1);
            }
        }
        double worst = std::numeric_limits<double>::infinity();
        for (int q2 = 0; q2 < t2; ++q2) {
            for (int q1 = 0; q1 + 1 < t1; ++q1) {
                const double lo = delta[static_cast<std::size_t>(q1) * t2 + q2];
                const double hi = delta[static_cast<std::size_t>(q1 + 1) * t2 + q2];
                const double inc = hi - lo;
                const bool boundary = q1 + 1 >= t1 - options.boundary_margin || q2 >= t2 - options.boundary_margin;
                if (!boundary) worst = std::min(worst, inc);
                const double slack = options.slack * std::max({1.0, std::abs(lo), std::abs(hi)});
                if (inc < -slack) {
                    (boundary ? report.boundary_violations : report.interior_violations) += 1;
                    if (report.violations.size() < options.max_recorded) {
                        report.violations.push_back({k, q1, q2, -inc, boundary});
                    }
                }
            }
        }
        report.worst_interior_margin.push_back(worst);
        if (square) {
            for (int a = 0; a < t1; ++a) {
                for (int b = 0; b < t2; ++b) {
                    const double e = std::abs(delta[static_cast<std::size_t>(a) * t2 + b] +
                                              delta[static_cast<std::size_t>(b) * t2 + a]);
                    report.max_antisymmetry_error = std::max(report.max_antisymmetry_error, e);
                }
            }
        }
    };

    scan(0);
    long k = 0;
    for (; k < options.max_iterations; ++k) {
        const auto [lo, hi] = bellman_sweep(problem, h, next);
        const double shift = next[0];
        for (std::size_t s = 0; s < states; ++s) h[s] = next[s] - shift;
        scan(k + 1);
        if (hi - lo < options.tolerance) {
            report.converged = true;
            ++k;
            break;
        }
    }
    report.iterations = k;
    report.final_delta = delta;

    SolveOptions so;
    so.tolerance = options.tolerance;
    so.max_iterations = options.max_iterations;
    so.initial_h = h;
    report.solution = solve(problem, so);
    return report;
}

RandomizationCheck check_deterministic_optimality(const MdpProblem& problem, std::span<const double> h,
                                                  std::size_t num_states, std::size_t samples_per_state,
                                                  Rng& rng, double threshold) {
    const std::size_t n = problem.num_users();
    const std::size_t states = problem.space().size();
    RandomizationCheck out;
    out.worst_margin = std::numeric_limits<double>::infinity();
    Matrix sigma(n);
    for (std::size_t k = 0; k < num_states; ++k) {
        const std::size_t s = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(states)) % states;
        const double det = bellman_backup(h, problem, s).value;
        ++out.states_checked;
        for (std::size_t m = 0; m < samples_per_state; ++m) {
            // Rows drawn uniformly from the simplex via normalized exponentials.
            // Rows drawn uniformly from the simplex of admissible targets; odd samples stay
            // within 1e-3 of the deterministic action to probe the minimum closely.
            const bool local = m % 2 == 1;
            const auto det_action = bellman_backup(h, problem, s).action;
            for (std::size_t j = 0; j < n; ++j) {
                double total = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    sigma(j, i) = problem.can_route(s, j, i) ? -std::log(1.0 - uniform01(rng)) : 0.0;
                    total += sigma(j, i);
                }
                for (std::size_t i = 0; i < n; ++i) sigma(j, i) /= total;
                if (local) {
                    const double eps = 1e-3 * uniform01(rng);
                    for (std::size_t i = 0; i < n; ++i) sigma(j, i) *= eps;
                    sigma(j, static_cast<std::size_t>(det_action[j])) += 1.0 - eps;
                }
            }
            const double margin = randomized_backup(h, problem, s, sigma) - det;
            out.worst_margin = std::min(out.worst_margin, margin);
            ++out.samples;
        }
    }
    out.ok = out.worst_margin >= threshold;
    return out;
}

GainInvariance check_gain_reference(const MdpProblem& problem, const SolveOptions& options, double threshold) {
    SolveOptions a = options;
    a.reference.assign(problem.num_users(), 0);
    SolveOptions b = a;
    b.reference[0] = 1;
    GainInvariance out;
    out.gain_zero_ref = solve(problem, a).gain;
    out.gain_shifted_ref = solve(problem, b).gain;
    out.shift = std::abs(out.gain_zero_ref - out.gain_shifted_ref);
    out.ok = out.shift < threshold;
    return out;
}

JsqAgreement compare_with_jsq(const MdpProblem& problem, const MdpSolution& solution, int margin,
                              double tie_tolerance) {
    if (problem.num_users() != 2 || solution.num_users() != 2) throw InvalidInput("compare_with_jsq needs two users");
    const auto& space = problem.space();
    const double solo[2] = {problem.rates(space.index(std::vector<int>{1, 0}))[0],
                            problem.rates(space.index(std::vector<int>{0, 1}))[1]};
    if (!(solo[0] > 0.0 && solo[1] > 0.0)) throw InvalidInput("compare_with_jsq needs positive solo rates");

    JsqAgreement out;
    std::vector<int> q(2);
    for (std::size_t s = 0; s < space.size(); ++s) {
        space.decode(s, q);
        if (q[0] > space.limit(0) - margin || q[1] > space.limit(1) - margin) continue;
        const double work0 = q[0] / solo[0], work1 = q[1] / solo[1];
        const double gap = solution.h[problem.up(s, 0)] - solution.h[problem.up(s, 1)];
        if (std::abs(work0 - work1) <= 1e-12 * std::max(work0, work1) ||
            std::abs(gap) <= tie_tolerance * std::max(1.0, std::abs(solution.h[s]))) {
            ++out.ties;
            continue;
        }
        const int shorter = work0 < work1 ? 0 : 1;
        if (solution.target(s, 0) == shorter && solution.target(s, 1) == shorter) {
            ++out.agree;
        } else {
            ++out.disagree;
        }
    }
    return out;
}

}  // namespace tspread
