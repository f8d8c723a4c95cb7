#pragma once

#include <string>
#include <vector>

#include "tspread/mdp.hpp"

namespace tspread {

/// The three deterministic controls of a two-user system.
enum class TwoUserAction { none, u1_to_u2, u2_to_u1 };

std::string to_string(TwoUserAction action);
TwoUserAction two_user_action(const MdpSolution& solution, std::size_t state);

/// Per column q1: q2a = largest q2 with U1->U2 (-1 if none), q2b = smallest q2 with U2->U1
/// (truncation + 1 if none). Contiguity is checked, not assumed.
struct SwitchingCurves {
    int limit_q1 = 0;
    int limit_q2 = 0;
    std::vector<int> q2a;
    std::vector<int> q2b;
    std::vector<bool> contiguous;

    bool all_contiguous() const;
};

SwitchingCurves extract_switching_curves(const MdpSolution& solution);

struct RegionCounts {
    std::size_t none = 0;
    std::size_t u1_to_u2 = 0;
    std::size_t u2_to_u1 = 0;
    std::size_t rerouting() const { return u1_to_u2 + u2_to_u1; }
};

RegionCounts count_regions(const MdpSolution& solution);

/// Two-user homogeneous on/off channels under LCQ, scaled so a connected user drains one file
/// per second: mu'_1 = p, mu''_1 = p(1 - p). Symmetric costs eta, phi, w.
MdpProblem make_onoff_lcq_problem(double p_on, double lambda_each, double eta, double phi, double weight,
                                  int truncation);

struct DeltaOptions {
    double tolerance = 1e-8;
    long max_iterations = 200'000;
    double slack = 1e-9;          // allowed decrease, relative to max(1, |Delta|)
    int boundary_margin = 1;      // pairs within this many cells of the box edge are artifacts
    std::size_t max_recorded = 200;
};

struct DeltaViolation {
    long iteration;
    int q1;          // Delta(q1 + 1, q2) < Delta(q1, q2)
    int q2;
    double magnitude;
    bool boundary_artifact;
};

/// Monotonicity scan of Delta_k(q) = J_k(q + e1) - J_k(q + e2) along value iteration from J_0 = 0.
struct DeltaReport {
    long iterations = 0;
    bool converged = false;
    std::vector<double> worst_interior_margin;   // per iteration, min over interior of the increment
    std::vector<DeltaViolation> violations;      // first max_recorded
    std::size_t interior_violations = 0;
    std::size_t boundary_violations = 0;
    double max_antisymmetry_error = 0.0;         // |Delta(a,b) + Delta(b,a)| over all iterations
    std::vector<double> final_delta;             // (T1) x (T2), row-major in q1
    MdpSolution solution;                        // converged greedy policy

    bool monotone() const { return interior_violations == 0; }
};

/// Requires two users, homogeneous costs and equal arrival rates (throws InvalidInput otherwise).
DeltaReport verify_delta_monotonicity(const MdpProblem& problem, const DeltaOptions& options = {});

/// Deterministic per-source argmin vs randomized dispatch matrices at sampled states.
struct RandomizationCheck {
    std::size_t states_checked = 0;
    std::size_t samples = 0;
    double worst_margin = 0.0;   // min over samples of randomized - deterministic
    bool ok = true;
};

RandomizationCheck check_deterministic_optimality(const MdpProblem& problem, std::span<const double> h,
                                                  std::size_t num_states, std::size_t samples_per_state,
                                                  Rng& rng, double threshold = -1e-12);

struct GainInvariance {
    double gain_zero_ref = 0.0;
    double gain_shifted_ref = 0.0;
    double shift = 0.0;
    bool ok = true;
};

/// Solves twice, with reference (0,...,0) and (1,0,...,0).
GainInvariance check_gain_reference(const MdpProblem& problem, const SolveOptions& options,
                                    double threshold = 1e-6);

/// Agreement of a two-user policy with join-the-least-workload dispatching (workload q_i / mu_i(e_i)).
/// States within `margin` cells of the box edge are skipped, as are ties: equal workloads, or
/// |h(q + e_1) - h(q + e_2)| <= tie_tolerance * max(1, |h(q)|).
struct JsqAgreement {
    std::size_t agree = 0;
    std::size_t disagree = 0;
    std::size_t ties = 0;
    double fraction() const { return agree + disagree == 0 ? 1.0 : double(agree) / double(agree + disagree); }
};
JsqAgreement compare_with_jsq(const MdpProblem& problem, const MdpSolution& solution, int margin = 2,
                              double tie_tolerance = 1e-9);

}  // namespace tspread
