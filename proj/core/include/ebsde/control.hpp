#pragma once

#include <string>
#include <vector>

#include "ebsde/driver.hpp"
#include "ebsde/ergodic.hpp"
#include "ebsde/forward.hpp"
#include "ebsde/model.hpp"

namespace ebsde {

struct Policy {
    enum class Kind { constant, state_feedback, external };
    Kind kind = Kind::constant;
    std::string id;
    std::function<double(double, const StateVector&)> gamma_of;

    static Policy constant_policy(double gamma, const std::string& id = "");
};

struct CostEstimate {
    double j_hat = 0.0;
    double std_error = 0.0;
    double horizon_T = 0.0;
    double burn_in = 0.0;
    int n_paths = 0;
    // doubling diagnostic: average over the first half of the averaging window
    double half_window_j = 0.0;
    bool doubling_ok = true;  // |full - half| <= 3 * combined stderr
};

struct CostConfig {
    SimConfig sim;          // horizon = T
    double burn_in = 0.0;   // 0 => 5 relaxation times from mu_hint
    double mu_hint = 1.0;
};

// Long-horizon average of L(X, gamma) along the drift-augmented dynamics
// (the strong representative of the weak formulation).
CostEstimate ergodic_cost(const GalerkinModel& model, const ControlStructure& cs,
                          const StateVector& x0, const Policy& policy, const CostConfig& cfg);

Policy synthesize_feedback(const ErgodicSolution& ergodic, const ControlStructure& cs,
                           const GalerkinModel& model);

struct GapRow {
    std::string policy_id;
    bool is_feedback = false;
    double j_hat = 0.0;
    double std_error = 0.0;
    double gap = 0.0;              // j_hat - lambda_hat
    double combined_stderr = 0.0;  // sqrt(stderr^2 + lambda_stderr^2)
    bool lower_bound_ok = false;   // j >= lambda - 3 combined - allowance
    bool gap_ok = true;            // feedback only: |gap| <= 3 combined + allowance
    double horizon_T = 0.0;
    double burn_in = 0.0;
};

struct GapReport {
    std::vector<GapRow> rows;
    double allowance = 0.02;
    bool all_pass = false;
};

GapReport verify_bound_and_gap(const GalerkinModel& model, const ControlStructure& cs,
                               const ErgodicSolution& ergodic, const StateVector& x0,
                               const std::vector<Policy>& policy_list, const CostConfig& cfg,
                               double allowance = 0.02);

struct GirsanovReport {
    double direct_mean = 0.0;
    double direct_stderr = 0.0;
    double weighted_mean = 0.0;
    double weighted_stderr = 0.0;
    double ess_fraction = 0.0;       // effective sample size / n_paths
    double density_cov = 0.0;        // coefficient of variation of the density
    bool inconclusive = false;
    bool agree_3sigma = false;
};

struct GirsanovConfig {
    SimConfig sim;           // horizon = T_short
    double max_cov = 5.0;    // precondition on the density's sample CoV
};

// Two estimates of E^gamma[ integral of L over [0,T] ]: direct simulation of
// the augmented dynamics vs. density-reweighted uncontrolled paths.
GirsanovReport girsanov_consistency_check(const GalerkinModel& model, const ControlStructure& cs,
                                          const StateVector& x0, const Policy& policy,
                                          double T_short, const GirsanovConfig& cfg);

}  // namespace ebsde
