#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ebsde/driver.hpp"
#include "ebsde/forward.hpp"
#include "ebsde/model.hpp"

namespace ebsde {

struct RegressionBasis {
    enum class Kind { polynomial, radial };
    Kind kind = Kind::polynomial;
    int degree = 3;                // polynomial total degree
    std::vector<int> projection;   // state coordinates used as features; empty = all
    Eigen::MatrixXd centers;       // radial: one center per row (projected coords)
    double bandwidth = 1.0;
};

// Compiled feature evaluator; first feature is always the constant 1.
class FeatureMap {
  public:
    FeatureMap() = default;
    FeatureMap(const RegressionBasis& basis, int state_dim);

    int size() const { return n_features_; }
    const std::vector<int>& projection() const { return proj_; }
    void eval_into(const StateVector& x, double* phi) const;
    Eigen::VectorXd eval(const StateVector& x) const;
    // states: rows are paths; phi resized to n_paths x size()
    void eval_rows(const Eigen::MatrixXd& states, Eigen::MatrixXd& phi) const;

  private:
    RegressionBasis basis_;
    std::vector<int> proj_;
    std::vector<std::vector<int>> powers_;  // polynomial multi-indices
    int n_features_ = 0;
};

struct BsdeConfig {
    double dt = 0.01;
    int n_paths = 10000;  // per start group
    uint64_t seed = 1;
    Scheme scheme = Scheme::exponential_euler;
    bool exact_diag_variance = false;
    std::vector<StateVector> start_points;  // one group per entry; required
    double ridge = 1e-10;
    // window (fractions of T) over which regression coefficients are averaged
    // into the stationary representations; kept early, away from the terminal
    // layer, where the discounted solution is closest to stationary
    double rep_window_lo = 0.05;
    double rep_window_hi = 0.25;
    bool store_full = false;        // keep per-path Y/Z/U arrays
    double memory_cap_gb = 2.0;
    int checkpoint_stride = 0;      // 0 = round(sqrt(m))
    bool fresh_path_check = false;  // out-of-sample replay with frozen coefficients
};

struct GroupValue {
    StateVector x;
    double value = 0.0;
    double std_error = 0.0;
    int n = 0;
};

struct StepStats {
    double t = 0.0;
    double mean_y = 0.0;
    double sd_y = 0.0;
    double mean_abs_z = 0.0;
    double mean_abs_u = 0.0;
};

struct BsdeSolution {
    Eigen::VectorXd times;                   // m+1
    std::vector<GroupValue> initial_values;  // one per start group
    std::vector<StepStats> step_stats;       // m+1 entries (terminal row has z/u = 0)
    double max_condition = 0.0;

    // per-step regression coefficients in the raw feature basis
    Eigen::MatrixXd y_coeffs;              // m x B
    std::vector<Eigen::MatrixXd> z_coeffs; // m entries, B x d1
    std::vector<Eigen::MatrixXd> u_coeffs; // m entries, B x d2

    // window-averaged stationary representations
    Eigen::VectorXd y_rep;   // B
    Eigen::MatrixXd z_rep;   // B x d1
    Eigen::MatrixXd u_rep;   // B x d2

    // full per-path storage (only when cfg.store_full)
    bool full = false;
    Eigen::MatrixXd y;                // n_total x (m+1)
    std::vector<Eigen::MatrixXd> z;   // m entries, n_total x d1
    std::vector<Eigen::MatrixXd> u2;  // m entries, n_total x d2

    std::vector<GroupValue> fresh_initial_values;  // fresh_path_check only

    // replay metadata
    double dt = 0.0;
    double horizon = 0.0;
    double alpha = 0.0;
    uint64_t seed = 0;
    Scheme scheme = Scheme::exponential_euler;
    bool exact_diag_variance = false;
    std::vector<StateVector> start_points;
    int n_per_group = 0;
    FeatureMap features;
    std::function<double(const StateVector&)> terminal;
};

BsdeSolution solve_finite_horizon(const GalerkinModel& model, const DriverSpec& driver,
                                  const std::function<double(const StateVector&)>& terminal,
                                  double T, double alpha, const RegressionBasis& basis,
                                  const BsdeConfig& cfg);

struct DiscountedValue {
    double alpha = 0.0;
    double truncation_T = 0.0;
    double tail_bound = 0.0;
    std::vector<GroupValue> values;  // aligned with eval_points
    Eigen::VectorXd y_rep;
    Eigen::MatrixXd z_rep;
    Eigen::MatrixXd u_rep;
    FeatureMap features;
    std::vector<StepStats> step_stats;
    double max_condition = 0.0;
};

struct DiscountedConfig {
    BsdeConfig solver;
    double tail_tolerance = 1e-3;
    double horizon_cap = 2000.0;
};

DiscountedValue solve_discounted(const GalerkinModel& model, const DriverSpec& driver,
                                 double alpha, const std::vector<StateVector>& eval_points,
                                 const RegressionBasis& basis, const DiscountedConfig& cfg);

struct ResidualReport {
    double mean_square = 0.0;        // per-interval residual, averaged over paths and steps
    Eigen::VectorXd per_step_ms;     // m entries
    double max_feature_corr = 0.0;   // worst normalized residual/feature correlation
    double threshold = 0.0;
    bool below_threshold = false;
};

ResidualReport residual_diagnostic(const BsdeSolution& solution, const GalerkinModel& model,
                                   const DriverSpec& driver, double threshold = 1e-3);

}  // namespace ebsde
