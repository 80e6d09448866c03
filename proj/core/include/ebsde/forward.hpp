#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ebsde/model.hpp"

namespace ebsde {

enum class Scheme { exponential_euler, euler_maruyama };

struct SimConfig {
    double dt = 0.01;
    double horizon = 1.0;
    int n_paths = 1;
    uint64_t seed = 1;
    Scheme scheme = Scheme::exponential_euler;
    // Exact per-mode variance of the propagated noise for diagonal A; makes
    // constant-coefficient diagonal models exact in distribution per step.
    bool exact_diag_variance = false;

    int n_steps() const {
        int m = static_cast<int>(std::lround(horizon / dt));
        return m < 1 ? 1 : m;
    }
    double step() const { return horizon / n_steps(); }
};

struct PathBundle {
    Eigen::VectorXd times;                   // m+1
    std::vector<Eigen::MatrixXd> states;     // m+1 matrices, n_paths x n_modes
    std::vector<Eigen::MatrixXd> dw1;        // m matrices, n_paths x d1
    std::vector<Eigen::MatrixXd> dw2;        // m matrices, n_paths x d2
    uint64_t seed = 0;
    double dt = 0.0;

    int n_paths() const { return states.empty() ? 0 : static_cast<int>(states[0].rows()); }
    int n_steps() const { return static_cast<int>(dw1.size()); }
};

struct DriftAugmentation {
    bool enabled = false;
    std::function<Eigen::VectorXd(double, const StateVector&)> p_process;  // d1
    std::function<Eigen::VectorXd(double, const StateVector&)> q_process;  // d2
};

struct BlowUpError : std::runtime_error {
    int time_index;
    explicit BlowUpError(int idx)
        : std::runtime_error("non-finite state at time index " + std::to_string(idx)),
          time_index(idx) {}
};

PathBundle simulate(const GalerkinModel& model, const StateVector& x0,
                    const DriftAugmentation& aug, const SimConfig& cfg);

// Single-path stepping engine shared by all simulation entry points. Noise
// for step j of path p is drawn from the (seed, p) counter stream, so any
// path segment can be regenerated without storing increments.
class Stepper {
  public:
    Stepper(const GalerkinModel& model, const SimConfig& cfg);

    int normals_per_step() const { return model_.d1 + model_.d2; }
    // Advances x in place using the increments in z (normals_per_step values);
    // optionally records the scaled Brownian increments.
    void advance(double t, StateVector& x, const double* z, const DriftAugmentation& aug,
                 double* dw1_out = nullptr, double* dw2_out = nullptr) const;

    double dt() const { return dt_; }
    const Eigen::MatrixXd& propagator() const { return exp_dt_; }

  private:
    const GalerkinModel& model_;
    double dt_;
    double sqrt_dt_;
    Eigen::MatrixXd exp_dt_;       // e^{dt A} (dense) or unused when diagonal
    Eigen::ArrayXd exp_diag_;      // diagonal case
    Eigen::ArrayXd variance_fix_;  // per-mode noise std correction (diagonal A)
    bool diagonal_;
    bool identity_scheme_;  // euler_maruyama: propagate with (I + dt A)
};

struct DecayFit {
    double mu_hat = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    bool degenerate = false;
    Eigen::VectorXd times;
    Eigen::VectorXd mean_abs_diff;     // E|dX_t|
    Eigen::VectorXd mean_sq_diff;      // E|dX_t|^2
    double fit_window_start = 0.0;
};

struct ContractionOptions {
    double mu_guess = 1.0;  // fit window starts at 1/mu_guess
};

DecayFit estimate_contraction(const GalerkinModel& model, const StateVector& x0,
                              const StateVector& x0p, const SimConfig& cfg,
                              const ContractionOptions& options = {});

struct MomentReport {
    Eigen::VectorXd times;
    Eigen::VectorXd mean_abs;  // E|X_t|
    double running_max = 0.0;
    double tail_slope = 0.0;
    double tail_slope_stderr = 0.0;
    bool growth_flag = false;  // tail slope positive at 3 sigma
};

MomentReport estimate_moment_bound(const GalerkinModel& model, const StateVector& x0,
                                   const SimConfig& cfg);

// Little-endian binary dump with magic bytes and version header.
void dump_path_bundle(const PathBundle& bundle, const std::string& path);
PathBundle load_path_bundle(const std::string& path);

}  // namespace ebsde
