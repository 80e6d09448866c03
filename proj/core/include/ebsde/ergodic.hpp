#pragma once

#include <string>
#include <vector>

#include "ebsde/bsde.hpp"

namespace ebsde {

struct EvalValue {
    StateVector x;
    double value = 0.0;
    double std_error = 0.0;
};

struct AlphaRecord {
    double alpha = 0.0;
    double v_ref = 0.0;
    double v_ref_stderr = 0.0;
    double alpha_v = 0.0;
    double alpha_v_stderr = 0.0;
    double truncation_T = 0.0;
    double tail_bound = 0.0;
    std::vector<EvalValue> evals;  // aligned with eval_points (Lipschitz probes live here)
};

struct LambdaFit {
    double lambda_hat = 0.0;
    double std_error = 0.0;
    double slope = 0.0;  // leading discretization/discount bias, reported only
};

// Weighted linear extrapolation of alpha * v^alpha to alpha = 0. eval_index
// -1 uses the reference-point series, otherwise evals[eval_index].
LambdaFit lambda_fit(const std::vector<AlphaRecord>& records, int eval_index = -1);

struct ErgodicSolution {
    double lambda_hat = 0.0;
    double lambda_stderr = 0.0;
    StateVector x_ref;
    std::vector<EvalValue> vbar;          // intercept of v^a(x) - v^a(x_ref); vbar(x_ref) = 0
    std::vector<AlphaRecord> alpha_records;  // sorted by decreasing alpha
    FeatureMap features;
    Eigen::VectorXd vbar_coeffs;  // raw basis; vbar_at(x) = c.(phi(x) - phi(x_ref))
    Eigen::MatrixXd zeta1_coeffs; // B x d1
    Eigen::MatrixXd zeta2_coeffs; // B x d2
    std::vector<std::string> warnings;

    double vbar_at(const StateVector& x) const;
    Eigen::VectorXd zeta1_at(const StateVector& x) const;
    Eigen::VectorXd zeta2_at(const StateVector& x) const;
};

struct VanishingDiscountConfig {
    DiscountedConfig discounted;
    RegressionBasis basis;
};

// Runs solve_discounted per alpha (shared seed across alphas), extrapolates
// alpha*v^alpha(x_ref) to alpha=0 by a weighted linear fit, and keeps the
// smallest-alpha regression representations for vbar and zeta.
ErgodicSolution vanishing_discount(const GalerkinModel& model, const DriverSpec& driver,
                                   const std::vector<double>& alpha_schedule,
                                   const StateVector& x_ref,
                                   const std::vector<StateVector>& eval_points,
                                   const VanishingDiscountConfig& cfg);

struct LipschitzRow {
    double alpha = 0.0;
    int pair_i = 0;
    int pair_j = 0;
    double quotient = 0.0;
    double quotient_stderr = 0.0;
};

struct LipschitzReport {
    std::vector<LipschitzRow> rows;
    double max_relative_spread = 0.0;  // max over pairs of (max_q - min_q)/max_q
    bool growth_flag = false;          // quotient grows as alpha decreases, beyond noise
};

LipschitzReport lipschitz_uniformity_diag(const std::vector<AlphaRecord>& records,
                                          const std::vector<std::pair<int, int>>& pair_list);

struct ErgodicResidualStats {
    double mean_square = 0.0;
    double integrated_mean = 0.0;    // E of the summed residual over [0,T]
    double integrated_stderr = 0.0;
    double detection_zscore = 0.0;   // |integrated_mean| / integrated_stderr
    double horizon = 0.0;
};

// Pathwise residual of the ergodic identity on fresh paths with perturbable
// lambda (lambda_shift tests the detection property).
ErgodicResidualStats verify_ergodic_bsde_residual(const GalerkinModel& model,
                                                  const DriverSpec& driver,
                                                  const ErgodicSolution& ergodic, double T,
                                                  const SimConfig& cfg,
                                                  double lambda_shift = 0.0);

struct HjbRow {
    double t = 0.0;
    double T = 0.0;
    int point_index = 0;
    double residual = 0.0;
    double std_error = 0.0;
    bool pass = false;
};

struct HjbVerificationReport {
    std::vector<HjbRow> rows;
    double bias_allowance = 0.0;
    bool all_pass = false;
};

struct HjbConfig {
    int inner_paths = 4000;    // fresh batch per (t, T, x) cell
    double bias_allowance = 2e-3;
    SimConfig sim;             // dt, seed, scheme (horizon set per node)
    // optional additive perturbation of vbar for sensitivity checks
    std::function<double(const StateVector&)> vbar_perturbation;
    double lambda_shift = 0.0;
};

HjbVerificationReport verify_mild_hjb(const GalerkinModel& model, const DriverSpec& driver,
                                      const ErgodicSolution& ergodic,
                                      const std::vector<std::pair<double, double>>& t_T_pairs,
                                      const std::vector<StateVector>& eval_points,
                                      const HjbConfig& cfg);

struct ParabolicRow {
    double T = 0.0;
    double value = 0.0;   // v^T(0,x)
    double std_error = 0.0;
    double ratio = 0.0;   // value / T
};

std::vector<ParabolicRow> parabolic_long_time_ratio(const GalerkinModel& model,
                                                    const DriverSpec& driver,
                                                    const std::vector<double>& T_list,
                                                    const StateVector& x,
                                                    const RegressionBasis& basis,
                                                    const BsdeConfig& cfg);

struct GradientRow {
    int point_index = 0;
    Eigen::VectorXd fd_zeta1;   // reconstructed grad(vbar).QG
    Eigen::VectorXd fd_zeta2;   // reconstructed grad(vbar).D
    Eigen::VectorXd rep_zeta1;  // zeta1_at(x)
    Eigen::VectorXd rep_zeta2;
    double max_abs_diff = 0.0;
};

struct GradientReport {
    std::vector<GradientRow> rows;
    bool predicate_holds = false;  // mu > 2 (L_z^2 M_Ginv^2 + L_u^2)
    double predicate_lhs = 0.0;
    double predicate_rhs = 0.0;
};

GradientReport gradient_consistency(const GalerkinModel& model, const DriverSpec& driver,
                                    const ErgodicSolution& ergodic,
                                    const std::vector<StateVector>& eval_points,
                                    const std::vector<double>& h_list, double mu_hat);

}  // namespace ebsde
