#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ebsde/linop.hpp"

namespace ebsde {

using StateVector = Eigen::VectorXd;

// Declared structural constants of a model. Validation checks the sampled
// quantities against these with a fixed 1.05 slack factor.
struct ModelConstants {
    double lip_drift = 0.0;        // Lipschitz bound of the nonlinear drift
    double lip_g = 0.0;            // Lipschitz bound of the diffusion factor G
    double bound_g = 0.0;          // sup |G|
    double bound_g_inverse = 0.0;  // sup |G^{-1}|
    double decay_exponent = 0.0;   // gamma in [0, 1/2): |e^{sA} D|_F <= decay_scale * min(s^-gamma, 1)
    double decay_scale = 0.0;
};

// Inputs of the closed-form dissipativity certificate for reaction-type
// models: spectral gap of the linear part, one-sided bound and Lipschitz
// constant of the reaction term, and the scalar-channel constants.
struct DissipativityInputs {
    double mu_delta = 0.0;  // first eigenvalue magnitude of -A on the PDE block
    double mu_f = 0.0;      // one-sided monotonicity constant of f
    double lip_f = 0.0;
    double mu_b = 0.0;      // one-sided monotonicity constant of b
    double lip_sigma = 0.0;
};

// Finite-dimensional truncation of the stochastic evolution equation
//   dX = A X dt + F(X) dt + Q G(X) dW1 + D dW2.
// n_modes is the total state dimension, d1/d2 the two noise dimensions.
struct GalerkinModel {
    std::string name;
    int n_modes = 0;
    int d1 = 0;
    int d2 = 0;
    LinearOperator a_op;
    std::function<StateVector(const StateVector&)> drift;           // F
    Eigen::MatrixXd q;                                              // n_modes x d1
    std::function<Eigen::MatrixXd(const StateVector&)> g;           // d1 x d1, invertible
    std::function<Eigen::MatrixXd(const StateVector&)> g_inverse;   // optional; empty -> LU solve
    Eigen::MatrixXd d;                                              // n_modes x d2
    ModelConstants constants;

    std::optional<DissipativityInputs> dissipativity_inputs;
    // Boundary-control models do not claim the joint dissipativity inequality;
    // their contraction is assessed empirically only.
    bool claim_joint_dissipativity = true;

    int dim() const { return n_modes; }
};

struct Coefficients {
    StateVector drift;      // F(x)
    Eigen::MatrixXd qg;     // Q G(x), n_modes x d1
    Eigen::MatrixXd g;      // G(x), d1 x d1
    Eigen::MatrixXd g_inv;  // G(x)^{-1}, d1 x d1
};

StateVector semigroup_apply(const GalerkinModel& model, double t, const StateVector& x);
Coefficients eval_coefficients(const GalerkinModel& model, const StateVector& x);

struct CheckResult {
    std::string name;
    bool claimed = true;  // false: reported but not asserted for this model
    bool passed = false;
    double observed = 0.0;
    double bound = 0.0;
    std::string note;
};

struct ValidationReport {
    std::vector<CheckResult> checks;
    int sample_count = 0;
    uint64_t seed = 0;
    bool all_passed() const {
        for (const auto& c : checks)
            if (c.claimed && !c.passed) return false;
        return true;
    }
};

// Samples state pairs and checks the declared constants (Lipschitz bounds,
// invertibility of G, the semigroup decay of the degenerate noise column)
// with slack factor 1.05. Failures are report entries, not exceptions.
ValidationReport validate_standing_assumptions(const GalerkinModel& model, int sample_count,
                                               uint64_t seed);

struct CertificateOptions {
    enum class Mode { automatic, matrix, sampled };
    Mode mode = Mode::automatic;
    int sample_count = 2000;
    uint64_t seed = 7001;
    double pair_scale = 1.0;  // sampling scale for state pairs
};

struct DissipativityCertificate {
    enum class Mode { matrix, sampled };
    Mode mode = Mode::matrix;
    bool holds = false;
    // rate of E|X_t - X'_t| <= e^{-mu_bar t}|x - x'| under synchronous coupling;
    // half of the two-point inequality constant (that one governs the squared norm)
    double mu_bar = 0.0;
    Eigen::Matrix2d witness_matrix;  // matrix mode only
    double worst_ratio = 0.0;        // sampled mode: min over pairs of -lhs/|dx|^2
    std::string note;
};

// Matrix mode: assembles the 2x2 comparison matrix from dissipativity_inputs
// and reports mu_bar = -lambda_max when it is negative definite.
// Sampled mode: evaluates the two-point drift/diffusion inequality on random
// and coordinate-aligned state pairs and reports the worst ratio.
DissipativityCertificate joint_dissipativity_certificate(const GalerkinModel& model,
                                                         const CertificateOptions& options);

}  // namespace ebsde
