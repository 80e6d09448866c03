#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ebsde/model.hpp"

namespace ebsde {

// Concave driver psi(x, z, u) with its declared structural constants.
// z has dimension d1 (paired with W1 through G^{-1}), u dimension d2.
struct DriverSpec {
    std::string name;
    std::function<double(const StateVector&, const Eigen::VectorXd&, const Eigen::VectorXd&)> psi;
    double lip_x = 0.0;
    double lip_z = 0.0;
    double lip_u = 0.0;
    double bound_at_zero = 0.0;  // M_psi = sup_x |psi(x,0,0)|
    bool concave_in_zu = true;
    int d1 = 0;
    int d2 = 0;
};

struct DriverCheckReport {
    std::vector<CheckResult> checks;
    bool all_passed() const {
        for (const auto& c : checks)
            if (c.claimed && !c.passed) return false;
        return true;
    }
};

// Sampled verification of the declared driver constants: bound at (0,0),
// Lipschitz ratios in x, z, u, and midpoint concavity in (z,u).
DriverCheckReport validate_driver(const DriverSpec& driver, int state_dim, int sample_count,
                                  uint64_t seed);

// Control-problem data: finite control grid, noise couplings R1/R2 and the
// bounded running cost L.
struct ControlStructure {
    Eigen::VectorXd gamma_grid;
    std::function<Eigen::VectorXd(double)> r1;  // d1
    std::function<Eigen::VectorXd(double)> r2;  // d2
    std::function<double(const StateVector&, double)> running_cost;
    double bound_c = 0.0;
    int d1 = 0;
    int d2 = 0;
};

double hamiltonian_from_control(const ControlStructure& cs, const StateVector& x,
                                const Eigen::VectorXd& z, const Eigen::VectorXd& u);

// Grid minimizer of L(x,gamma) + z.R1 + u.R2; ties broken by smallest index.
double epsilon_argmin_selection(const ControlStructure& cs, const StateVector& x,
                                const Eigen::VectorXd& z, const Eigen::VectorXd& u);

// Quadratic-cost scalar-control Hamiltonian on Gamma=[-1,1]:
// -z^2/4 for |z| <= 2, 1 - |z| outside; caller adds the state cost term.
double example2_closed_form(double z);

// DriverSpec induced by a control structure (psi = pointwise infimum over the
// control grid). lip_z/lip_u come from the grid maxima of |R1|,|R2| and the
// zero bound from bound_c; the x-Lipschitz constant of L is the caller's.
DriverSpec driver_from_control(const ControlStructure& cs, double lip_x);

}  // namespace ebsde
