#pragma once

#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "ebsde/driver.hpp"

namespace ebsde {

struct ConjugateSearchConfig {
    double initial_box = 8.0;        // half-width scale, multiplied by (1 + L_z + L_u)
    int coarse_points = 33;          // per dimension per box
    int max_expansions = 48;
    double refine_tol = 1e-12;
    double stability_tol = 1e-9;     // box-to-box improvement below this => converged
};

struct ConjugateValue {
    double value = std::numeric_limits<double>::quiet_NaN();
    bool finite = false;
    bool inconclusive = false;
    Eigen::VectorXd argmin_z;
    Eigen::VectorXd argmin_u;
};

// inf over (z,u) of { -z.p - u.q - psi(x,z,u) } by coarse grids on expanding
// boxes plus cyclic ternary refinement. Divergence is declared when the
// running infimum drops by more than 1e3*(L_z+L_u) across two box doublings.
ConjugateValue conjugate(const DriverSpec& driver, const StateVector& x, const Eigen::VectorXd& p,
                         const Eigen::VectorXd& q, const ConjugateSearchConfig& cfg = {});

struct ConjugateGridConfig {
    int points_per_dim = 2001;
    ConjugateSearchConfig search;
};

struct ConjugateTable {
    std::vector<Eigen::VectorXd> p_axes;  // d1 axes spanning [-L_z, L_z]
    std::vector<Eigen::VectorXd> q_axes;  // d2 axes spanning [-L_u, L_u]
    Eigen::VectorXd values;               // flattened row-major over (p..., q...)
    std::vector<uint8_t> domain_mask;     // 1 where psi* finite
    int warning_count = 0;                // inconclusive evaluations (masked out)
    double lip_z = 0.0;
    double lip_u = 0.0;

    int node_count() const { return static_cast<int>(values.size()); }
    void node_coords(int flat, Eigen::VectorXd& p, Eigen::VectorXd& q) const;
    double max_spacing() const;
};

ConjugateTable build_conjugate_table(const DriverSpec& driver, const StateVector& x,
                                     const ConjugateGridConfig& cfg = {});

// min over masked nodes of { -z.p - u.q - psi*(x,p,q) }.
double biconjugate(const ConjugateTable& table, const Eigen::VectorXd& z,
                   const Eigen::VectorXd& u);

}  // namespace ebsde
