#include "ebsde/driver.hpp"

#include <cmath>
#include <stdexcept>

#include "ebsde/rng.hpp"

namespace ebsde {

namespace {

Eigen::VectorXd gaussian_vec(uint64_t seed, uint64_t stream, int draw, int dim) {
    Eigen::VectorXd v(dim);
    if (dim == 0) return v;
    PathNormals rng(seed, stream, dim);
    rng.fill_step(draw, v.data());
    return v;
}

}  // namespace

DriverCheckReport validate_driver(const DriverSpec& driver, int state_dim, int sample_count,
                                  uint64_t seed) {
    if (!driver.psi) throw std::invalid_argument("validate_driver: psi not set");
    if (sample_count < 1) throw std::invalid_argument("validate_driver: sample_count >= 1");
    DriverCheckReport rep;
    const Eigen::VectorXd z0 = Eigen::VectorXd::Zero(driver.d1);
    const Eigen::VectorXd u0 = Eigen::VectorXd::Zero(driver.d2);
    const double slack = 1.05;

    double worst_zero = 0.0, worst_x = 0.0, worst_z = 0.0, worst_u = 0.0, worst_cc = 0.0;
    for (int i = 0; i < sample_count; ++i) {
        StateVector x = 2.0 * gaussian_vec(seed, 1, i, state_dim);
        StateVector xp = 2.0 * gaussian_vec(seed, 2, i, state_dim);
        Eigen::VectorXd z = 2.0 * gaussian_vec(seed, 3, i, driver.d1);
        Eigen::VectorXd zp = 2.0 * gaussian_vec(seed, 4, i, driver.d1);
        Eigen::VectorXd u = 2.0 * gaussian_vec(seed, 5, i, driver.d2);
        Eigen::VectorXd up = 2.0 * gaussian_vec(seed, 6, i, driver.d2);

        worst_zero = std::max(worst_zero, std::abs(driver.psi(x, z0, u0)));

        double base = driver.psi(x, z, u);
        double dx = (x - xp).norm();
        if (dx > 1e-12)
            worst_x = std::max(worst_x, std::abs(base - driver.psi(xp, z, u)) / dx);
        double dz = (z - zp).norm();
        if (dz > 1e-12)
            worst_z = std::max(worst_z, std::abs(base - driver.psi(x, zp, u)) / dz);
        double du = (u - up).norm();
        if (du > 1e-12)
            worst_u = std::max(worst_u, std::abs(base - driver.psi(x, z, up)) / du);

        double mid = driver.psi(x, 0.5 * (z + zp), 0.5 * (u + up));
        double chord = 0.5 * (base + driver.psi(x, zp, up));
        worst_cc = std::min(worst_cc, mid - chord);
    }

    auto add = [&rep](const std::string& name, bool claimed, double observed, double bound,
                      bool passed) {
        rep.checks.push_back({name, claimed, passed, observed, bound, ""});
    };
    add("psi_bound_at_zero", true, worst_zero, driver.bound_at_zero,
        worst_zero <= driver.bound_at_zero * slack + 1e-12);
    add("psi_lipschitz_x", true, worst_x, driver.lip_x, worst_x <= driver.lip_x * slack + 1e-12);
    add("psi_lipschitz_z", true, worst_z, driver.lip_z, worst_z <= driver.lip_z * slack + 1e-12);
    add("psi_lipschitz_u", true, worst_u, driver.lip_u, worst_u <= driver.lip_u * slack + 1e-12);
    add("psi_midpoint_concavity", driver.concave_in_zu, worst_cc, 0.0, worst_cc >= -1e-10);
    return rep;
}

double hamiltonian_from_control(const ControlStructure& cs, const StateVector& x,
                                const Eigen::VectorXd& z, const Eigen::VectorXd& u) {
    if (cs.gamma_grid.size() == 0)
        throw std::invalid_argument("hamiltonian_from_control: empty control grid");
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < cs.gamma_grid.size(); ++i) {
        double g = cs.gamma_grid[i];
        double v = cs.running_cost(x, g);
        if (cs.r1) v += z.dot(cs.r1(g));
        if (cs.r2 && u.size() > 0) v += u.dot(cs.r2(g));
        if (v < best) best = v;
    }
    return best;
}

double epsilon_argmin_selection(const ControlStructure& cs, const StateVector& x,
                                const Eigen::VectorXd& z, const Eigen::VectorXd& u) {
    if (cs.gamma_grid.size() == 0)
        throw std::invalid_argument("epsilon_argmin_selection: empty control grid");
    double best = std::numeric_limits<double>::infinity();
    double arg = cs.gamma_grid[0];
    for (Eigen::Index i = 0; i < cs.gamma_grid.size(); ++i) {
        double g = cs.gamma_grid[i];
        double v = cs.running_cost(x, g);
        if (cs.r1) v += z.dot(cs.r1(g));
        if (cs.r2 && u.size() > 0) v += u.dot(cs.r2(g));
        if (v < best) {
            best = v;
            arg = g;
        }
    }
    return arg;
}

double example2_closed_form(double z) {
    return std::abs(z) <= 2.0 ? -0.25 * z * z : 1.0 - std::abs(z);
}

DriverSpec driver_from_control(const ControlStructure& cs, double lip_x) {
    DriverSpec d;
    d.name = "control_hamiltonian";
    d.d1 = cs.d1;
    d.d2 = cs.d2;
    d.lip_x = lip_x;
    d.bound_at_zero = cs.bound_c;
    d.concave_in_zu = true;
    for (Eigen::Index i = 0; i < cs.gamma_grid.size(); ++i) {
        double g = cs.gamma_grid[i];
        if (cs.r1) d.lip_z = std::max(d.lip_z, cs.r1(g).norm());
        if (cs.r2) d.lip_u = std::max(d.lip_u, cs.r2(g).norm());
    }
    d.psi = [cs](const StateVector& x, const Eigen::VectorXd& z, const Eigen::VectorXd& u) {
        return hamiltonian_from_control(cs, x, z, u);
    };
    return d;
}

}  // namespace ebsde
