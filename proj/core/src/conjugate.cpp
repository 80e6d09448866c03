#include "ebsde/conjugate.hpp"

#include <cmath>
#include <stdexcept>

namespace ebsde {

namespace {

// Objective of the concave conjugate: f(y) = -s.y - psi(x, y_z, y_u), convex
// in y for concave psi.
struct SliceObjective {
    const DriverSpec& driver;
    const StateVector& x;
    const Eigen::VectorXd& s;
    int dz;

    double operator()(const Eigen::VectorXd& y) const {
        return -s.dot(y) - driver.psi(x, y.head(dz), y.tail(y.size() - dz));
    }
};

// Ternary minimization of the convex 1-D slice t -> f(y + t e_i).
double refine_coordinate(const SliceObjective& f, Eigen::VectorXd& y, int i, double half_width,
                         double tol) {
    double lo = y[i] - half_width, hi = y[i] + half_width;
    Eigen::VectorXd probe = y;
    while (hi - lo > tol) {
        double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
        probe[i] = m1;
        double f1 = f(probe);
        probe[i] = m2;
        double f2 = f(probe);
        if (f1 < f2)
            hi = m2;
        else
            lo = m1;
    }
    y[i] = 0.5 * (lo + hi);
    probe[i] = y[i];
    return f(probe);
}

}  // namespace

ConjugateValue conjugate(const DriverSpec& driver, const StateVector& x, const Eigen::VectorXd& p,
                         const Eigen::VectorXd& q, const ConjugateSearchConfig& cfg) {
    if (!driver.psi) throw std::invalid_argument("conjugate: psi not set");
    if (p.size() != driver.d1 || q.size() != driver.d2)
        throw std::invalid_argument("conjugate: slope dimension mismatch");
    const int dz = driver.d1, dtot = driver.d1 + driver.d2;

    Eigen::VectorXd s(dtot);
    s.head(dz) = p;
    s.tail(dtot - dz) = q;
    SliceObjective f{driver, x, s, dz};

    // Dimensions where psi is flat and the slope vanishes contribute nothing;
    // pin them at zero instead of searching.
    std::vector<int> active;
    for (int i = 0; i < dtot; ++i) {
        double lip = i < dz ? driver.lip_z : driver.lip_u;
        if (lip == 0.0 && s[i] == 0.0) continue;
        active.push_back(i);
    }

    ConjugateValue out;
    Eigen::VectorXd best_y = Eigen::VectorXd::Zero(dtot);
    double best = f(best_y);
    if (active.empty()) {
        out.value = best;
        out.finite = true;
        out.argmin_z = best_y.head(dz);
        out.argmin_u = best_y.tail(dtot - dz);
        return out;
    }

    const double divergence_drop = 1e3 * (driver.lip_z + driver.lip_u) + 1e-6;
    const int npts = cfg.coarse_points;
    double width = cfg.initial_box * (1.0 + driver.lip_z + driver.lip_u);
    std::vector<double> box_history;
    bool converged = false;
    Eigen::VectorXd node(dtot);

    for (int box = 0; box < cfg.max_expansions; ++box) {
        Eigen::VectorXd center = best_y;
        std::vector<int> idx(active.size(), 0);
        bool more = true;
        while (more) {
            node = center;
            for (size_t a = 0; a < active.size(); ++a) {
                int i = active[a];
                node[i] = center[i] - width + 2.0 * width * idx[a] / (npts - 1);
            }
            double v = f(node);
            if (v < best) {
                best = v;
                best_y = node;
            }
            for (size_t a = 0;; ++a) {
                if (a == active.size()) {
                    more = false;
                    break;
                }
                if (++idx[a] < npts) break;
                idx[a] = 0;
            }
        }
        box_history.push_back(best);
        size_t nb = box_history.size();
        if (nb >= 3 && box_history[nb - 3] - box_history[nb - 1] > divergence_drop) {
            out.finite = false;
            out.value = -std::numeric_limits<double>::infinity();
            return out;
        }
        if (nb >= 2 && box_history[nb - 2] - box_history[nb - 1] < cfg.stability_tol) {
            converged = true;
            break;
        }
        width *= 2.0;
    }
    if (!converged) {
        out.inconclusive = true;
        return out;
    }

    // cyclic coordinate ternary refinement around the grid minimizer
    double spacing = 2.0 * width / (npts - 1);
    for (int cycle = 0; cycle < 60; ++cycle) {
        double prev = best;
        for (int i : active) best = refine_coordinate(f, best_y, i, spacing, cfg.refine_tol);
        if (prev - best < cfg.refine_tol) break;
    }

    out.value = best;
    out.finite = true;
    out.argmin_z = best_y.head(dz);
    out.argmin_u = best_y.tail(dtot - dz);
    return out;
}

void ConjugateTable::node_coords(int flat, Eigen::VectorXd& p, Eigen::VectorXd& q) const {
    p.resize(p_axes.size());
    q.resize(q_axes.size());
    int rem = flat;
    for (int i = static_cast<int>(q_axes.size()) - 1; i >= 0; --i) {
        int s = static_cast<int>(q_axes[i].size());
        q[i] = q_axes[i][rem % s];
        rem /= s;
    }
    for (int i = static_cast<int>(p_axes.size()) - 1; i >= 0; --i) {
        int s = static_cast<int>(p_axes[i].size());
        p[i] = p_axes[i][rem % s];
        rem /= s;
    }
}

double ConjugateTable::max_spacing() const {
    double h = 0.0;
    for (const auto& ax : p_axes)
        if (ax.size() > 1) h = std::max(h, ax[1] - ax[0]);
    for (const auto& ax : q_axes)
        if (ax.size() > 1) h = std::max(h, ax[1] - ax[0]);
    return h;
}

ConjugateTable build_conjugate_table(const DriverSpec& driver, const StateVector& x,
                                     const ConjugateGridConfig& cfg) {
    if (cfg.points_per_dim < 2)
        throw std::invalid_argument("build_conjugate_table: points_per_dim >= 2");
    ConjugateTable t;
    t.lip_z = driver.lip_z;
    t.lip_u = driver.lip_u;
    auto make_axis = [&cfg](double lip) {
        return lip > 0.0 ? Eigen::VectorXd::LinSpaced(cfg.points_per_dim, -lip, lip).eval()
                         : Eigen::VectorXd::Zero(1).eval();
    };
    for (int i = 0; i < driver.d1; ++i) t.p_axes.push_back(make_axis(driver.lip_z));
    for (int i = 0; i < driver.d2; ++i) t.q_axes.push_back(make_axis(driver.lip_u));

    long total = 1;
    for (const auto& ax : t.p_axes) total *= ax.size();
    for (const auto& ax : t.q_axes) total *= ax.size();
    if (total > 50'000'000)
        throw std::invalid_argument("build_conjugate_table: grid too large");

    t.values.resize(total);
    t.domain_mask.assign(total, 0);
    Eigen::VectorXd p, q;
    for (int flat = 0; flat < total; ++flat) {
        t.node_coords(flat, p, q);
        ConjugateValue cv = conjugate(driver, x, p, q, cfg.search);
        if (cv.inconclusive) {
            ++t.warning_count;
            t.values[flat] = std::numeric_limits<double>::quiet_NaN();
        } else if (cv.finite) {
            t.values[flat] = cv.value;
            t.domain_mask[flat] = 1;
        } else {
            t.values[flat] = -std::numeric_limits<double>::infinity();
        }
    }
    return t;
}

double biconjugate(const ConjugateTable& table, const Eigen::VectorXd& z,
                   const Eigen::VectorXd& u) {
    if (static_cast<int>(table.p_axes.size()) != z.size() ||
        static_cast<int>(table.q_axes.size()) != u.size())
        throw std::invalid_argument("biconjugate: argument dimension mismatch");
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd p, q;
    for (int flat = 0; flat < table.node_count(); ++flat) {
        if (!table.domain_mask[flat]) continue;
        table.node_coords(flat, p, q);
        double v = -z.dot(p) - u.dot(q) - table.values[flat];
        if (v < best) best = v;
    }
    if (!std::isfinite(best))
        throw std::runtime_error("biconjugate: empty conjugate domain");
    return best;
}

}  // namespace ebsde
