#include <cmath>
#include <limits>

#include "doctest.h"
#include "ebsde/conjugate.hpp"
#include "oracles.hpp"

using namespace ebsde;

namespace {

DriverSpec scalar_driver(std::function<double(double)> f, double lip_z) {
    DriverSpec d;
    d.name = "scalar";
    d.d1 = 1;
    d.d2 = 0;
    d.lip_z = lip_z;
    d.concave_in_zu = true;
    d.psi = [f](const StateVector&, const Eigen::VectorXd& z, const Eigen::VectorXd&) {
        return f(z[0]);
    };
    return d;
}

}  // namespace

TEST_CASE("pointwise conjugate of a smooth concave driver") {
    DriverSpec d = scalar_driver([](double z) { return -z * z; }, 2.0);
    StateVector x = StateVector::Zero(1);
    Eigen::VectorXd q(0);
    for (double pv : {-1.5, -0.4, 0.0, 0.8, 2.0}) {
        ConjugateValue cv = conjugate(d, x, Eigen::VectorXd::Constant(1, pv), q);
        REQUIRE(cv.finite);
        CHECK_FALSE(cv.inconclusive);
        CHECK(std::abs(cv.value - (-pv * pv / 4.0)) < 1e-9);
        CHECK(std::abs(cv.argmin_z[0] - pv / 2.0) < 1e-6);
    }
}

TEST_CASE("pointwise conjugate separates across z and u blocks") {
    DriverSpec d;
    d.d1 = 1;
    d.d2 = 1;
    d.lip_z = 2.0;
    d.lip_u = 1.0;
    d.psi = [](const StateVector&, const Eigen::VectorXd& z, const Eigen::VectorXd& u) {
        return -z[0] * z[0] - 3.0 * u[0] * u[0] + u[0];
    };
    StateVector x = StateVector::Zero(1);
    ConjugateValue cv = conjugate(d, x, Eigen::VectorXd::Constant(1, 0.6),
                                  Eigen::VectorXd::Constant(1, -0.2));
    REQUIRE(cv.finite);
    double pv = 0.6, qv = -0.2;
    double expect = -pv * pv / 4.0 - (qv + 1.0) * (qv + 1.0) / 12.0;
    CHECK(std::abs(cv.value - expect) < 1e-9);
    CHECK(std::abs(cv.argmin_z[0] - pv / 2.0) < 1e-6);
    CHECK(std::abs(cv.argmin_u[0] - (qv + 1.0) / 6.0) < 1e-6);
}

TEST_CASE("conjugate table of the quadratic-cost hamiltonian") {
    DriverSpec d = scalar_driver([](double z) { return example2_closed_form(z); }, 1.0);
    StateVector x = StateVector::Zero(1);
    ConjugateGridConfig cfg;
    cfg.points_per_dim = 101;
    ConjugateTable t = build_conjugate_table(d, x, cfg);

    REQUIRE(t.node_count() == 101);
    CHECK(t.warning_count == 0);
    CHECK(t.max_spacing() == doctest::Approx(0.02));
    Eigen::VectorXd p, q;
    for (int k = 0; k < t.node_count(); ++k) {
        t.node_coords(k, p, q);
        REQUIRE(t.domain_mask[k] == 1);
        CHECK(std::abs(t.values[k] - oracle::example2_conjugate(p[0])) < 1e-8);
    }

    // biconjugation recovers the driver up to the grid resolution
    Eigen::VectorXd u(0);
    for (int i = 0; i <= 120; ++i) {
        double zv = -3.0 + 0.05 * i;
        double rec = biconjugate(t, Eigen::VectorXd::Constant(1, zv), u);
        CHECK(std::abs(rec - example2_closed_form(zv)) < 2e-4);
    }
}

TEST_CASE("linear drivers pin the conjugate domain to a single slope") {
    DriverSpec d = scalar_driver([](double z) { return 0.5 * z; }, 1.0);
    StateVector x = StateVector::Zero(1);
    ConjugateGridConfig cfg;
    cfg.points_per_dim = 101;
    ConjugateTable t = build_conjugate_table(d, x, cfg);

    CHECK(t.warning_count == 0);
    int finite_nodes = 0, finite_at = -1;
    for (int k = 0; k < t.node_count(); ++k) {
        if (t.domain_mask[k]) {
            ++finite_nodes;
            finite_at = k;
        } else {
            CHECK(t.values[k] == -std::numeric_limits<double>::infinity());
        }
    }
    REQUIRE(finite_nodes == 1);
    Eigen::VectorXd p, q;
    t.node_coords(finite_at, p, q);
    CHECK(p[0] == doctest::Approx(-0.5));
    CHECK(std::abs(t.values[finite_at]) < 1e-9);

    // a slope outside the axis range leaves no admissible node at all
    DriverSpec narrow = scalar_driver([](double z) { return 0.5 * z; }, 0.3);
    ConjugateGridConfig ncfg;
    ncfg.points_per_dim = 51;
    ConjugateTable empty = build_conjugate_table(narrow, x, ncfg);
    for (int k = 0; k < empty.node_count(); ++k) CHECK(empty.domain_mask[k] == 0);
    CHECK_THROWS_AS(biconjugate(empty, Eigen::VectorXd::Zero(1), Eigen::VectorXd(0)),
                    std::runtime_error);
}

TEST_CASE("state dependence shifts conjugate values without moving the domain") {
    DriverSpec d;
    d.d1 = 1;
    d.d2 = 0;
    d.lip_z = 1.0;
    d.lip_x = 1.0;
    d.psi = [](const StateVector& x, const Eigen::VectorXd& z, const Eigen::VectorXd&) {
        return example2_closed_form(z[0]) + std::cos(x[0]);
    };
    ConjugateGridConfig cfg;
    cfg.points_per_dim = 41;
    ConjugateTable base = build_conjugate_table(d, StateVector::Zero(1), cfg);
    for (double xv : {-1.0, 0.4, 2.2}) {
        ConjugateTable shifted = build_conjugate_table(d, StateVector::Constant(1, xv), cfg);
        REQUIRE(shifted.node_count() == base.node_count());
        for (int k = 0; k < base.node_count(); ++k) {
            REQUIRE(shifted.domain_mask[k] == base.domain_mask[k]);
            if (!base.domain_mask[k]) continue;
            CHECK(shifted.values[k] - base.values[k] ==
                  doctest::Approx(-(std::cos(xv) - 1.0)).epsilon(1e-7));
        }
    }
}

TEST_CASE("flat control channels collapse to a single zero node") {
    DriverSpec d;
    d.d1 = 1;
    d.d2 = 4;
    d.lip_z = 1.0;
    d.lip_u = 0.0;
    d.psi = [](const StateVector&, const Eigen::VectorXd& z, const Eigen::VectorXd&) {
        return example2_closed_form(z[0]);
    };
    ConjugateGridConfig cfg;
    cfg.points_per_dim = 41;
    ConjugateTable t = build_conjugate_table(d, StateVector::Zero(1), cfg);
    CHECK(t.node_count() == 41);
    REQUIRE(t.q_axes.size() == 4);
    for (const auto& ax : t.q_axes) {
        REQUIRE(ax.size() == 1);
        CHECK(ax[0] == 0.0);
    }
    Eigen::VectorXd p, q;
    t.node_coords(7, p, q);
    CHECK(p.size() == 1);
    CHECK(q.size() == 4);
    CHECK(q.norm() == 0.0);

    ConjugateGridConfig bad;
    bad.points_per_dim = 1;
    CHECK_THROWS_AS(build_conjugate_table(d, StateVector::Zero(1), bad), std::invalid_argument);
}
