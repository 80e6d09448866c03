#include <cmath>

#include "doctest.h"
#include "ebsde/builders.hpp"
#include "ebsde/model.hpp"
#include "oracles.hpp"

using namespace ebsde;

TEST_CASE("boundary lift coefficients match direct quadrature") {
    for (int k = 1; k <= 5; ++k) {
        double expect = oracle::integrate(
            [k](double xi) {
                return (1.0 - xi / oracle::kPi) * std::sqrt(2.0 / oracle::kPi) *
                       std::sin(k * xi);
            },
            0.0, oracle::kPi);
        CHECK(boundary_lift_coefficient(k) == doctest::Approx(expect).epsilon(1e-10));
    }
    CHECK_THROWS_AS(boundary_lift_coefficient(0), std::invalid_argument);
}

TEST_CASE("boundary generator reproduces the lifted closed-form semigroup") {
    BoundaryModelOptions o;
    o.heat_modes = 4;
    GalerkinModel m = build_boundary_control_model(o);
    CHECK(m.n_modes == 5);
    CHECK(m.d1 == 1);
    CHECK(m.d2 == 4);

    Eigen::VectorXd state(5);
    state << 0.3, -0.2, 0.1, 0.05, 0.8;
    for (double t : {0.05, 0.3, 1.0}) {
        Eigen::VectorXd got = semigroup_apply(m, t, state);
        Eigen::VectorXd expect = oracle::boundary_semigroup_apply(state, t);
        CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("default noise profile projects to the identity") {
    BoundaryModelOptions o;
    o.heat_modes = 4;
    GalerkinModel m = build_boundary_control_model(o);
    CHECK((m.d.topRows(4) - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(m.d.row(4).cwiseAbs().maxCoeff() == 0.0);

    SUBCASE("an explicit constant profile matches through quadrature") {
        o.d_profile = [](double) { return 1.0; };
        GalerkinModel m2 = build_boundary_control_model(o);
        CHECK((m2.d.topRows(4) - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-4);
    }
}

TEST_CASE("reaction drift projects the pointwise nonlinearity") {
    ReactionModelOptions o;
    o.heat_modes = 3;
    o.f = [](double v) { return v; };  // identity: projection is the identity map
    o.lip_f = 1.0;
    GalerkinModel m = build_reaction_model(o);
    StateVector x(4);
    x << 0.4, -0.3, 0.2, 0.9;
    StateVector d = m.drift(x);
    for (int k = 0; k < 3; ++k) CHECK(d[k] == doctest::Approx(x[k]).epsilon(1e-5));
    CHECK(d[3] == doctest::Approx(-0.9).epsilon(1e-12));

    SUBCASE("eigenvalues are the dirichlet spectrum on the unit interval") {
        CHECK(m.a_op.kind == LinearOperator::Kind::diagonal);
        CHECK(m.a_op.eigenvalues[0] == doctest::Approx(-oracle::kPi * oracle::kPi));
        CHECK(m.a_op.eigenvalues[1] == doctest::Approx(-4.0 * oracle::kPi * oracle::kPi));
        CHECK(m.a_op.eigenvalues[3] == 0.0);
    }
}

TEST_CASE("field averages agree with adaptive quadrature") {
    auto avg = make_field_average(2, 1.0, [](double v) { return std::cos(v); }, 201);
    StateVector x(3);
    x << 0.5, -0.2, 7.0;  // extra coordinate must be ignored
    double expect = oracle::integrate(
        [&](double xi) {
            double field = 0.5 * std::sqrt(2.0) * std::sin(oracle::kPi * xi) -
                           0.2 * std::sqrt(2.0) * std::sin(2.0 * oracle::kPi * xi);
            return std::cos(field);
        },
        0.0, 1.0);
    CHECK(avg(x) == doctest::Approx(expect).epsilon(1e-9));

    SUBCASE("linear functional of the first mode") {
        auto lin = make_field_average(1, 1.0, [](double v) { return v; }, 201);
        StateVector y(1);
        y << 0.7;
        // integral of sqrt(2) sin(pi xi) is sqrt(2) * 2 / pi
        CHECK(lin(y) == doctest::Approx(0.7 * std::sqrt(2.0) * 2.0 / oracle::kPi).epsilon(1e-9));
    }
}

TEST_CASE("builder input validation") {
    BoundaryModelOptions bad;
    bad.heat_modes = 0;
    CHECK_THROWS_AS(build_boundary_control_model(bad), std::invalid_argument);
    ReactionModelOptions r;
    r.sigma_floor = 0.0;
    CHECK_THROWS_AS(build_reaction_model(r), std::invalid_argument);
    ReactionModelOptions even;
    even.quad_points = 10;
    even.f = [](double v) { return v; };
    CHECK_THROWS_AS(build_reaction_model(even), std::invalid_argument);
}
