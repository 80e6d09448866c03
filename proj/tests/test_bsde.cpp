#include <cmath>

#include "doctest.h"
#include "ebsde/bsde.hpp"
#include "ebsde/builders.hpp"
#include "oracles.hpp"

using namespace ebsde;

namespace {

DriverSpec constant_driver(double c) {
    DriverSpec d;
    d.name = "constant";
    d.d1 = 1;
    d.d2 = 0;
    d.bound_at_zero = std::abs(c);
    d.psi = [c](const StateVector&, const Eigen::VectorXd&, const Eigen::VectorXd&) { return c; };
    return d;
}

DriverSpec cos_driver() {
    DriverSpec d;
    d.name = "cos";
    d.d1 = 1;
    d.d2 = 0;
    d.lip_x = 1.0;
    d.bound_at_zero = 1.0;
    d.psi = [](const StateVector& x, const Eigen::VectorXd&, const Eigen::VectorXd&) {
        return std::cos(x[0]);
    };
    return d;
}

}  // namespace

TEST_CASE("polynomial feature map enumerates total-degree monomials") {
    RegressionBasis basis;
    basis.degree = 3;
    FeatureMap fm(basis, 2);
    REQUIRE(fm.size() == 10);
    StateVector x(2);
    x << 2.0, 3.0;
    Eigen::VectorXd phi = fm.eval(x);
    CHECK(phi[0] == 1.0);
    CHECK(phi.sum() == doctest::Approx(90.0));

    Eigen::MatrixXd states(2, 2);
    states << 2.0, 3.0, 0.0, 0.0;
    Eigen::MatrixXd rows;
    fm.eval_rows(states, rows);
    REQUIRE(rows.rows() == 2);
    REQUIRE(rows.cols() == 10);
    CHECK((rows.row(0).transpose() - phi).norm() == 0.0);
    CHECK(rows.row(1).sum() == doctest::Approx(1.0));
}

TEST_CASE("projected feature map ignores the dropped coordinates") {
    RegressionBasis basis;
    basis.degree = 3;
    basis.projection = {1};
    FeatureMap fm(basis, 2);
    REQUIRE(fm.size() == 4);
    StateVector x(2);
    x << 5.0, 2.0;
    Eigen::VectorXd phi = fm.eval(x);
    CHECK(phi[0] == 1.0);
    CHECK(phi[1] == doctest::Approx(2.0));
    CHECK(phi[2] == doctest::Approx(4.0));
    CHECK(phi[3] == doctest::Approx(8.0));
    x[0] = -40.0;
    CHECK((fm.eval(x) - phi).norm() == 0.0);
}

TEST_CASE("radial feature map is one gaussian per center") {
    RegressionBasis basis;
    basis.kind = RegressionBasis::Kind::radial;
    basis.centers = Eigen::MatrixXd(3, 1);
    basis.centers << -1.0, 0.0, 1.0;
    basis.bandwidth = 0.7;
    FeatureMap fm(basis, 1);
    REQUIRE(fm.size() == 4);
    Eigen::VectorXd phi = fm.eval(StateVector::Constant(1, 0.4));
    CHECK(phi[0] == 1.0);
    for (int c = 0; c < 3; ++c) {
        double d = 0.4 - basis.centers(c, 0);
        CHECK(phi[1 + c] == doctest::Approx(std::exp(-d * d / (2.0 * 0.49))));
    }

    RegressionBasis bad = basis;
    bad.bandwidth = 0.0;
    CHECK_THROWS_AS(FeatureMap(bad, 1), std::invalid_argument);
    bad = basis;
    bad.centers = Eigen::MatrixXd::Zero(3, 2);
    CHECK_THROWS_AS(FeatureMap(bad, 1), std::invalid_argument);
}

TEST_CASE("constant driver reproduces the discrete discounted closed form") {
    GalerkinModel model = build_ou_model({});
    DriverSpec driver = constant_driver(1.5);
    RegressionBasis basis;
    basis.degree = 2;

    DiscountedConfig cfg;
    cfg.tail_tolerance = 1e-4;
    cfg.solver.dt = 0.05;
    cfg.solver.n_paths = 64;
    cfg.solver.seed = 99;
    cfg.solver.exact_diag_variance = true;
    cfg.solver.fresh_path_check = true;

    std::vector<StateVector> pts{StateVector::Constant(1, 0.7), StateVector::Constant(1, -0.2)};
    DiscountedValue dv = solve_discounted(model, driver, 0.5, pts, basis, cfg);

    const int m = static_cast<int>(std::lround(dv.truncation_T / cfg.solver.dt));
    CHECK(m * cfg.solver.dt == doctest::Approx(dv.truncation_T));
    CHECK(dv.truncation_T >= 1.0);
    CHECK(dv.tail_bound ==
          doctest::Approx(std::exp(-0.5 * dv.truncation_T) * 1.5 / 0.5).epsilon(1e-12));

    double exact = oracle::constant_driver_value(1.5, 0.5, cfg.solver.dt, m);
    REQUIRE(dv.values.size() == 2);
    for (const auto& gv : dv.values) {
        // the ridge term perturbs the fitted constant by O(ridge) per step
        CHECK(std::abs(gv.value - exact) < 1e-7);
        CHECK(gv.std_error < 1e-9);
        CHECK(std::abs(gv.value - 1.5 / 0.5) < 2.0 * dv.tail_bound + 1e-8);
        CHECK(gv.n == 64);
    }
    CHECK(dv.values[0].x[0] == doctest::Approx(0.7));
    CHECK(dv.values[1].x[0] == doctest::Approx(-0.2));

    // the stationary window coefficient sits at the fixed point c/alpha
    CHECK(std::abs(dv.y_rep[0] - 3.0) < 2e-3);
    for (int k = 1; k < dv.y_rep.size(); ++k) CHECK(std::abs(dv.y_rep[k]) < 1e-6);
    CHECK(dv.z_rep.norm() < 1e-8);
}

TEST_CASE("replayed bellman residual vanishes for the constant driver") {
    GalerkinModel model = build_ou_model({});
    DriverSpec driver = constant_driver(1.5);
    RegressionBasis basis;
    basis.degree = 2;

    BsdeConfig cfg;
    cfg.dt = 0.05;
    cfg.n_paths = 64;
    cfg.seed = 99;
    cfg.exact_diag_variance = true;
    cfg.start_points = {StateVector::Constant(1, 0.7)};
    cfg.fresh_path_check = true;

    BsdeSolution sol = solve_finite_horizon(model, driver, nullptr, 4.0, 0.5, basis, cfg);
    REQUIRE(sol.initial_values.size() == 1);
    double exact = oracle::constant_driver_value(1.5, 0.5, 0.05, 80);
    CHECK(std::abs(sol.initial_values[0].value - exact) < 1e-8);

    // frozen-coefficient replay on fresh paths telescopes to the same sum
    REQUIRE(sol.fresh_initial_values.size() == 1);
    CHECK(std::abs(sol.fresh_initial_values[0].value - exact) < 1e-8);
    CHECK(sol.fresh_initial_values[0].std_error < 1e-9);

    ResidualReport rep = residual_diagnostic(sol, model, driver, 1e-10);
    CHECK(rep.mean_square < 1e-12);
    CHECK(rep.below_threshold);
    REQUIRE(rep.per_step_ms.size() == 80);
    CHECK(rep.per_step_ms.maxCoeff() < 1e-12);
}

TEST_CASE("discounted cos value on the ou flow tracks the skeleton oracle") {
    GalerkinModel model = build_ou_model({});
    oracle::Ou ou;
    DriverSpec driver = cos_driver();
    RegressionBasis basis;
    basis.degree = 5;

    DiscountedConfig cfg;
    cfg.tail_tolerance = 1e-3;
    cfg.solver.dt = 0.02;
    cfg.solver.n_paths = 4000;
    cfg.solver.seed = 2024;
    cfg.solver.exact_diag_variance = true;

    std::vector<StateVector> pts{StateVector::Constant(1, 0.5), StateVector::Constant(1, -0.3)};
    DiscountedValue dv = solve_discounted(model, driver, 0.4, pts, basis, cfg);
    const int m = static_cast<int>(std::lround(dv.truncation_T / cfg.solver.dt));

    for (int g = 0; g < 2; ++g) {
        double ref = ou.discounted_cos_discrete(pts[g][0], 0.4, cfg.solver.dt, m);
        INFO("group ", g, " value ", dv.values[g].value, " oracle ", ref);
        CHECK(std::abs(dv.values[g].value - ref) < 3.0 * dv.values[g].std_error + 0.01);
        CHECK(dv.values[g].std_error < 0.02);
    }
    // discrete skeleton sum and the continuous-time integral agree at this dt
    CHECK(std::abs(ou.discounted_cos_discrete(0.5, 0.4, cfg.solver.dt, m) -
                   ou.discounted_cos(0.5, 0.4)) < 0.02);
    CHECK(dv.max_condition > 1.0);
}

TEST_CASE("in-sample projection residuals are feature orthogonal") {
    GalerkinModel model = build_ou_model({});
    DriverSpec driver = cos_driver();
    RegressionBasis basis;
    basis.degree = 3;

    BsdeConfig cfg;
    cfg.dt = 0.05;
    cfg.n_paths = 500;
    cfg.seed = 71;
    cfg.exact_diag_variance = true;
    cfg.start_points = {StateVector::Zero(1)};

    BsdeSolution sol = solve_finite_horizon(model, driver, nullptr, 5.0, 0.3, basis, cfg);
    ResidualReport rep = residual_diagnostic(sol, model, driver, 0.05);
    CHECK(rep.below_threshold);
    CHECK(rep.mean_square < 0.05);
    CHECK(rep.max_feature_corr < 1e-5);
}

TEST_CASE("full storage shapes and the memory guard") {
    GalerkinModel model = build_ou_model({});
    DriverSpec driver = cos_driver();
    RegressionBasis basis;
    basis.degree = 2;

    BsdeConfig cfg;
    cfg.dt = 0.05;
    cfg.n_paths = 50;
    cfg.seed = 5;
    cfg.start_points = {StateVector::Zero(1), StateVector::Constant(1, 1.0)};
    cfg.store_full = true;

    BsdeSolution sol = solve_finite_horizon(model, driver, nullptr, 0.2, 0.5, basis, cfg);
    CHECK(sol.full);
    REQUIRE(sol.y.rows() == 100);
    REQUIRE(sol.y.cols() == 5);
    REQUIRE(sol.z.size() == 4);
    REQUIRE(sol.u2.size() == 4);
    CHECK(sol.z[0].rows() == 100);
    CHECK(sol.z[0].cols() == 1);
    CHECK(sol.y.allFinite());
    REQUIRE(sol.step_stats.size() == 5);
    CHECK(sol.step_stats.back().mean_abs_z == 0.0);
    CHECK(sol.times.size() == 5);
    CHECK(sol.times[4] == doctest::Approx(0.2));

    BsdeConfig tight = cfg;
    tight.n_paths = 2000;
    tight.memory_cap_gb = 1e-6;
    CHECK_THROWS_AS(solve_finite_horizon(model, driver, nullptr, 1.0, 0.5, basis, tight),
                    std::invalid_argument);
}

TEST_CASE("discounted solver rejects degenerate inputs") {
    GalerkinModel model = build_ou_model({});
    DriverSpec driver = constant_driver(1.0);
    RegressionBasis basis;
    DiscountedConfig cfg;
    cfg.solver.n_paths = 8;
    CHECK_THROWS_AS(
        solve_discounted(model, driver, 0.0, {StateVector::Zero(1)}, basis, cfg),
        std::invalid_argument);
    CHECK_THROWS_AS(solve_discounted(model, driver, 0.5, {}, basis, cfg), std::invalid_argument);
}
