#include <cmath>

#include "doctest.h"
#include "ebsde/builders.hpp"
#include "ebsde/control.hpp"
#include "oracles.hpp"

using namespace ebsde;

namespace {

// scalar control on [-1, 1], R1 = gamma into the W1 channel, cost cos(x) + g^2
ControlStructure ou_control(int grid_points = 2001) {
    ControlStructure cs;
    cs.gamma_grid = Eigen::VectorXd::LinSpaced(grid_points, -1.0, 1.0);
    cs.r1 = [](double g) { return Eigen::VectorXd::Constant(1, g); };
    cs.r2 = [](double) { return Eigen::VectorXd(0); };
    cs.running_cost = [](const StateVector& x, double g) { return std::cos(x[0]) + g * g; };
    cs.bound_c = 2.0;
    cs.d1 = 1;
    cs.d2 = 0;
    return cs;
}

ErgodicSolution flat_solution(double lambda_hat, double lambda_stderr) {
    ErgodicSolution sol;
    RegressionBasis basis;
    basis.degree = 0;
    sol.features = FeatureMap(basis, 1);
    sol.x_ref = StateVector::Zero(1);
    sol.lambda_hat = lambda_hat;
    sol.lambda_stderr = lambda_stderr;
    sol.vbar_coeffs = Eigen::VectorXd::Zero(1);
    sol.zeta1_coeffs = Eigen::MatrixXd::Zero(1, 1);
    sol.zeta2_coeffs = Eigen::MatrixXd::Zero(1, 0);
    return sol;
}

}  // namespace

TEST_CASE("long-run cost of a constant policy matches the shifted ou average") {
    GalerkinModel model = build_ou_model({});
    ControlStructure cs = ou_control();
    CostConfig cfg;
    cfg.sim.dt = 0.02;
    cfg.sim.horizon = 100.0;
    cfg.sim.n_paths = 400;
    cfg.sim.seed = 606;
    cfg.sim.exact_diag_variance = true;
    cfg.mu_hint = 1.0;

    Policy pol = Policy::constant_policy(0.5);
    CHECK(pol.id == "const(0.5)");
    CostEstimate ce = ergodic_cost(model, cs, StateVector::Zero(1), pol, cfg);

    // stationary law of dX = (-X + 0.5) dt + dW is N(0.5, 1/2)
    double expect = oracle::cos_moment(0.5, 0.5) + 0.25;
    INFO("j_hat ", ce.j_hat, " expect ", expect, " se ", ce.std_error);
    CHECK(std::abs(ce.j_hat - expect) < 3.0 * ce.std_error + 0.01);
    CHECK(ce.doubling_ok);
    CHECK(ce.burn_in == doctest::Approx(5.0));
    CHECK(ce.horizon_T == doctest::Approx(100.0));
    CHECK(ce.burn_in < ce.horizon_T);
    CHECK(ce.n_paths == 400);
}

TEST_CASE("constant running cost averages exactly and clamping hits the hull") {
    GalerkinModel model = build_ou_model({});
    ControlStructure cs = ou_control();
    ControlStructure flat = cs;
    flat.running_cost = [](const StateVector&, double) { return 2.7; };

    CostConfig cfg;
    cfg.sim.dt = 0.05;
    cfg.sim.horizon = 10.0;
    cfg.sim.n_paths = 16;
    cfg.sim.seed = 11;
    cfg.mu_hint = 1.0;

    CostEstimate ce =
        ergodic_cost(model, flat, StateVector::Zero(1), Policy::constant_policy(0.3), cfg);
    CHECK(ce.j_hat == doctest::Approx(2.7).epsilon(1e-12));
    CHECK(ce.std_error == 0.0);
    CHECK(ce.doubling_ok);

    // a policy outside the grid hull behaves exactly like the clamped endpoint
    CostEstimate wild =
        ergodic_cost(model, cs, StateVector::Zero(1), Policy::constant_policy(5.0), cfg);
    CostEstimate edge =
        ergodic_cost(model, cs, StateVector::Zero(1), Policy::constant_policy(1.0), cfg);
    CHECK(wild.j_hat == edge.j_hat);

    // tiny relaxation-rate hints cap the burn-in at half the horizon
    CostConfig slow = cfg;
    slow.mu_hint = 0.01;
    CostEstimate capped =
        ergodic_cost(model, flat, StateVector::Zero(1), Policy::constant_policy(0.0), slow);
    CHECK(capped.burn_in == doctest::Approx(5.0));

    CHECK_THROWS_AS(ergodic_cost(model, cs, StateVector::Zero(2),
                                 Policy::constant_policy(0.0), cfg),
                    std::invalid_argument);
    Policy hollow;
    CHECK_THROWS_AS(ergodic_cost(model, cs, StateVector::Zero(1), hollow, cfg),
                    std::invalid_argument);
}

TEST_CASE("feedback synthesis minimizes the sampled hamiltonian") {
    GalerkinModel model = build_ou_model({});
    ControlStructure cs = ou_control();

    ErgodicSolution sol = flat_solution(0.9, 0.0);
    sol.zeta1_coeffs(0, 0) = 0.6;
    Policy fb = synthesize_feedback(sol, cs, model);
    CHECK(fb.kind == Policy::Kind::state_feedback);
    CHECK(fb.id == "feedback");
    // argmin of g^2 + 0.6 g on the grid is the node -0.3, independent of x
    for (double xv : {-1.0, 0.0, 2.0})
        CHECK(fb.gamma_of(0.0, StateVector::Constant(1, xv)) ==
              doctest::Approx(-0.3).epsilon(1e-12));

    ErgodicSolution zero = flat_solution(0.9, 0.0);
    Policy idle = synthesize_feedback(zero, cs, model);
    CHECK(idle.gamma_of(0.0, StateVector::Constant(1, 0.4)) == doctest::Approx(0.0));

    // a degenerate representation falls back to the previous selection
    ErgodicSolution broken = flat_solution(0.9, 0.0);
    broken.zeta1_coeffs(0, 0) = std::numeric_limits<double>::quiet_NaN();
    Policy guarded = synthesize_feedback(broken, cs, model);
    CHECK(guarded.gamma_of(0.0, StateVector::Zero(1)) == doctest::Approx(0.0));
}

TEST_CASE("gap report flags violations of the optimality bound") {
    GalerkinModel model = build_ou_model({});
    ControlStructure cs = ou_control();
    CostConfig cfg;
    cfg.sim.dt = 0.02;
    cfg.sim.horizon = 60.0;
    cfg.sim.n_paths = 300;
    cfg.sim.seed = 1234;
    cfg.sim.exact_diag_variance = true;
    cfg.mu_hint = 1.0;

    std::vector<Policy> policies{Policy::constant_policy(0.5)};
    Policy fb_like = Policy::constant_policy(0.5, "fb");
    fb_like.kind = Policy::Kind::state_feedback;
    policies.push_back(fb_like);

    const double j_expect = oracle::cos_moment(0.5, 0.5) + 0.25;  // about 0.9335

    // lambda consistent with the cost: bound and gap both pass
    GapReport ok = verify_bound_and_gap(model, cs, flat_solution(j_expect, 0.003),
                                        StateVector::Zero(1), policies, cfg);
    REQUIRE(ok.rows.size() == 2);
    CHECK(ok.all_pass);
    CHECK(ok.rows[0].policy_id == "const(0.5)");
    CHECK_FALSE(ok.rows[0].is_feedback);
    CHECK(ok.rows[1].is_feedback);
    CHECK(ok.rows[1].gap_ok);
    for (const auto& row : ok.rows) {
        CHECK(row.lower_bound_ok);
        CHECK(std::abs(row.gap) < 0.05);
        CHECK(row.combined_stderr > 0.0);
        CHECK(row.burn_in < row.horizon_T);
    }

    // lambda far above the achievable cost: the lower bound must fail
    GapReport bad = verify_bound_and_gap(model, cs, flat_solution(1.05, 0.003),
                                         StateVector::Zero(1), policies, cfg);
    CHECK_FALSE(bad.all_pass);
    CHECK_FALSE(bad.rows[0].lower_bound_ok);
    CHECK_FALSE(bad.rows[1].gap_ok);
}

TEST_CASE("girsanov reweighting agrees with direct augmented simulation") {
    GalerkinModel model = build_ou_model({});
    ControlStructure cs = ou_control();
    GirsanovConfig cfg;
    cfg.sim.dt = 0.01;
    cfg.sim.n_paths = 4000;
    cfg.sim.seed = 321;
    cfg.sim.exact_diag_variance = true;

    GirsanovReport rep = girsanov_consistency_check(model, cs, StateVector::Zero(1),
                                                    Policy::constant_policy(0.5), 1.0, cfg);
    CHECK_FALSE(rep.inconclusive);
    CHECK(rep.agree_3sigma);
    CHECK(rep.ess_fraction > 0.5);

    double expect = oracle::integrate(
                        [](double t) {
                            double mean = 0.5 * (1.0 - std::exp(-t));
                            double var = 0.5 * (1.0 - std::exp(-2.0 * t));
                            return oracle::cos_moment(mean, var);
                        },
                        0.0, 1.0) +
                    0.25;
    INFO("direct ", rep.direct_mean, " weighted ", rep.weighted_mean, " expect ", expect);
    CHECK(std::abs(rep.direct_mean - expect) < 3.0 * rep.direct_stderr + 0.03);
    CHECK(std::abs(rep.weighted_mean - expect) < 3.0 * rep.weighted_stderr + 0.03);
}

TEST_CASE("girsanov check is exact for the null control and guards wild ones") {
    GalerkinModel model = build_ou_model({});
    ControlStructure cs = ou_control();
    GirsanovConfig cfg;
    cfg.sim.dt = 0.02;
    cfg.sim.n_paths = 500;
    cfg.sim.seed = 88;

    GirsanovReport rep = girsanov_consistency_check(model, cs, StateVector::Zero(1),
                                                    Policy::constant_policy(0.0), 1.0, cfg);
    // gamma = 0: density is identically one, both routes see the same paths
    CHECK(rep.ess_fraction == doctest::Approx(1.0));
    CHECK(rep.density_cov == doctest::Approx(0.0));
    CHECK(std::abs(rep.direct_mean - rep.weighted_mean) < 1e-12);
    CHECK(rep.agree_3sigma);
    CHECK_FALSE(rep.inconclusive);

    // an aggressive drift makes the density collapse onto a few paths
    ControlStructure wild = cs;
    wild.r1 = [](double g) { return Eigen::VectorXd::Constant(1, 40.0 * g); };
    rep = girsanov_consistency_check(model, wild, StateVector::Zero(1),
                                     Policy::constant_policy(0.5), 1.0, cfg);
    CHECK(rep.inconclusive);

    CHECK_THROWS_AS(girsanov_consistency_check(model, cs, StateVector::Zero(1),
                                               Policy::constant_policy(0.0), 0.0, cfg),
                    std::invalid_argument);
}
