#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "ebsde/builders.hpp"
#include "ebsde/forward.hpp"
#include "ebsde/rng.hpp"
#include "oracles.hpp"

using namespace ebsde;

TEST_CASE("ou terminal law matches the exact transition moments") {
    GalerkinModel m = build_ou_model({1.0, 1.0});
    SimConfig cfg;
    cfg.dt = 0.1;
    cfg.horizon = 1.0;
    cfg.n_paths = 40000;
    cfg.seed = 707;
    cfg.exact_diag_variance = true;
    StateVector x0(1);
    x0 << 2.0;
    PathBundle b = simulate(m, x0, {}, cfg);
    REQUIRE(b.n_steps() == 10);
    Eigen::VectorXd terminal = b.states.back().col(0);
    double mean = terminal.mean();
    double var = (terminal.array() - mean).square().mean();

    oracle::Ou ou{1.0, 1.0};
    double se_mean = std::sqrt(ou.variance(1.0) / cfg.n_paths);
    CHECK(std::abs(mean - ou.mean(2.0, 1.0)) < 4.0 * se_mean);
    CHECK(var == doctest::Approx(ou.variance(1.0)).epsilon(0.03));
}

TEST_CASE("simulate equals a hand-rolled stepper loop on the same streams") {
    BoundaryModelOptions o;
    o.heat_modes = 3;
    o.sigma = [](double y) { return 1.0 + 0.2 * std::sin(y); };
    o.lip_sigma = 0.2;
    o.bound_sigma = 1.2;
    o.sigma_floor = 0.8;
    GalerkinModel m = build_boundary_control_model(o);
    SimConfig cfg;
    cfg.dt = 0.05;
    cfg.horizon = 0.5;
    cfg.n_paths = 6;
    cfg.seed = 12;
    PathBundle b = simulate(m, StateVector::Zero(4), {}, cfg);

    Stepper st(m, cfg);
    Eigen::VectorXd z(st.normals_per_step());
    for (int p = 0; p < cfg.n_paths; ++p) {
        PathNormals rng(cfg.seed, static_cast<uint64_t>(p), st.normals_per_step());
        StateVector x = StateVector::Zero(4);
        for (int j = 0; j < b.n_steps(); ++j) {
            rng.fill_step(j, z.data());
            st.advance(j * st.dt(), x, z.data(), {});
            for (int k = 0; k < 4; ++k) CHECK(x[k] == b.states[j + 1](p, k));
        }
    }
}

TEST_CASE("synchronous coupling of additive-noise ou decays deterministically") {
    GalerkinModel m = build_ou_model({1.0, 1.0});
    SimConfig cfg;
    cfg.dt = 0.05;
    cfg.horizon = 6.0;
    cfg.n_paths = 200;
    cfg.seed = 55;
    StateVector x0 = StateVector::Zero(1), x0p = StateVector::Constant(1, 1.0);
    DecayFit fit = estimate_contraction(m, x0, x0p, cfg, {1.0});
    CHECK_FALSE(fit.degenerate);
    // additive noise cancels exactly; the difference is e^{-t} pathwise
    CHECK(fit.mu_hat == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(fit.r_squared > 0.999999);
    CHECK(fit.mean_abs_diff[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("moment bound report recovers the stationary mean-abs level") {
    GalerkinModel m = build_ou_model({1.0, 1.0});
    SimConfig cfg;
    cfg.dt = 0.05;
    cfg.horizon = 8.0;
    cfg.n_paths = 4000;
    cfg.seed = 31;
    cfg.exact_diag_variance = true;
    MomentReport rep = estimate_moment_bound(m, StateVector::Zero(1), cfg);
    oracle::Ou ou{1.0, 1.0};
    CHECK(rep.running_max == doctest::Approx(ou.sup_mean_abs_from_zero()).epsilon(0.05));
    CHECK_FALSE(rep.growth_flag);
}

TEST_CASE("path bundle round-trips through the binary dump") {
    BoundaryModelOptions o;
    o.heat_modes = 2;
    GalerkinModel m = build_boundary_control_model(o);
    SimConfig cfg;
    cfg.dt = 0.1;
    cfg.horizon = 0.3;
    cfg.n_paths = 4;
    cfg.seed = 99;
    PathBundle b = simulate(m, StateVector::Zero(3), {}, cfg);
    const char* path = "bundle_roundtrip.bin";
    dump_path_bundle(b, path);
    PathBundle r = load_path_bundle(path);
    std::remove(path);

    CHECK(r.seed == b.seed);
    CHECK(r.dt == b.dt);
    REQUIRE(r.n_steps() == b.n_steps());
    REQUIRE(r.n_paths() == b.n_paths());
    CHECK((r.times - b.times).cwiseAbs().maxCoeff() == 0.0);
    for (int j = 0; j <= b.n_steps(); ++j)
        CHECK((r.states[j] - b.states[j]).cwiseAbs().maxCoeff() == 0.0);
    for (int j = 0; j < b.n_steps(); ++j) {
        CHECK((r.dw1[j] - b.dw1[j]).cwiseAbs().maxCoeff() == 0.0);
        CHECK((r.dw2[j] - b.dw2[j]).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("explicit euler blow-up raises the dedicated error") {
    GalerkinModel m = build_ou_model({300.0, 1.0});
    SimConfig cfg;
    cfg.dt = 0.1;
    cfg.horizon = 30.0;
    cfg.n_paths = 2;
    cfg.seed = 1;
    cfg.scheme = Scheme::euler_maruyama;
    StateVector x0 = StateVector::Constant(1, 1.0);
    CHECK_THROWS_AS(simulate(m, x0, {}, cfg), BlowUpError);
}

TEST_CASE("drift augmentation shifts the mean as a girsanov drift would") {
    GalerkinModel m = build_ou_model({1.0, 1.0});
    SimConfig cfg;
    cfg.dt = 0.05;
    cfg.horizon = 4.0;
    cfg.n_paths = 20000;
    cfg.seed = 3003;
    cfg.exact_diag_variance = true;
    DriftAugmentation aug;
    aug.enabled = true;
    aug.p_process = [](double, const StateVector&) { return Eigen::VectorXd::Constant(1, 0.5); };
    aug.q_process = [](double, const StateVector&) { return Eigen::VectorXd(0); };
    PathBundle b = simulate(m, StateVector::Zero(1), aug, cfg);
    // dX = -X dt + (dW + 0.5 dt): long-run mean 0.5
    double mean = b.states.back().col(0).mean();
    CHECK(mean == doctest::Approx(0.5 * (1.0 - std::exp(-4.0))).epsilon(0.05));
}
