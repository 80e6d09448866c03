#include <cmath>
#include <random>

#include <benchmark/benchmark.h>

#include "ebsde/bsde.hpp"
#include "ebsde/builders.hpp"
#include "ebsde/conjugate.hpp"
#include "ebsde/driver.hpp"
#include "ebsde/forward.hpp"

namespace {

ebsde::GalerkinModel reaction_model() {
    ebsde::ReactionModelOptions opt;
    opt.heat_modes = 4;
    opt.f = [](double v) { return -0.3 * v + 0.2 * std::sin(v); };
    opt.mu_f = 0.1;
    opt.lip_f = 0.5;
    opt.sigma = [](double y) { return 1.0 + 0.3 * std::sin(y); };
    opt.lip_sigma = 0.3;
    opt.bound_sigma = 1.3;
    opt.sigma_floor = 0.7;
    opt.quad_points = 33;
    return ebsde::build_reaction_model(opt);
}

ebsde::ControlStructure quadratic_control() {
    ebsde::ControlStructure cs;
    cs.gamma_grid = Eigen::VectorXd::LinSpaced(201, -1.0, 1.0);
    cs.r1 = [](double g) { return Eigen::VectorXd::Constant(1, g).eval(); };
    cs.r2 = [](double) { return Eigen::VectorXd(0); };
    cs.running_cost = [](const ebsde::StateVector&, double g) { return g * g; };
    cs.bound_c = 1.0;
    cs.d1 = 1;
    cs.d2 = 0;
    return cs;
}

ebsde::DriverSpec quadratic_driver() {
    ebsde::DriverSpec d;
    d.name = "bench_quadratic";
    d.psi = [](const ebsde::StateVector&, const Eigen::VectorXd& z, const Eigen::VectorXd&) {
        return ebsde::example2_closed_form(z[0]);
    };
    d.lip_z = 1.0;
    d.d1 = 1;
    d.d2 = 0;
    return d;
}

void BM_ForwardSimulate(benchmark::State& state) {
    ebsde::GalerkinModel model = reaction_model();
    ebsde::StateVector x0 = ebsde::StateVector::Zero(model.n_modes);
    ebsde::SimConfig cfg;
    cfg.dt = 0.01;
    cfg.horizon = 0.5;
    cfg.n_paths = static_cast<int>(state.range(0));
    cfg.seed = 99;
    cfg.exact_diag_variance = true;
    for (auto _ : state) {
        ebsde::PathBundle bundle = ebsde::simulate(model, x0, {}, cfg);
        benchmark::DoNotOptimize(bundle.states.back().sum());
    }
    state.SetItemsProcessed(state.iterations() * cfg.n_steps() * cfg.n_paths);
}
BENCHMARK(BM_ForwardSimulate)->Arg(64)->Arg(512);

void BM_FeatureRows(benchmark::State& state) {
    ebsde::RegressionBasis basis;
    basis.degree = 3;
    ebsde::FeatureMap features(basis, 5);
    std::mt19937 rng(7);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd states(static_cast<int>(state.range(0)), 5);
    for (int i = 0; i < states.rows(); ++i)
        for (int j = 0; j < states.cols(); ++j) states(i, j) = normal(rng);
    Eigen::MatrixXd phi;
    for (auto _ : state) {
        features.eval_rows(states, phi);
        benchmark::DoNotOptimize(phi.data());
    }
    state.SetItemsProcessed(state.iterations() * states.rows());
}
BENCHMARK(BM_FeatureRows)->Arg(1024)->Arg(8192);

void BM_HamiltonianGrid(benchmark::State& state) {
    ebsde::ControlStructure cs = quadratic_control();
    ebsde::StateVector x = ebsde::StateVector::Zero(1);
    Eigen::VectorXd u(0);
    for (auto _ : state) {
        double acc = 0.0;
        for (int i = 0; i < 128; ++i) {
            Eigen::VectorXd z = Eigen::VectorXd::Constant(1, -3.0 + 6.0 * i / 127.0);
            acc += ebsde::hamiltonian_from_control(cs, x, z, u);
        }
        benchmark::DoNotOptimize(acc);
    }
    state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_HamiltonianGrid);

void BM_ConjugateSlice(benchmark::State& state) {
    ebsde::DriverSpec d = quadratic_driver();
    ebsde::StateVector x = ebsde::StateVector::Zero(1);
    Eigen::VectorXd q(0);
    int i = 0;
    for (auto _ : state) {
        Eigen::VectorXd p = Eigen::VectorXd::Constant(1, -0.9 + 1.8 * (i++ % 64) / 63.0);
        ebsde::ConjugateValue cv = ebsde::conjugate(d, x, p, q);
        benchmark::DoNotOptimize(cv.value);
    }
}
BENCHMARK(BM_ConjugateSlice);

}  // namespace

BENCHMARK_MAIN();
