#include "ebsde/control.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "ebsde/rng.hpp"

namespace ebsde {

Policy Policy::constant_policy(double gamma, const std::string& id) {
    Policy p;
    p.kind = Kind::constant;
    if (id.empty()) {
        std::ostringstream oss;
        oss << "const(" << gamma << ")";
        p.id = oss.str();
    } else {
        p.id = id;
    }
    p.gamma_of = [gamma](double, const StateVector&) { return gamma; };
    return p;
}

namespace {

double clamp_to_hull(const ControlStructure& cs, double gamma) {
    return std::clamp(gamma, cs.gamma_grid.minCoeff(), cs.gamma_grid.maxCoeff());
}

// p pairs with W1 inside Q G(x)(dW1 + p dt), so p = G^{-1}(x) R1(gamma)
// reproduces the Q R1(gamma) dt + D R2(gamma) dt drift of the weak formulation.
struct AugmentedRun {
    const GalerkinModel& model;
    const ControlStructure& cs;
    double current_gamma = 0.0;
    DriftAugmentation aug;

    AugmentedRun(const GalerkinModel& m, const ControlStructure& c) : model(m), cs(c) {
        aug.enabled = true;
        aug.p_process = [this](double, const StateVector& x) {
            return Eigen::VectorXd(model.g_inverse(x) * cs.r1(current_gamma));
        };
        aug.q_process = [this](double, const StateVector&) { return cs.r2(current_gamma); };
    }
};

}  // namespace

CostEstimate ergodic_cost(const GalerkinModel& model, const ControlStructure& cs,
                          const StateVector& x0, const Policy& policy, const CostConfig& cfg) {
    if (!policy.gamma_of) throw std::invalid_argument("ergodic_cost: policy has no gamma_of");
    if (x0.size() != model.n_modes)
        throw std::invalid_argument("ergodic_cost: x0 dimension mismatch");
    SimConfig sim = cfg.sim;
    Stepper st(model, sim);
    const int m = sim.n_steps();
    const double dt = st.dt();
    double burn = cfg.burn_in > 0.0 ? cfg.burn_in : 5.0 / std::max(cfg.mu_hint, 1e-6);
    burn = std::min(burn, 0.5 * sim.horizon);
    const int j0 = std::min(static_cast<int>(std::ceil(burn / dt)), m - 1);
    const int j_half = j0 + (m - j0) / 2;

    AugmentedRun run(model, cs);
    Eigen::VectorXd z(st.normals_per_step());
    double sum = 0.0, sumsq = 0.0, hsum = 0.0, hsumsq = 0.0;
    for (int p = 0; p < sim.n_paths; ++p) {
        PathNormals rng(sim.seed, static_cast<uint64_t>(p), st.normals_per_step());
        StateVector x = x0;
        double acc = 0.0, acc_half = 0.0;
        for (int j = 0; j < m; ++j) {
            run.current_gamma = clamp_to_hull(cs, policy.gamma_of(j * dt, x));
            if (j >= j0) {
                double c = dt * cs.running_cost(x, run.current_gamma);
                acc += c;
                if (j < j_half) acc_half += c;
            }
            rng.fill_step(j, z.data());
            st.advance(j * dt, x, z.data(), run.aug);
            if (!x.allFinite()) throw BlowUpError(j + 1);
        }
        double avg = acc / ((m - j0) * dt);
        double avg_half = j_half > j0 ? acc_half / ((j_half - j0) * dt) : avg;
        sum += avg;
        sumsq += avg * avg;
        hsum += avg_half;
        hsumsq += avg_half * avg_half;
    }
    const int np = sim.n_paths;
    CostEstimate out;
    out.n_paths = np;
    out.horizon_T = m * dt;
    out.burn_in = j0 * dt;
    out.j_hat = sum / np;
    out.half_window_j = hsum / np;
    double var = std::max(sumsq / np - out.j_hat * out.j_hat, 0.0);
    double hvar = std::max(hsumsq / np - out.half_window_j * out.half_window_j, 0.0);
    out.std_error = std::sqrt(var / np);
    double half_se = std::sqrt(hvar / np);
    double comb = std::sqrt(out.std_error * out.std_error + half_se * half_se);
    out.doubling_ok = std::abs(out.j_hat - out.half_window_j) <= 3.0 * comb + 1e-12;
    return out;
}

Policy synthesize_feedback(const ErgodicSolution& ergodic, const ControlStructure& cs,
                           const GalerkinModel& model) {
    Policy p;
    p.kind = Policy::Kind::state_feedback;
    p.id = "feedback";
    auto g_inverse = model.g_inverse;
    // fallback state: if the zeta evaluation degenerates at some x, reuse the
    // selection from the nearest previously visited state (warn once)
    struct Fallback {
        double last_gamma;
        int warnings = 0;
    };
    auto fb = std::make_shared<Fallback>();
    fb->last_gamma = clamp_to_hull(cs, 0.0);
    p.gamma_of = [ergodic, cs, g_inverse, fb](double, const StateVector& x) {
        Eigen::VectorXd zeff = g_inverse(x).transpose() * ergodic.zeta1_at(x);
        Eigen::VectorXd zu = ergodic.zeta2_at(x);
        if (!zeff.allFinite() || !zu.allFinite()) {
            if (++fb->warnings == 1)
                std::cerr << "feedback: zeta evaluation failed, reusing previous control\n";
            return fb->last_gamma;
        }
        fb->last_gamma = epsilon_argmin_selection(cs, x, zeff, zu);
        return fb->last_gamma;
    };
    return p;
}

GapReport verify_bound_and_gap(const GalerkinModel& model, const ControlStructure& cs,
                               const ErgodicSolution& ergodic, const StateVector& x0,
                               const std::vector<Policy>& policy_list, const CostConfig& cfg,
                               double allowance) {
    GapReport rep;
    rep.allowance = allowance;
    rep.all_pass = true;
    for (const auto& policy : policy_list) {
        CostEstimate ce = ergodic_cost(model, cs, x0, policy, cfg);
        GapRow row;
        row.policy_id = policy.id;
        row.is_feedback = policy.kind == Policy::Kind::state_feedback;
        row.j_hat = ce.j_hat;
        row.std_error = ce.std_error;
        row.horizon_T = ce.horizon_T;
        row.burn_in = ce.burn_in;
        row.gap = ce.j_hat - ergodic.lambda_hat;
        row.combined_stderr = std::sqrt(ce.std_error * ce.std_error +
                                        ergodic.lambda_stderr * ergodic.lambda_stderr);
        row.lower_bound_ok = row.gap >= -3.0 * row.combined_stderr - allowance;
        if (row.is_feedback)
            row.gap_ok = std::abs(row.gap) <= 3.0 * row.combined_stderr + allowance;
        rep.all_pass = rep.all_pass && row.lower_bound_ok && row.gap_ok;
        rep.rows.push_back(row);
    }
    return rep;
}

GirsanovReport girsanov_consistency_check(const GalerkinModel& model, const ControlStructure& cs,
                                          const StateVector& x0, const Policy& policy,
                                          double T_short, const GirsanovConfig& cfg) {
    if (!(T_short > 0.0)) throw std::invalid_argument("girsanov_consistency_check: T_short > 0");
    SimConfig sim = cfg.sim;
    sim.horizon = T_short;
    Stepper st(model, sim);
    const int m = sim.n_steps();
    const double dt = st.dt();
    const int np = sim.n_paths;
    Eigen::VectorXd z(st.normals_per_step()), b1(model.d1), b2(model.d2);

    GirsanovReport rep;
    {
        AugmentedRun run(model, cs);
        double sum = 0.0, sumsq = 0.0;
        for (int p = 0; p < np; ++p) {
            PathNormals rng(sim.seed, static_cast<uint64_t>(p), st.normals_per_step());
            StateVector x = x0;
            double acc = 0.0;
            for (int j = 0; j < m; ++j) {
                run.current_gamma = clamp_to_hull(cs, policy.gamma_of(j * dt, x));
                acc += dt * cs.running_cost(x, run.current_gamma);
                rng.fill_step(j, z.data());
                st.advance(j * dt, x, z.data(), run.aug);
                if (!x.allFinite()) throw BlowUpError(j + 1);
            }
            sum += acc;
            sumsq += acc * acc;
        }
        rep.direct_mean = sum / np;
        double var = std::max(sumsq / np - rep.direct_mean * rep.direct_mean, 0.0);
        rep.direct_stderr = std::sqrt(var / np);
    }
    {
        // same seed as the direct block: common random numbers, and for
        // gamma == 0 the two estimators coincide pathwise (density == 1)
        DriftAugmentation no_aug;
        Eigen::VectorXd rho(np), val(np);
        for (int p = 0; p < np; ++p) {
            PathNormals rng(sim.seed, static_cast<uint64_t>(p), st.normals_per_step());
            StateVector x = x0;
            double acc = 0.0, log_rho = 0.0;
            for (int j = 0; j < m; ++j) {
                double gamma = clamp_to_hull(cs, policy.gamma_of(j * dt, x));
                acc += dt * cs.running_cost(x, gamma);
                Eigen::VectorXd pv = model.g_inverse(x) * cs.r1(gamma);
                Eigen::VectorXd qv = cs.r2(gamma);
                rng.fill_step(j, z.data());
                st.advance(j * dt, x, z.data(), no_aug, b1.data(), b2.data());
                if (!x.allFinite()) throw BlowUpError(j + 1);
                log_rho += pv.dot(b1) + qv.dot(b2) -
                           0.5 * dt * (pv.squaredNorm() + qv.squaredNorm());
            }
            rho[p] = std::exp(log_rho);
            val[p] = acc;
        }
        double rho_sum = rho.sum();
        double rho_mean = rho_sum / np;
        double rho_var = std::max((rho.array() - rho_mean).square().sum() / np, 0.0);
        rep.density_cov = rho_mean > 0.0 ? std::sqrt(rho_var) / rho_mean : 0.0;
        double rho_sq = rho.squaredNorm();
        double ess = rho_sq > 0.0 ? rho_sum * rho_sum / rho_sq : 0.0;
        rep.ess_fraction = ess / np;
        rep.weighted_mean = rho.dot(val) / rho_sum;
        double acc2 = 0.0;
        for (int p = 0; p < np; ++p) {
            double d = val[p] - rep.weighted_mean;
            acc2 += rho[p] * rho[p] * d * d;
        }
        rep.weighted_stderr = std::sqrt(acc2) / rho_sum;
    }
    rep.inconclusive = rep.ess_fraction < 0.10 || rep.density_cov > cfg.max_cov;
    double comb = std::sqrt(rep.direct_stderr * rep.direct_stderr +
                            rep.weighted_stderr * rep.weighted_stderr);
    rep.agree_3sigma = std::abs(rep.direct_mean - rep.weighted_mean) <= 3.0 * comb + 1e-12;
    return rep;
}

}  // namespace ebsde
