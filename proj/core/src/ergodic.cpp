#include "ebsde/ergodic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ebsde/rng.hpp"

namespace ebsde {

double ErgodicSolution::vbar_at(const StateVector& x) const {
    return vbar_coeffs.dot(features.eval(x) - features.eval(x_ref));
}

Eigen::VectorXd ErgodicSolution::zeta1_at(const StateVector& x) const {
    return zeta1_coeffs.transpose() * features.eval(x);
}

Eigen::VectorXd ErgodicSolution::zeta2_at(const StateVector& x) const {
    return zeta2_coeffs.transpose() * features.eval(x);
}

LambdaFit lambda_fit(const std::vector<AlphaRecord>& records, int eval_index) {
    if (records.empty()) throw std::invalid_argument("lambda_fit: no records");
    std::vector<double> a, y, se;
    for (const auto& r : records) {
        double v, s;
        if (eval_index < 0) {
            v = r.v_ref;
            s = r.v_ref_stderr;
        } else {
            if (eval_index >= static_cast<int>(r.evals.size()))
                throw std::invalid_argument("lambda_fit: eval_index out of range");
            v = r.evals[eval_index].value;
            s = r.evals[eval_index].std_error;
        }
        a.push_back(r.alpha);
        y.push_back(r.alpha * v);
        se.push_back(r.alpha * s);
    }
    LambdaFit fit;
    if (a.size() == 1) {
        fit.lambda_hat = y[0];
        fit.std_error = se[0];
        return fit;
    }
    double S = 0, Sx = 0, Sxx = 0, Sy = 0, Sxy = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        double w = 1.0 / std::max(se[i] * se[i], 1e-20);
        S += w;
        Sx += w * a[i];
        Sxx += w * a[i] * a[i];
        Sy += w * y[i];
        Sxy += w * a[i] * y[i];
    }
    double det = S * Sxx - Sx * Sx;
    if (std::abs(det) < 1e-300) throw std::runtime_error("lambda_fit: degenerate alpha design");
    fit.lambda_hat = (Sxx * Sy - Sx * Sxy) / det;
    fit.slope = (S * Sxy - Sx * Sy) / det;
    fit.std_error = std::sqrt(Sxx / det);
    return fit;
}

ErgodicSolution vanishing_discount(const GalerkinModel& model, const DriverSpec& driver,
                                   const std::vector<double>& alpha_schedule,
                                   const StateVector& x_ref,
                                   const std::vector<StateVector>& eval_points,
                                   const VanishingDiscountConfig& cfg) {
    if (alpha_schedule.empty())
        throw std::invalid_argument("vanishing_discount: empty alpha schedule");
    for (double a : alpha_schedule)
        if (!(a > 0.0)) throw std::invalid_argument("vanishing_discount: alphas must be positive");
    if (x_ref.size() != model.n_modes)
        throw std::invalid_argument("vanishing_discount: x_ref dimension mismatch");

    std::vector<double> schedule = alpha_schedule;
    std::sort(schedule.begin(), schedule.end(), std::greater<double>());
    schedule.erase(std::unique(schedule.begin(), schedule.end()), schedule.end());

    // reference point first; exact duplicates of it collapse onto group 0
    std::vector<StateVector> starts{x_ref};
    std::vector<int> eval_group(eval_points.size());
    for (size_t i = 0; i < eval_points.size(); ++i) {
        if (eval_points[i].size() != model.n_modes)
            throw std::invalid_argument("vanishing_discount: eval point dimension mismatch");
        if ((eval_points[i].array() == x_ref.array()).all()) {
            eval_group[i] = 0;
        } else {
            starts.push_back(eval_points[i]);
            eval_group[i] = static_cast<int>(starts.size()) - 1;
        }
    }

    ErgodicSolution out;
    out.x_ref = x_ref;
    DiscountedValue last;
    for (double alpha : schedule) {
        DiscountedValue dv = solve_discounted(model, driver, alpha, starts, cfg.basis,
                                              cfg.discounted);
        AlphaRecord rec;
        rec.alpha = alpha;
        rec.v_ref = dv.values[0].value;
        rec.v_ref_stderr = dv.values[0].std_error;
        rec.alpha_v = alpha * rec.v_ref;
        rec.alpha_v_stderr = alpha * rec.v_ref_stderr;
        rec.truncation_T = dv.truncation_T;
        rec.tail_bound = dv.tail_bound;
        for (size_t i = 0; i < eval_points.size(); ++i) {
            EvalValue ev;
            ev.x = eval_points[i];
            ev.value = dv.values[eval_group[i]].value;
            ev.std_error = dv.values[eval_group[i]].std_error;
            rec.evals.push_back(ev);
        }
        if (dv.tail_bound > cfg.discounted.tail_tolerance * 1.0001)
            out.warnings.push_back("truncation horizon capped before reaching tail tolerance");
        if (dv.max_condition > 1e10)
            out.warnings.push_back("regression condition number above 1e10");
        out.alpha_records.push_back(rec);
        last = std::move(dv);
    }

    LambdaFit fit = lambda_fit(out.alpha_records, -1);
    out.lambda_hat = fit.lambda_hat;
    out.lambda_stderr = fit.std_error;
    if (schedule.size() < 2)
        out.warnings.push_back("single alpha: no extrapolation, lambda keeps its O(alpha) bias");

    const AlphaRecord& small = out.alpha_records.back();
    for (size_t i = 0; i < eval_points.size(); ++i) {
        EvalValue ev;
        ev.x = eval_points[i];
        if (eval_group[i] == 0) {
            ev.value = 0.0;
            ev.std_error = 0.0;
        } else {
            ev.value = small.evals[i].value - small.v_ref;
            ev.std_error = std::sqrt(small.evals[i].std_error * small.evals[i].std_error +
                                     small.v_ref_stderr * small.v_ref_stderr);
        }
        out.vbar.push_back(ev);
    }
    out.features = last.features;
    out.vbar_coeffs = last.y_rep;
    out.zeta1_coeffs = last.z_rep;
    out.zeta2_coeffs = last.u_rep;
    return out;
}

LipschitzReport lipschitz_uniformity_diag(const std::vector<AlphaRecord>& records,
                                          const std::vector<std::pair<int, int>>& pair_list) {
    LipschitzReport rep;
    if (records.empty() || pair_list.empty()) return rep;
    std::vector<AlphaRecord> recs = records;
    std::sort(recs.begin(), recs.end(),
              [](const AlphaRecord& a, const AlphaRecord& b) { return a.alpha > b.alpha; });

    for (size_t pi = 0; pi < pair_list.size(); ++pi) {
        auto [i, j] = pair_list[pi];
        double qmax = 0.0, qmin = std::numeric_limits<double>::infinity();
        double q_large_alpha = 0.0, q_small_alpha = 0.0, se_large = 0.0, se_small = 0.0;
        for (size_t r = 0; r < recs.size(); ++r) {
            const auto& rec = recs[r];
            if (i < 0 || j < 0 || i >= static_cast<int>(rec.evals.size()) ||
                j >= static_cast<int>(rec.evals.size()))
                throw std::invalid_argument("lipschitz_uniformity_diag: pair index out of range");
            double dist = (rec.evals[i].x - rec.evals[j].x).norm();
            if (dist < 1e-12)
                throw std::invalid_argument("lipschitz_uniformity_diag: coincident pair");
            double q = std::abs(rec.evals[i].value - rec.evals[j].value) / dist;
            double se = std::sqrt(rec.evals[i].std_error * rec.evals[i].std_error +
                                  rec.evals[j].std_error * rec.evals[j].std_error) /
                        dist;
            LipschitzRow row;
            row.alpha = rec.alpha;
            row.pair_i = i;
            row.pair_j = j;
            row.quotient = q;
            row.quotient_stderr = se;
            rep.rows.push_back(row);
            qmax = std::max(qmax, q);
            qmin = std::min(qmin, q);
            if (r == 0) {
                q_large_alpha = q;
                se_large = se;
            }
            if (r + 1 == recs.size()) {
                q_small_alpha = q;
                se_small = se;
            }
        }
        if (qmax > 0.0)
            rep.max_relative_spread = std::max(rep.max_relative_spread, (qmax - qmin) / qmax);
        double noise = 3.0 * std::sqrt(se_large * se_large + se_small * se_small);
        if (q_small_alpha > 1.3 * q_large_alpha + noise) rep.growth_flag = true;
    }
    return rep;
}

ErgodicResidualStats verify_ergodic_bsde_residual(const GalerkinModel& model,
                                                  const DriverSpec& driver,
                                                  const ErgodicSolution& ergodic, double T,
                                                  const SimConfig& cfg, double lambda_shift) {
    if (!(T > 0.0)) throw std::invalid_argument("verify_ergodic_bsde_residual: T > 0");
    SimConfig sim = cfg;
    sim.horizon = T;
    Stepper st(model, sim);
    const int m = sim.n_steps(), d1 = model.d1, d2 = model.d2;
    const double dt = st.dt();
    const double lambda = ergodic.lambda_hat + lambda_shift;

    DriftAugmentation no_aug;
    Eigen::VectorXd z(st.normals_per_step()), b1(d1), b2(d2), zeta1(d1), zeta2(d2), zeff(d1);
    double sum = 0.0, sum2 = 0.0, sumsq = 0.0;
    for (int p = 0; p < sim.n_paths; ++p) {
        PathNormals rng(sim.seed, static_cast<uint64_t>(p), st.normals_per_step());
        StateVector x = ergodic.x_ref;
        double r = ergodic.vbar_at(x);
        for (int j = 0; j < m; ++j) {
            zeta1 = ergodic.zeta1_at(x);
            zeta2 = ergodic.zeta2_at(x);
            zeff.noalias() = model.g_inverse(x).transpose() * zeta1;
            double psi = driver.psi(x, zeff, zeta2);
            rng.fill_step(j, z.data());
            st.advance(j * dt, x, z.data(), no_aug, b1.data(), b2.data());
            if (!x.allFinite()) throw BlowUpError(j + 1);
            r += -dt * (psi - lambda) + zeta1.dot(b1) + zeta2.dot(b2);
        }
        r -= ergodic.vbar_at(x);
        sum += r;
        sumsq += r * r;
        sum2 += r * r;
    }
    const int np = sim.n_paths;
    ErgodicResidualStats out;
    out.horizon = m * dt;
    out.mean_square = sumsq / np;
    out.integrated_mean = sum / np;
    double var = std::max(sum2 / np - out.integrated_mean * out.integrated_mean, 0.0);
    out.integrated_stderr = std::sqrt(var / np);
    out.detection_zscore =
        out.integrated_stderr > 0.0 ? std::abs(out.integrated_mean) / out.integrated_stderr : 0.0;
    return out;
}

HjbVerificationReport verify_mild_hjb(const GalerkinModel& model, const DriverSpec& driver,
                                      const ErgodicSolution& ergodic,
                                      const std::vector<std::pair<double, double>>& t_T_pairs,
                                      const std::vector<StateVector>& eval_points,
                                      const HjbConfig& cfg) {
    HjbVerificationReport rep;
    rep.bias_allowance = cfg.bias_allowance;
    rep.all_pass = true;
    const double lambda = ergodic.lambda_hat + cfg.lambda_shift;
    const int d1 = model.d1, d2 = model.d2;

    auto vbar = [&](const StateVector& x) {
        double v = ergodic.vbar_at(x);
        if (cfg.vbar_perturbation) v += cfg.vbar_perturbation(x);
        return v;
    };

    int cell = 0;
    for (const auto& [t, T] : t_T_pairs) {
        if (T < t) throw std::invalid_argument("verify_mild_hjb: needs T >= t");
        const double tau = T - t;
        for (size_t i = 0; i < eval_points.size(); ++i, ++cell) {
            SimConfig sim = cfg.sim;
            sim.horizon = std::max(tau, sim.dt);
            sim.n_paths = cfg.inner_paths;
            sim.seed = cfg.sim.seed + 7919ull * static_cast<uint64_t>(cell);
            Stepper st(model, sim);
            const int m = tau > 0.0 ? sim.n_steps() : 0;
            const double dt = st.dt();

            DriftAugmentation no_aug;
            Eigen::VectorXd z(st.normals_per_step()), zeta1(d1), zeta2(d2), zeff(d1);
            double sum = 0.0, sumsq = 0.0;
            for (int p = 0; p < sim.n_paths; ++p) {
                PathNormals rng(sim.seed, static_cast<uint64_t>(p), st.normals_per_step());
                StateVector x = eval_points[i];
                double acc = 0.0;
                for (int j = 0; j < m; ++j) {
                    zeta1 = ergodic.zeta1_at(x);
                    zeta2 = ergodic.zeta2_at(x);
                    zeff.noalias() = model.g_inverse(x).transpose() * zeta1;
                    acc += dt * (driver.psi(x, zeff, zeta2) - lambda);
                    rng.fill_step(j, z.data());
                    st.advance(j * dt, x, z.data(), no_aug);
                    if (!x.allFinite()) throw BlowUpError(j + 1);
                }
                double rhs = vbar(x) + acc;
                sum += rhs;
                sumsq += rhs * rhs;
            }
            double mean = sum / sim.n_paths;
            double var = std::max(sumsq / sim.n_paths - mean * mean, 0.0);
            double se = std::sqrt(var / sim.n_paths);

            HjbRow row;
            row.t = t;
            row.T = T;
            row.point_index = static_cast<int>(i);
            row.residual = vbar(eval_points[i]) - mean;
            row.std_error = se;
            row.pass = std::abs(row.residual) <= 3.0 * se + cfg.bias_allowance;
            rep.all_pass = rep.all_pass && row.pass;
            rep.rows.push_back(row);
        }
    }
    return rep;
}

std::vector<ParabolicRow> parabolic_long_time_ratio(const GalerkinModel& model,
                                                    const DriverSpec& driver,
                                                    const std::vector<double>& T_list,
                                                    const StateVector& x,
                                                    const RegressionBasis& basis,
                                                    const BsdeConfig& cfg) {
    std::vector<ParabolicRow> rows;
    for (double T : T_list) {
        BsdeConfig bcfg = cfg;
        bcfg.start_points = {x};
        BsdeSolution sol = solve_finite_horizon(model, driver, nullptr, T, 0.0, basis, bcfg);
        ParabolicRow row;
        row.T = T;
        row.value = sol.initial_values[0].value;
        row.std_error = sol.initial_values[0].std_error;
        row.ratio = row.value / T;
        rows.push_back(row);
    }
    return rows;
}

GradientReport gradient_consistency(const GalerkinModel& model, const DriverSpec& driver,
                                    const ErgodicSolution& ergodic,
                                    const std::vector<StateVector>& eval_points,
                                    const std::vector<double>& h_list, double mu_hat) {
    if (h_list.empty()) throw std::invalid_argument("gradient_consistency: empty h_list");
    GradientReport rep;
    rep.predicate_lhs = mu_hat;
    rep.predicate_rhs = 2.0 * (driver.lip_z * driver.lip_z * model.constants.bound_g_inverse *
                                   model.constants.bound_g_inverse +
                               driver.lip_u * driver.lip_u);
    rep.predicate_holds = rep.predicate_lhs > rep.predicate_rhs;

    const double h = *std::min_element(h_list.begin(), h_list.end());
    const int n = model.n_modes;
    for (size_t i = 0; i < eval_points.size(); ++i) {
        const StateVector& x = eval_points[i];
        Eigen::VectorXd grad(n);
        StateVector xp = x, xm = x;
        for (int k = 0; k < n; ++k) {
            xp[k] = x[k] + h;
            xm[k] = x[k] - h;
            grad[k] = (ergodic.vbar_at(xp) - ergodic.vbar_at(xm)) / (2.0 * h);
            xp[k] = x[k];
            xm[k] = x[k];
        }
        GradientRow row;
        row.point_index = static_cast<int>(i);
        row.fd_zeta1 = (model.q * model.g(x)).transpose() * grad;
        row.fd_zeta2 = model.d.transpose() * grad;
        row.rep_zeta1 = ergodic.zeta1_at(x);
        row.rep_zeta2 = ergodic.zeta2_at(x);
        double d = 0.0;
        if (row.fd_zeta1.size() > 0)
            d = std::max(d, (row.fd_zeta1 - row.rep_zeta1).cwiseAbs().maxCoeff());
        if (row.fd_zeta2.size() > 0)
            d = std::max(d, (row.fd_zeta2 - row.rep_zeta2).cwiseAbs().maxCoeff());
        row.max_abs_diff = d;
        rep.rows.push_back(row);
    }
    return rep;
}

}  // namespace ebsde
