#include "ebsde/forward.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "ebsde/rng.hpp"

namespace ebsde {

namespace {

constexpr char kBundleMagic[8] = {'E', 'B', 'P', 'B', '0', '0', '0', '1'};

void check_sim_config(const GalerkinModel& model, const StateVector& x0, const SimConfig& cfg) {
    if (x0.size() != model.n_modes)
        throw std::invalid_argument("simulate: x0 dimension mismatch");
    if (!(cfg.dt > 0.0) || !(cfg.horizon > 0.0))
        throw std::invalid_argument("simulate: dt and horizon must be positive");
    if (cfg.n_paths < 1) throw std::invalid_argument("simulate: n_paths >= 1");
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
    double r_squared = 1.0;
};

LineFit fit_line(const Eigen::VectorXd& t, const Eigen::VectorXd& y) {
    LineFit f;
    const int n = static_cast<int>(t.size());
    if (n < 2) {
        f.intercept = n == 1 ? y[0] : 0.0;
        return f;
    }
    double tm = t.mean(), ym = y.mean();
    double stt = (t.array() - tm).square().sum();
    double sty = ((t.array() - tm) * (y.array() - ym)).sum();
    f.slope = sty / stt;
    f.intercept = ym - f.slope * tm;
    double ss_res = (y.array() - f.intercept - f.slope * t.array()).square().sum();
    double ss_tot = (y.array() - ym).square().sum();
    f.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    if (n > 2) f.slope_stderr = std::sqrt(ss_res / (n - 2) / stt);
    return f;
}

}  // namespace

Stepper::Stepper(const GalerkinModel& model, const SimConfig& cfg)
    : model_(model),
      dt_(cfg.step()),
      sqrt_dt_(std::sqrt(cfg.step())),
      diagonal_(model.a_op.kind == LinearOperator::Kind::diagonal),
      identity_scheme_(cfg.scheme == Scheme::euler_maruyama) {
    if (diagonal_) {
        const Eigen::ArrayXd eigs = model.a_op.eigenvalues.array();
        if (identity_scheme_)
            exp_diag_ = 1.0 + dt_ * eigs;
        else
            exp_diag_ = (dt_ * eigs).exp();
        variance_fix_ = Eigen::ArrayXd::Ones(eigs.size());
        if (cfg.exact_diag_variance && !identity_scheme_) {
            for (Eigen::Index k = 0; k < eigs.size(); ++k) {
                double a2 = 2.0 * eigs[k];
                double exact = std::abs(a2) < 1e-12 ? dt_ : std::expm1(a2 * dt_) / a2;
                double left = std::exp(a2 * dt_) * dt_;
                variance_fix_[k] = std::sqrt(exact / left);
            }
        }
    } else if (!identity_scheme_) {
        exp_dt_ = model.a_op.exponential(dt_);
    }
}

void Stepper::advance(double t, StateVector& x, const double* z, const DriftAugmentation& aug,
                      double* dw1_out, double* dw2_out) const {
    const int d1 = model_.d1, d2 = model_.d2;
    Eigen::VectorXd dw1(d1), dw2(d2);
    for (int i = 0; i < d1; ++i) dw1[i] = sqrt_dt_ * z[i];
    for (int j = 0; j < d2; ++j) dw2[j] = sqrt_dt_ * z[d1 + j];
    if (dw1_out) std::memcpy(dw1_out, dw1.data(), sizeof(double) * d1);
    if (dw2_out) std::memcpy(dw2_out, dw2.data(), sizeof(double) * d2);

    Eigen::MatrixXd qg = model_.q * model_.g(x);
    StateVector noise = qg * dw1;
    if (d2 > 0) noise += model_.d * dw2;

    StateVector drift = model_.drift ? model_.drift(x) : StateVector::Zero(x.size());
    if (aug.enabled) {
        if (aug.p_process) drift += qg * aug.p_process(t, x);
        if (aug.q_process && d2 > 0) drift += model_.d * aug.q_process(t, x);
    }

    if (identity_scheme_) {
        if (diagonal_)
            x = (exp_diag_ * x.array()).matrix() + dt_ * drift + noise;
        else
            x += dt_ * (model_.a_op.matrix * x + drift) + noise;
        return;
    }
    if (diagonal_) {
        x = (exp_diag_ * (x + dt_ * drift).array() + exp_diag_ * variance_fix_ * noise.array())
                .matrix();
    } else {
        x = exp_dt_ * (x + dt_ * drift + noise);
    }
}

PathBundle simulate(const GalerkinModel& model, const StateVector& x0,
                    const DriftAugmentation& aug, const SimConfig& cfg) {
    check_sim_config(model, x0, cfg);
    const int m = cfg.n_steps(), np = cfg.n_paths, n = model.n_modes;
    Stepper st(model, cfg);

    PathBundle out;
    out.seed = cfg.seed;
    out.dt = st.dt();
    out.times = Eigen::VectorXd::LinSpaced(m + 1, 0.0, m * st.dt());
    out.states.assign(m + 1, Eigen::MatrixXd(np, n));
    out.dw1.assign(m, Eigen::MatrixXd(np, model.d1));
    out.dw2.assign(m, Eigen::MatrixXd(np, model.d2));

    Eigen::VectorXd z(st.normals_per_step()), b1(model.d1), b2(model.d2);
    for (int p = 0; p < np; ++p) {
        PathNormals rng(cfg.seed, static_cast<uint64_t>(p), st.normals_per_step());
        StateVector x = x0;
        out.states[0].row(p) = x0.transpose();
        for (int j = 0; j < m; ++j) {
            rng.fill_step(j, z.data());
            st.advance(j * st.dt(), x, z.data(), aug, b1.data(), b2.data());
            if (!x.allFinite()) throw BlowUpError(j + 1);
            out.states[j + 1].row(p) = x.transpose();
            out.dw1[j].row(p) = b1.transpose();
            out.dw2[j].row(p) = b2.transpose();
        }
    }
    return out;
}

DecayFit estimate_contraction(const GalerkinModel& model, const StateVector& x0,
                              const StateVector& x0p, const SimConfig& cfg,
                              const ContractionOptions& options) {
    check_sim_config(model, x0, cfg);
    if (x0p.size() != x0.size())
        throw std::invalid_argument("estimate_contraction: initial points must match in size");
    const int m = cfg.n_steps(), np = cfg.n_paths;
    Stepper st(model, cfg);
    DriftAugmentation no_aug;

    DecayFit fit;
    fit.times = Eigen::VectorXd::LinSpaced(m + 1, 0.0, m * st.dt());
    fit.mean_abs_diff = Eigen::VectorXd::Zero(m + 1);
    fit.mean_sq_diff = Eigen::VectorXd::Zero(m + 1);
    fit.degenerate = (x0 - x0p).norm() == 0.0;

    Eigen::VectorXd z(st.normals_per_step());
    for (int p = 0; p < np; ++p) {
        PathNormals rng(cfg.seed, static_cast<uint64_t>(p), st.normals_per_step());
        StateVector x = x0, xp = x0p;
        double d0 = (x - xp).norm();
        fit.mean_abs_diff[0] += d0;
        fit.mean_sq_diff[0] += d0 * d0;
        for (int j = 0; j < m; ++j) {
            rng.fill_step(j, z.data());
            st.advance(j * st.dt(), x, z.data(), no_aug);
            rng.fill_step(j, z.data());
            st.advance(j * st.dt(), xp, z.data(), no_aug);
            if (!x.allFinite() || !xp.allFinite()) throw BlowUpError(j + 1);
            double d = (x - xp).norm();
            fit.mean_abs_diff[j + 1] += d;
            fit.mean_sq_diff[j + 1] += d * d;
        }
    }
    fit.mean_abs_diff /= np;
    fit.mean_sq_diff /= np;
    if (fit.degenerate) return fit;

    fit.fit_window_start = std::min(1.0 / options.mu_guess, 0.5 * m * st.dt());
    std::vector<double> ts, ys;
    double floor = 1e-13 * std::max(fit.mean_abs_diff[0], 1.0);
    for (int j = 0; j <= m; ++j) {
        if (fit.times[j] < fit.fit_window_start) continue;
        if (fit.mean_abs_diff[j] <= floor) break;
        ts.push_back(fit.times[j]);
        ys.push_back(std::log(fit.mean_abs_diff[j]));
    }
    if (ts.size() < 2) {
        fit.degenerate = true;
        return fit;
    }
    LineFit lf = fit_line(Eigen::Map<Eigen::VectorXd>(ts.data(), ts.size()),
                          Eigen::Map<Eigen::VectorXd>(ys.data(), ys.size()));
    fit.mu_hat = -lf.slope;
    fit.intercept = lf.intercept;
    fit.r_squared = lf.r_squared;
    return fit;
}

MomentReport estimate_moment_bound(const GalerkinModel& model, const StateVector& x0,
                                   const SimConfig& cfg) {
    check_sim_config(model, x0, cfg);
    const int m = cfg.n_steps(), np = cfg.n_paths;
    Stepper st(model, cfg);
    DriftAugmentation no_aug;

    MomentReport rep;
    rep.times = Eigen::VectorXd::LinSpaced(m + 1, 0.0, m * st.dt());
    rep.mean_abs = Eigen::VectorXd::Zero(m + 1);

    Eigen::VectorXd z(st.normals_per_step());
    for (int p = 0; p < np; ++p) {
        PathNormals rng(cfg.seed, static_cast<uint64_t>(p), st.normals_per_step());
        StateVector x = x0;
        rep.mean_abs[0] += x.norm();
        for (int j = 0; j < m; ++j) {
            rng.fill_step(j, z.data());
            st.advance(j * st.dt(), x, z.data(), no_aug);
            if (!x.allFinite()) throw BlowUpError(j + 1);
            rep.mean_abs[j + 1] += x.norm();
        }
    }
    rep.mean_abs /= np;
    rep.running_max = rep.mean_abs.maxCoeff();

    int start = m / 2;
    LineFit lf = fit_line(rep.times.segment(start, m + 1 - start),
                          rep.mean_abs.segment(start, m + 1 - start));
    rep.tail_slope = lf.slope;
    rep.tail_slope_stderr = lf.slope_stderr;
    rep.growth_flag = lf.slope_stderr > 0.0 && lf.slope > 3.0 * lf.slope_stderr;
    return rep;
}

namespace {

template <typename T>
void put(std::ofstream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

void put_matrix(std::ofstream& os, const Eigen::MatrixXd& m) {
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(sizeof(double) * m.size()));
}

void get_matrix(std::ifstream& is, Eigen::MatrixXd& m) {
    is.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
}

}  // namespace

void dump_path_bundle(const PathBundle& bundle, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("dump_path_bundle: cannot open " + path);
    os.write(kBundleMagic, sizeof(kBundleMagic));
    const int m = bundle.n_steps(), np = bundle.n_paths();
    const int n = m >= 0 && !bundle.states.empty() ? static_cast<int>(bundle.states[0].cols()) : 0;
    const int d1 = m > 0 ? static_cast<int>(bundle.dw1[0].cols()) : 0;
    const int d2 = m > 0 ? static_cast<int>(bundle.dw2[0].cols()) : 0;
    put(os, bundle.seed);
    put(os, bundle.dt);
    put<int64_t>(os, np);
    put<int64_t>(os, n);
    put<int64_t>(os, d1);
    put<int64_t>(os, d2);
    put<int64_t>(os, m);
    os.write(reinterpret_cast<const char*>(bundle.times.data()),
             static_cast<std::streamsize>(sizeof(double) * bundle.times.size()));
    for (const auto& s : bundle.states) put_matrix(os, s);
    for (const auto& w : bundle.dw1) put_matrix(os, w);
    for (const auto& w : bundle.dw2) put_matrix(os, w);
    if (!os) throw std::runtime_error("dump_path_bundle: write failed for " + path);
}

PathBundle load_path_bundle(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_path_bundle: cannot open " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kBundleMagic, sizeof(magic)) != 0)
        throw std::runtime_error("load_path_bundle: bad magic in " + path);
    PathBundle b;
    b.seed = get<uint64_t>(is);
    b.dt = get<double>(is);
    auto np = get<int64_t>(is);
    auto n = get<int64_t>(is);
    auto d1 = get<int64_t>(is);
    auto d2 = get<int64_t>(is);
    auto m = get<int64_t>(is);
    if (!is || np < 0 || n < 0 || d1 < 0 || d2 < 0 || m < 0)
        throw std::runtime_error("load_path_bundle: corrupt header in " + path);
    b.times.resize(m + 1);
    is.read(reinterpret_cast<char*>(b.times.data()),
            static_cast<std::streamsize>(sizeof(double) * (m + 1)));
    b.states.assign(m + 1, Eigen::MatrixXd(np, n));
    b.dw1.assign(m, Eigen::MatrixXd(np, d1));
    b.dw2.assign(m, Eigen::MatrixXd(np, d2));
    for (auto& s : b.states) get_matrix(is, s);
    for (auto& w : b.dw1) get_matrix(is, w);
    for (auto& w : b.dw2) get_matrix(is, w);
    if (!is) throw std::runtime_error("load_path_bundle: truncated file " + path);
    return b;
}

}  // namespace ebsde
