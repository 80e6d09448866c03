#include "ebsde/bsde.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ebsde/rng.hpp"

namespace ebsde {

namespace {

constexpr int kMaxProjDims = 32;
constexpr int kMaxPolyDegree = 16;
constexpr uint64_t kFreshSeedOffset = 0x9E3779B97F4A7C15ull;

void enumerate_multi_indices(int dims, int total, std::vector<int>& cur,
                             std::vector<std::vector<int>>& out) {
    if (dims == 1) {
        cur.push_back(total);
        out.push_back(cur);
        cur.pop_back();
        return;
    }
    for (int e = total; e >= 0; --e) {
        cur.push_back(e);
        enumerate_multi_indices(dims - 1, total - e, cur, out);
        cur.pop_back();
    }
}

}  // namespace

FeatureMap::FeatureMap(const RegressionBasis& basis, int state_dim) : basis_(basis) {
    if (basis.projection.empty()) {
        proj_.resize(state_dim);
        std::iota(proj_.begin(), proj_.end(), 0);
    } else {
        proj_ = basis.projection;
    }
    for (int i : proj_)
        if (i < 0 || i >= state_dim)
            throw std::invalid_argument("FeatureMap: projection index out of range");
    if (static_cast<int>(proj_.size()) > kMaxProjDims)
        throw std::invalid_argument("FeatureMap: too many projected coordinates");

    if (basis.kind == RegressionBasis::Kind::polynomial) {
        if (basis.degree < 0 || basis.degree > kMaxPolyDegree)
            throw std::invalid_argument("FeatureMap: polynomial degree out of range");
        std::vector<int> cur;
        for (int g = 0; g <= basis.degree; ++g)
            enumerate_multi_indices(static_cast<int>(proj_.size()), g, cur, powers_);
        n_features_ = static_cast<int>(powers_.size());
    } else {
        if (basis.centers.cols() != static_cast<Eigen::Index>(proj_.size()))
            throw std::invalid_argument("FeatureMap: radial centers dimension mismatch");
        if (!(basis.bandwidth > 0.0))
            throw std::invalid_argument("FeatureMap: bandwidth must be positive");
        n_features_ = 1 + static_cast<int>(basis_.centers.rows());
    }
}

void FeatureMap::eval_into(const StateVector& x, double* phi) const {
    double xp[kMaxProjDims];
    const int dims = static_cast<int>(proj_.size());
    for (int i = 0; i < dims; ++i) xp[i] = x[proj_[i]];

    if (basis_.kind == RegressionBasis::Kind::polynomial) {
        double pw[kMaxProjDims][kMaxPolyDegree + 1];
        for (int i = 0; i < dims; ++i) {
            pw[i][0] = 1.0;
            for (int e = 1; e <= basis_.degree; ++e) pw[i][e] = pw[i][e - 1] * xp[i];
        }
        for (int f = 0; f < n_features_; ++f) {
            double v = 1.0;
            const std::vector<int>& mi = powers_[f];
            for (int i = 0; i < dims; ++i) v *= pw[i][mi[i]];
            phi[f] = v;
        }
    } else {
        phi[0] = 1.0;
        const double inv2b2 = 1.0 / (2.0 * basis_.bandwidth * basis_.bandwidth);
        for (Eigen::Index c = 0; c < basis_.centers.rows(); ++c) {
            double d2 = 0.0;
            for (int i = 0; i < dims; ++i) {
                double d = xp[i] - basis_.centers(c, i);
                d2 += d * d;
            }
            phi[1 + c] = std::exp(-d2 * inv2b2);
        }
    }
}

Eigen::VectorXd FeatureMap::eval(const StateVector& x) const {
    Eigen::VectorXd phi(n_features_);
    eval_into(x, phi.data());
    return phi;
}

void FeatureMap::eval_rows(const Eigen::MatrixXd& states, Eigen::MatrixXd& phi) const {
    const Eigen::Index np = states.rows();
    phi.resize(np, n_features_);
    Eigen::VectorXd buf(n_features_);
    StateVector x(states.cols());
    for (Eigen::Index p = 0; p < np; ++p) {
        x = states.row(p).transpose();
        eval_into(x, buf.data());
        phi.row(p) = buf.transpose();
    }
}

namespace {

// Per-step ridge regression on standardized features. The constant column is
// kept as-is; the rest are centered and scaled so one spectral factorization
// serves every target and coefficient averaging stays exact after mapping
// back to the raw basis.
class StepRegressor {
  public:
    void factorize(Eigen::MatrixXd& phi, double ridge) {
        const Eigen::Index n = phi.rows(), b = phi.cols();
        ridge_ = ridge;
        mu_ = Eigen::VectorXd::Zero(b);
        sd_ = Eigen::VectorXd::Ones(b);
        for (Eigen::Index k = 1; k < b; ++k) {
            mu_[k] = phi.col(k).mean();
            phi.col(k).array() -= mu_[k];
            double var = phi.col(k).squaredNorm() / n;
            sd_[k] = std::max(std::sqrt(var), 1e-12);
            phi.col(k) /= sd_[k];
        }
        gram_.noalias() = phi.transpose() * phi / static_cast<double>(n);
        eig_.compute(gram_);
        double lo = std::max(eig_.eigenvalues().minCoeff(), 0.0);
        double hi = std::max(eig_.eigenvalues().maxCoeff(), 0.0);
        condition_ = (hi + ridge_) / (lo + ridge_);
    }

    // phi must be the standardized matrix passed to factorize
    Eigen::VectorXd solve(const Eigen::MatrixXd& phi, const Eigen::VectorXd& target) const {
        Eigen::VectorXd rhs = phi.transpose() * target / static_cast<double>(phi.rows());
        Eigen::VectorXd w = eig_.eigenvectors().transpose() * rhs;
        w.array() /= eig_.eigenvalues().array().max(0.0) + ridge_;
        return eig_.eigenvectors() * w;
    }

    Eigen::VectorXd to_raw(const Eigen::VectorXd& c_std) const {
        Eigen::VectorXd raw = (c_std.array() / sd_.array()).matrix();
        raw[0] = c_std[0] - (c_std.array() * mu_.array() / sd_.array()).sum();
        return raw;
    }

    double condition() const { return condition_; }

  private:
    Eigen::VectorXd mu_, sd_;
    Eigen::MatrixXd gram_;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_;
    double ridge_ = 0.0;
    double condition_ = 1.0;
};

struct Sizing {
    int m = 0;
    double dt = 0.0;
    int groups = 0;
    long total_paths = 0;
    int stride = 0;
};

class LsmcEngine {
  public:
    LsmcEngine(const GalerkinModel& model, const DriverSpec& driver,
               const std::function<double(const StateVector&)>& terminal, double T, double alpha,
               const RegressionBasis& basis, const BsdeConfig& cfg)
        : model_(model), driver_(driver), terminal_(terminal), T_(T), alpha_(alpha), cfg_(cfg) {
        if (!driver.psi) throw std::invalid_argument("solve_finite_horizon: driver.psi not set");
        if (driver.d1 != model.d1 || driver.d2 != model.d2)
            throw std::invalid_argument("solve_finite_horizon: driver/model noise dims differ");
        if (cfg.start_points.empty())
            throw std::invalid_argument("solve_finite_horizon: start_points required");
        for (const auto& sp : cfg.start_points)
            if (sp.size() != model.n_modes)
                throw std::invalid_argument("solve_finite_horizon: start point dimension");
        if (!(T > 0.0) || !(cfg.dt > 0.0))
            throw std::invalid_argument("solve_finite_horizon: T and dt must be positive");
        if (cfg.n_paths < 2)
            throw std::invalid_argument("solve_finite_horizon: n_paths >= 2 per group");

        sz_.m = std::max<int>(1, static_cast<int>(std::lround(T / cfg.dt)));
        sz_.dt = T / sz_.m;
        sz_.groups = static_cast<int>(cfg.start_points.size());
        sz_.total_paths = static_cast<long>(sz_.groups) * cfg.n_paths;
        sz_.stride = cfg.checkpoint_stride > 0
                         ? cfg.checkpoint_stride
                         : std::max(1, static_cast<int>(std::lround(std::sqrt(sz_.m))));

        fm_ = FeatureMap(basis, model.n_modes);
        check_memory();

        sim_.dt = sz_.dt;
        sim_.horizon = T;
        sim_.seed = cfg.seed;
        sim_.scheme = cfg.scheme;
        sim_.exact_diag_variance = cfg.exact_diag_variance;
    }

    BsdeSolution run() {
        const int m = sz_.m, n = model_.n_modes, d1 = model_.d1, d2 = model_.d2;
        const long N = sz_.total_paths;
        const int B = fm_.size();
        const double dt = sz_.dt;
        Stepper st(model_, sim_);

        // checkpoint steps 0, stride, 2*stride, ..., m
        std::vector<int> cks;
        for (int j = 0; j < m; j += sz_.stride) cks.push_back(j);
        cks.push_back(m);

        std::vector<Eigen::MatrixXd> ckpt(cks.size(), Eigen::MatrixXd(N, n));
        forward_pass(st, cks, ckpt);

        cv_.resize(N);
        y_target_.resize(N);

        BsdeSolution sol;
        sol.times = Eigen::VectorXd::LinSpaced(m + 1, 0.0, m * dt);
        sol.y_coeffs.resize(m, B);
        sol.z_coeffs.assign(m, Eigen::MatrixXd(B, d1));
        sol.u_coeffs.assign(m, Eigen::MatrixXd(B, d2));
        sol.step_stats.assign(m + 1, StepStats{});
        sol.initial_values.assign(sz_.groups, GroupValue{});
        if (cfg_.store_full) {
            sol.full = true;
            sol.y.resize(N, m + 1);
            sol.z.assign(m, Eigen::MatrixXd(N, d1));
            sol.u2.assign(m, Eigen::MatrixXd(N, d2));
        }

        // terminal values from the stored endpoint states
        Eigen::VectorXd y_next(N);
        {
            const Eigen::MatrixXd& xm = ckpt.back();
            StateVector xbuf(n);
            for (long p = 0; p < N; ++p) {
                xbuf = xm.row(p).transpose();
                y_next[p] = terminal_ ? terminal_(xbuf) : 0.0;
            }
            sol.step_stats[m] = value_stats(m * dt, y_next);
            if (cfg_.store_full) sol.y.col(m) = y_next;
        }
        // crude per-path backward values carried alongside the fitted chain;
        // their group dispersion is the reported (conservative) stderr, since
        // the fitted targets are smoothed every step and their spread only
        // reflects noise conditional on the regression coefficients
        y_real_ = y_next;

        // backward sweep over regenerated blocks
        std::vector<Eigen::MatrixXd> bs;   // block states, stride+1 entries
        std::vector<Eigen::MatrixXd> bw1;  // increments within the block
        std::vector<Eigen::MatrixXd> bw2;
        Eigen::VectorXd prev_raw;  // y-coefficients of step j+1 (control variate)
        bool have_prev = false;

        for (int b = static_cast<int>(cks.size()) - 2; b >= 0; --b) {
            const int s = cks[b], e = cks[b + 1];
            regenerate_block(st, ckpt[b], s, e, bs, bw1, bw2);
            for (int j = e - 1; j >= s; --j) {
                if (!have_prev) {
                    // first backward step: fit the terminal values so the
                    // control variate exists from the start
                    Eigen::MatrixXd phi_t;
                    fm_.eval_rows(bs[e - s], phi_t);
                    StepRegressor reg;
                    reg.factorize(phi_t, cfg_.ridge);
                    prev_raw = reg.to_raw(reg.solve(phi_t, y_next));
                    have_prev = true;
                }
                regression_step(j, bs[j - s], bw1[j - s], bw2[j - s], y_next, prev_raw, sol);
                prev_raw = sol.y_coeffs.row(j).transpose();
            }
        }

        finalize_reps(sol);
        fill_metadata(sol);
        if (cfg_.fresh_path_check) fresh_check(st, sol);
        return sol;
    }

  private:
    void check_memory() {
        const long N = sz_.total_paths;
        const int n = model_.n_modes, d1 = model_.d1, d2 = model_.d2, B = fm_.size();
        double bytes = 0.0;
        bytes += (static_cast<double>(sz_.m) / sz_.stride + 2.0) * N * n * 8.0;  // checkpoints
        bytes += (sz_.stride + 1.0) * N * n * 8.0;                               // live block
        bytes += static_cast<double>(sz_.stride) * N * (d1 + d2) * 8.0;
        bytes += static_cast<double>(sz_.m) * B * (1.0 + d1 + d2) * 8.0;  // coefficients
        bytes += 4.0 * N * (B + d1 + d2 + 4.0) * 8.0;                     // regression work
        if (cfg_.store_full)
            bytes += static_cast<double>(N) * (sz_.m + 1.0) * 8.0 +
                     static_cast<double>(sz_.m) * N * (d1 + d2) * 8.0;
        if (bytes > cfg_.memory_cap_gb * 1e9)
            throw std::invalid_argument(
                "solve_finite_horizon: estimated memory exceeds memory_cap_gb");
    }

    void forward_pass(const Stepper& st, const std::vector<int>& cks,
                      std::vector<Eigen::MatrixXd>& ckpt) {
        const int m = sz_.m;
        const long N = sz_.total_paths;
        std::vector<int> ck_of_step(m + 1, -1);
        for (size_t i = 0; i < cks.size(); ++i) ck_of_step[cks[i]] = static_cast<int>(i);

        DriftAugmentation no_aug;
        Eigen::VectorXd z(st.normals_per_step());
        for (long p = 0; p < N; ++p) {
            PathNormals rng(cfg_.seed, static_cast<uint64_t>(p), st.normals_per_step());
            StateVector x = cfg_.start_points[p / cfg_.n_paths];
            ckpt[0].row(p) = x.transpose();
            for (int j = 0; j < m; ++j) {
                rng.fill_step(j, z.data());
                st.advance(j * sz_.dt, x, z.data(), no_aug);
                if (!x.allFinite()) throw BlowUpError(j + 1);
                if (ck_of_step[j + 1] >= 0) ckpt[ck_of_step[j + 1]].row(p) = x.transpose();
            }
        }
    }

    void regenerate_block(const Stepper& st, const Eigen::MatrixXd& start, int s, int e,
                          std::vector<Eigen::MatrixXd>& bs, std::vector<Eigen::MatrixXd>& bw1,
                          std::vector<Eigen::MatrixXd>& bw2) {
        const int len = e - s, n = model_.n_modes;
        const long N = sz_.total_paths;
        bs.assign(len + 1, Eigen::MatrixXd(N, n));
        bw1.assign(len, Eigen::MatrixXd(N, model_.d1));
        bw2.assign(len, Eigen::MatrixXd(N, model_.d2));

        DriftAugmentation no_aug;
        Eigen::VectorXd z(st.normals_per_step()), b1(model_.d1), b2(model_.d2);
        for (long p = 0; p < N; ++p) {
            PathNormals rng(cfg_.seed, static_cast<uint64_t>(p), st.normals_per_step());
            StateVector x = start.row(p).transpose();
            bs[0].row(p) = x.transpose();
            for (int j = s; j < e; ++j) {
                rng.fill_step(j, z.data());
                st.advance(j * sz_.dt, x, z.data(), no_aug, b1.data(), b2.data());
                bs[j - s + 1].row(p) = x.transpose();
                bw1[j - s].row(p) = b1.transpose();
                bw2[j - s].row(p) = b2.transpose();
            }
        }
    }

    StepStats value_stats(double t, const Eigen::VectorXd& y) const {
        StepStats s;
        s.t = t;
        s.mean_y = y.mean();
        s.sd_y = y.size() > 1
                     ? std::sqrt((y.array() - s.mean_y).square().sum() / (y.size() - 1))
                     : 0.0;
        return s;
    }

    void regression_step(int j, const Eigen::MatrixXd& X, const Eigen::MatrixXd& dw1,
                         const Eigen::MatrixXd& dw2, Eigen::VectorXd& y_next,
                         const Eigen::VectorXd& prev_raw, BsdeSolution& sol) {
        const long N = sz_.total_paths;
        const int d1 = model_.d1, d2 = model_.d2, n = model_.n_modes;
        const double dt = sz_.dt;

        fm_.eval_rows(X, phi_);
        cv_.noalias() = phi_ * prev_raw;  // \hat y_{j+1}(X_j), variance control

        StepRegressor reg;
        reg.factorize(phi_, cfg_.ridge);  // phi_ standardized in place
        sol.max_condition = std::max(sol.max_condition, reg.condition());

        // martingale-increment regressions for Z and U
        zu_fit_.resize(N, d1 + d2);
        Eigen::VectorXd target(N);
        for (int k = 0; k < d1 + d2; ++k) {
            const Eigen::MatrixXd& dw = k < d1 ? dw1 : dw2;
            const int col = k < d1 ? k : k - d1;
            target = (y_next - cv_).cwiseProduct(dw.col(col)) / dt;
            Eigen::VectorXd c_std = reg.solve(phi_, target);
            zu_fit_.col(k).noalias() = phi_ * c_std;
            Eigen::VectorXd raw = reg.to_raw(c_std);
            if (k < d1)
                sol.z_coeffs[j].col(k) = raw;
            else
                sol.u_coeffs[j].col(k - d1) = raw;
        }

        // driver along fitted (z, u); z enters through G^{-1}
        StateVector xbuf(n);
        Eigen::VectorXd zrow(d1), urow(d2), zeff(d1);
        const double inv_disc = 1.0 / (1.0 + alpha_ * dt);
        double sum_az = 0.0, sum_au = 0.0;
        for (long p = 0; p < N; ++p) {
            xbuf = X.row(p).transpose();
            zrow = zu_fit_.row(p).head(d1).transpose();
            urow = zu_fit_.row(p).tail(d2).transpose();
            zeff.noalias() = model_.g_inverse(xbuf).transpose() * zrow;
            double psi = driver_.psi(xbuf, zeff, urow);
            y_target_[p] = (y_next[p] + dt * psi) * inv_disc;
            y_real_[p] = (y_real_[p] + dt * psi) * inv_disc;
            sum_az += zrow.norm();
            sum_au += urow.norm();
        }

        if (j == 0) {
            for (int g = 0; g < sz_.groups; ++g) {
                auto seg = y_target_.segment(static_cast<long>(g) * cfg_.n_paths, cfg_.n_paths);
                auto raw = y_real_.segment(static_cast<long>(g) * cfg_.n_paths, cfg_.n_paths);
                GroupValue gv;
                gv.x = cfg_.start_points[g];
                gv.n = cfg_.n_paths;
                gv.value = seg.mean();
                double var = (raw.array() - raw.mean()).square().sum() / (gv.n - 1);
                gv.std_error = std::sqrt(var / gv.n);
                sol.initial_values[g] = gv;
            }
        }

        Eigen::VectorXd cy_std = reg.solve(phi_, y_target_);
        sol.y_coeffs.row(j) = reg.to_raw(cy_std).transpose();
        y_next.noalias() = phi_ * cy_std;

        StepStats stats = value_stats(j * dt, y_next);
        stats.mean_abs_z = sum_az / N;
        stats.mean_abs_u = d2 > 0 ? sum_au / N : 0.0;
        sol.step_stats[j] = stats;
        if (cfg_.store_full) {
            sol.y.col(j) = y_next;
            sol.z[j] = zu_fit_.leftCols(d1);
            sol.u2[j] = zu_fit_.rightCols(d2);
        }
    }

    void finalize_reps(BsdeSolution& sol) const {
        const int m = sz_.m, B = fm_.size();
        const double lo = cfg_.rep_window_lo * T_, hi = cfg_.rep_window_hi * T_;
        std::vector<int> window;
        for (int j = 1; j < m; ++j) {
            double t = j * sz_.dt;
            if (t >= lo && t <= hi) window.push_back(j);
        }
        if (window.empty())
            for (int j = std::min(1, m - 1); j < m; ++j) window.push_back(j);

        sol.y_rep = Eigen::VectorXd::Zero(B);
        sol.z_rep = Eigen::MatrixXd::Zero(B, model_.d1);
        sol.u_rep = Eigen::MatrixXd::Zero(B, model_.d2);
        for (int j : window) {
            sol.y_rep += sol.y_coeffs.row(j).transpose();
            sol.z_rep += sol.z_coeffs[j];
            sol.u_rep += sol.u_coeffs[j];
        }
        sol.y_rep /= static_cast<double>(window.size());
        sol.z_rep /= static_cast<double>(window.size());
        sol.u_rep /= static_cast<double>(window.size());
    }

    void fill_metadata(BsdeSolution& sol) const {
        sol.dt = sz_.dt;
        sol.horizon = T_;
        sol.alpha = alpha_;
        sol.seed = cfg_.seed;
        sol.scheme = cfg_.scheme;
        sol.exact_diag_variance = cfg_.exact_diag_variance;
        sol.start_points = cfg_.start_points;
        sol.n_per_group = cfg_.n_paths;
        sol.features = fm_;
        sol.terminal = terminal_;
    }

    // Out-of-sample estimate: fresh paths, frozen per-step coefficient
    // functions, and the unrolled discounted sum instead of the projected
    // backward recursion.
    void fresh_check(const Stepper& st, BsdeSolution& sol) const {
        const int m = sz_.m, d1 = model_.d1, d2 = model_.d2, n = model_.n_modes;
        const double dt = sz_.dt;
        const long N = sz_.total_paths;
        DriftAugmentation no_aug;
        Eigen::VectorXd z(st.normals_per_step()), phi(fm_.size()), zeff(d1), zrow(d1), urow(d2);
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(N);
        for (long p = 0; p < N; ++p) {
            PathNormals rng(cfg_.seed + kFreshSeedOffset, static_cast<uint64_t>(p),
                            st.normals_per_step());
            StateVector x = cfg_.start_points[p / cfg_.n_paths];
            double disc = 1.0;
            for (int j = 0; j < m; ++j) {
                fm_.eval_into(x, phi.data());
                zrow.noalias() = sol.z_coeffs[j].transpose() * phi;
                urow.noalias() = sol.u_coeffs[j].transpose() * phi;
                zeff.noalias() = model_.g_inverse(x).transpose() * zrow;
                double psi = driver_.psi(x, zeff, urow);
                disc /= 1.0 + alpha_ * dt;
                acc[p] += dt * psi * disc;
                rng.fill_step(j, z.data());
                st.advance(j * dt, x, z.data(), no_aug);
                if (!x.allFinite()) throw BlowUpError(j + 1);
            }
            if (terminal_) acc[p] += disc * terminal_(x);
        }
        sol.fresh_initial_values.assign(sz_.groups, GroupValue{});
        for (int g = 0; g < sz_.groups; ++g) {
            auto seg = acc.segment(static_cast<long>(g) * cfg_.n_paths, cfg_.n_paths);
            GroupValue gv;
            gv.x = cfg_.start_points[g];
            gv.n = cfg_.n_paths;
            gv.value = seg.mean();
            double var = (seg.array() - gv.value).square().sum() / (gv.n - 1);
            gv.std_error = std::sqrt(var / gv.n);
            sol.fresh_initial_values[g] = gv;
        }
    }

    const GalerkinModel& model_;
    const DriverSpec& driver_;
    std::function<double(const StateVector&)> terminal_;
    double T_;
    double alpha_;
    BsdeConfig cfg_;
    Sizing sz_;
    FeatureMap fm_;
    SimConfig sim_;

    Eigen::MatrixXd phi_, zu_fit_;
    Eigen::VectorXd cv_, y_target_, y_real_;
};

}  // namespace

BsdeSolution solve_finite_horizon(const GalerkinModel& model, const DriverSpec& driver,
                                  const std::function<double(const StateVector&)>& terminal,
                                  double T, double alpha, const RegressionBasis& basis,
                                  const BsdeConfig& cfg) {
    LsmcEngine engine(model, driver, terminal, T, alpha, basis, cfg);
    return engine.run();
}

DiscountedValue solve_discounted(const GalerkinModel& model, const DriverSpec& driver,
                                 double alpha, const std::vector<StateVector>& eval_points,
                                 const RegressionBasis& basis, const DiscountedConfig& cfg) {
    if (!(alpha > 0.0)) throw std::invalid_argument("solve_discounted: alpha must be positive");
    if (eval_points.empty())
        throw std::invalid_argument("solve_discounted: eval_points required");

    const double m_psi = std::max(driver.bound_at_zero, cfg.tail_tolerance);
    double T = std::log(m_psi / (alpha * cfg.tail_tolerance)) / alpha;
    T = std::min(std::max(T, 1.0), cfg.horizon_cap);
    const int m = std::max<int>(1, static_cast<int>(std::ceil(T / cfg.solver.dt)));
    T = m * cfg.solver.dt;

    BsdeConfig bcfg = cfg.solver;
    bcfg.start_points = eval_points;
    BsdeSolution sol = solve_finite_horizon(model, driver, nullptr, T, alpha, basis, bcfg);

    DiscountedValue dv;
    dv.alpha = alpha;
    dv.truncation_T = T;
    dv.tail_bound = std::exp(-alpha * T) * driver.bound_at_zero / alpha;
    dv.values = sol.initial_values;
    dv.y_rep = sol.y_rep;
    dv.z_rep = sol.z_rep;
    dv.u_rep = sol.u_rep;
    dv.features = sol.features;
    dv.step_stats = sol.step_stats;
    dv.max_condition = sol.max_condition;
    return dv;
}

ResidualReport residual_diagnostic(const BsdeSolution& solution, const GalerkinModel& model,
                                   const DriverSpec& driver, double threshold) {
    const int m = static_cast<int>(solution.y_coeffs.rows());
    if (m == 0) throw std::invalid_argument("residual_diagnostic: empty solution");
    if (solution.start_points.empty() || solution.n_per_group < 1)
        throw std::invalid_argument("residual_diagnostic: solution lacks replay metadata");
    const int d1 = model.d1, d2 = model.d2, n = model.n_modes;
    const int B = solution.features.size();
    const long N = static_cast<long>(solution.start_points.size()) * solution.n_per_group;
    const double dt = solution.dt, disc = 1.0 + solution.alpha * dt;

    SimConfig sim;
    sim.dt = dt;
    sim.horizon = solution.horizon;
    sim.seed = solution.seed;
    sim.scheme = solution.scheme;
    sim.exact_diag_variance = solution.exact_diag_variance;
    Stepper st(model, sim);

    ResidualReport rep;
    rep.threshold = threshold;
    rep.per_step_ms = Eigen::VectorXd::Zero(m);

    // per-step accumulators for the projection-residual/feature correlation
    Eigen::MatrixXd s_phi = Eigen::MatrixXd::Zero(m, B);
    Eigen::MatrixXd s_phi2 = Eigen::MatrixXd::Zero(m, B);
    Eigen::MatrixXd s_phir = Eigen::MatrixXd::Zero(m, B);
    Eigen::VectorXd s_r = Eigen::VectorXd::Zero(m), s_r2 = Eigen::VectorXd::Zero(m);

    DriftAugmentation no_aug;
    Eigen::VectorXd z(st.normals_per_step()), phi(B), phi_next(B);
    Eigen::VectorXd zrow(d1), urow(d2), zeff(d1), b1(d1), b2(d2);
    double total_sq = 0.0;
    for (long p = 0; p < N; ++p) {
        PathNormals rng(solution.seed, static_cast<uint64_t>(p), st.normals_per_step());
        StateVector x = solution.start_points[p / solution.n_per_group];
        solution.features.eval_into(x, phi.data());
        for (int j = 0; j < m; ++j) {
            double y_here = solution.y_coeffs.row(j).dot(phi);
            zrow.noalias() = solution.z_coeffs[j].transpose() * phi;
            urow.noalias() = solution.u_coeffs[j].transpose() * phi;
            zeff.noalias() = model.g_inverse(x).transpose() * zrow;
            double psi = driver.psi(x, zeff, urow);

            rng.fill_step(j, z.data());
            st.advance(j * dt, x, z.data(), no_aug, b1.data(), b2.data());
            solution.features.eval_into(x, phi_next.data());
            double y_up = j + 1 < m ? solution.y_coeffs.row(j + 1).dot(phi_next)
                                    : (solution.terminal ? solution.terminal(x) : 0.0);

            double r = disc * y_here - y_up - dt * psi + zrow.dot(b1) + urow.dot(b2);
            double rho = y_here - (y_up + dt * psi) / disc;  // projection part
            total_sq += r * r;
            rep.per_step_ms[j] += r * r;
            s_phi.row(j) += phi.transpose();
            s_phi2.row(j) += phi.array().square().matrix().transpose();
            s_phir.row(j) += rho * phi.transpose();
            s_r[j] += rho;
            s_r2[j] += rho * rho;
            phi.swap(phi_next);
        }
    }
    rep.per_step_ms /= static_cast<double>(N);
    rep.mean_square = total_sq / (static_cast<double>(N) * m);

    for (int j = 0; j < m; ++j) {
        double mr = s_r[j] / N;
        double vr = std::max(s_r2[j] / N - mr * mr, 0.0);
        for (int k = 0; k < B; ++k) {
            double mp = s_phi(j, k) / N;
            double vp = std::max(s_phi2(j, k) / N - mp * mp, 0.0);
            double cov = s_phir(j, k) / N - mp * mr;
            double denom = std::sqrt(std::max(vp * vr, 1e-300));
            if (vp > 1e-24)
                rep.max_feature_corr = std::max(rep.max_feature_corr, std::abs(cov) / denom);
            else
                rep.max_feature_corr = std::max(rep.max_feature_corr, std::abs(cov));
        }
    }
    rep.below_threshold = rep.mean_square <= threshold;
    return rep;
}

}  // namespace ebsde
