#include "ebsde/model.hpp"

#include <cmath>
#include <stdexcept>

#include "ebsde/rng.hpp"

namespace ebsde {

namespace {

StateVector gaussian_state(int dim, uint64_t seed, uint64_t stream, double scale) {
    StateVector x(dim);
    for (int i = 0; i < dim; ++i) {
        x[i] = scale * normal_pair(seed, stream, static_cast<uint64_t>(i))[0];
    }
    return x;
}

double op_norm(const Eigen::MatrixXd& m) {
    if (m.size() == 0) return 0.0;
    if (m.rows() == 1 && m.cols() == 1) return std::abs(m(0, 0));
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    return svd.singularValues()(0);
}

}  // namespace

StateVector semigroup_apply(const GalerkinModel& model, double t, const StateVector& x) {
    if (x.size() != model.n_modes) throw std::invalid_argument("semigroup_apply: dimension mismatch");
    if (t < 0.0) throw std::invalid_argument("semigroup_apply: negative time");
    if (!x.allFinite()) throw std::invalid_argument("semigroup_apply: non-finite input");
    return model.a_op.apply_semigroup(t, x);
}

Coefficients eval_coefficients(const GalerkinModel& model, const StateVector& x) {
    if (x.size() != model.n_modes) throw std::invalid_argument("eval_coefficients: dimension mismatch");
    Coefficients c;
    c.drift = model.drift ? model.drift(x) : StateVector::Zero(model.n_modes);
    c.g = model.g(x);
    if (c.g.rows() != model.d1 || c.g.cols() != model.d1)
        throw std::invalid_argument("eval_coefficients: G has wrong shape");
    if (model.g_inverse) {
        c.g_inv = model.g_inverse(x);
    } else {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(c.g);
        if (!lu.isInvertible())
            throw std::runtime_error("eval_coefficients: G numerically singular");
        c.g_inv = lu.inverse();
    }
    double residual = (c.g_inv * c.g - Eigen::MatrixXd::Identity(model.d1, model.d1))
                          .cwiseAbs()
                          .maxCoeff();
    if (residual > 1e-8)
        throw std::runtime_error("eval_coefficients: G inverse residual " + std::to_string(residual));
    c.qg = model.q * c.g;
    return c;
}

ValidationReport validate_standing_assumptions(const GalerkinModel& model, int sample_count,
                                               uint64_t seed) {
    if (sample_count < 2) throw std::invalid_argument("validate_standing_assumptions: sample_count < 2");
    ValidationReport report;
    report.sample_count = sample_count;
    report.seed = seed;
    const int n = model.n_modes;
    const double slack = 1.05;

    // semigroup law on a few sampled (s, t, x)
    {
        double worst = 0.0;
        const double pairs[4][2] = {{0.1, 0.2}, {0.5, 0.5}, {1.0, 0.3}, {0.05, 1.5}};
        for (int i = 0; i < 4; ++i) {
            StateVector x = gaussian_state(n, seed, 900 + i, 1.0);
            double s = pairs[i][0], t = pairs[i][1];
            StateVector lhs = semigroup_apply(model, s + t, x);
            StateVector rhs = semigroup_apply(model, s, semigroup_apply(model, t, x));
            worst = std::max(worst, (lhs - rhs).norm() / (1.0 + x.norm()));
        }
        report.checks.push_back({"semigroup_law", true, worst <= 1e-10, worst, 1e-10, ""});
    }

    double worst_f = 0.0, worst_g = 0.0, worst_mg = 0.0, worst_mginv = 0.0, worst_res = 0.0;
    std::string coeff_fault;
    for (int i = 0; i < sample_count && coeff_fault.empty(); ++i) {
        StateVector x = gaussian_state(n, seed, 2 * i, 1.0);
        StateVector xp = gaussian_state(n, seed, 2 * i + 1, 1.0);
        double dist = (x - xp).norm();
        try {
            Coefficients cx = eval_coefficients(model, x);
            Coefficients cxp = eval_coefficients(model, xp);
            if (dist > 1e-12) {
                worst_f = std::max(worst_f, (cx.drift - cxp.drift).norm() / dist);
                worst_g = std::max(worst_g, op_norm(cx.g - cxp.g) / dist);
            }
            worst_mg = std::max(worst_mg, op_norm(cx.g));
            worst_mginv = std::max(worst_mginv, op_norm(cx.g_inv));
            double res = (cx.g_inv * cx.g - Eigen::MatrixXd::Identity(model.d1, model.d1))
                             .cwiseAbs()
                             .maxCoeff();
            worst_res = std::max(worst_res, res);
        } catch (const std::exception& e) {
            coeff_fault = e.what();
        }
    }
    report.checks.push_back(
        {"g_invertibility", true, coeff_fault.empty(), 0.0, 0.0, coeff_fault});
    report.checks.push_back(
        {"drift_lipschitz", true, worst_f <= model.constants.lip_drift * slack, worst_f,
         model.constants.lip_drift, ""});
    report.checks.push_back({"g_lipschitz", true, worst_g <= model.constants.lip_g * slack + 1e-12,
                             worst_g, model.constants.lip_g, ""});
    report.checks.push_back({"g_bound", true, worst_mg <= model.constants.bound_g * slack, worst_mg,
                             model.constants.bound_g, ""});
    report.checks.push_back({"g_inverse_bound", true,
                             worst_mginv <= model.constants.bound_g_inverse * slack, worst_mginv,
                             model.constants.bound_g_inverse, ""});
    report.checks.push_back({"g_inverse_residual", true, worst_res <= 1e-10, worst_res, 1e-10, ""});

    {
        double gamma = model.constants.decay_exponent;
        bool range_ok = gamma >= 0.0 && gamma < 0.5;
        report.checks.push_back({"decay_exponent_range", true, range_ok, gamma, 0.5, "[0, 1/2)"});
        if (model.d2 > 0) {
            double worst_ratio = 0.0, worst_s = 0.0;
            for (int i = 0; i < 25; ++i) {
                double s = std::pow(10.0, -2.0 + 3.0 * i / 24.0);  // log grid [1e-2, 10]
                double lhs = (model.a_op.exponential(s) * model.d).norm();
                double rhs = model.constants.decay_scale * std::min(std::pow(s, -gamma), 1.0);
                double ratio = rhs > 0 ? lhs / rhs : (lhs > 0 ? 1e300 : 0.0);
                if (ratio > worst_ratio) {
                    worst_ratio = ratio;
                    worst_s = s;
                }
            }
            report.checks.push_back({"noise_decay", true, worst_ratio <= slack, worst_ratio, slack,
                                     "worst s = " + std::to_string(worst_s)});
        } else {
            report.checks.push_back({"noise_decay", true, true, 0.0, 0.0, "no degenerate channel"});
        }
    }

    {
        double q_frob = model.q.norm();
        report.checks.push_back(
            {"q_hilbert_schmidt", true, std::isfinite(q_frob), q_frob, 0.0, "finite Frobenius norm"});
    }
    return report;
}

DissipativityCertificate joint_dissipativity_certificate(const GalerkinModel& model,
                                                         const CertificateOptions& options) {
    DissipativityCertificate cert;
    bool use_matrix = options.mode == CertificateOptions::Mode::matrix ||
                      (options.mode == CertificateOptions::Mode::automatic &&
                       model.dissipativity_inputs.has_value());
    if (use_matrix) {
        if (!model.dissipativity_inputs)
            throw std::invalid_argument("certificate: matrix mode needs dissipativity inputs");
        const auto& di = *model.dissipativity_inputs;
        Eigen::Matrix2d m;
        m << -di.mu_delta - di.mu_f, 0.5 * di.lip_f, 0.5 * di.lip_f,
            -di.mu_b + 0.5 * di.lip_sigma * di.lip_sigma;
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m);
        double lambda_max = es.eigenvalues().maxCoeff();
        cert.mode = DissipativityCertificate::Mode::matrix;
        cert.witness_matrix = m;
        cert.holds = lambda_max < 0.0;
        cert.mu_bar = -lambda_max;
        if (!cert.holds) cert.note = "comparison matrix not negative definite";
        return cert;
    }

    cert.mode = DissipativityCertificate::Mode::sampled;
    const int n = model.n_modes;
    double worst = 1e300;
    auto probe = [&](const StateVector& x, const StateVector& xp) {
        double d2 = (x - xp).squaredNorm();
        if (d2 < 1e-20) return;
        Coefficients cx = eval_coefficients(model, x);
        Coefficients cxp = eval_coefficients(model, xp);
        StateVector dx = x - xp;
        double lhs = 2.0 * (model.a_op.apply_generator(dx) + cx.drift - cxp.drift).dot(dx) +
                     (model.q * (cx.g - cxp.g)).squaredNorm();
        worst = std::min(worst, -lhs / d2);
    };
    for (int i = 0; i < options.sample_count; ++i) {
        StateVector x = gaussian_state(n, options.seed, 2 * i, options.pair_scale);
        StateVector xp = gaussian_state(n, options.seed, 2 * i + 1, options.pair_scale);
        probe(x, xp);
    }
    // coordinate-aligned pairs expose the per-block extremes
    for (int k = 0; k < n; ++k) {
        StateVector base = gaussian_state(n, options.seed, 100000 + k, options.pair_scale);
        StateVector shifted = base;
        shifted[k] += 0.5 * options.pair_scale;
        probe(base, shifted);
        StateVector origin = StateVector::Zero(n);
        StateVector unit = StateVector::Zero(n);
        unit[k] = options.pair_scale;
        probe(origin, unit);
    }
    cert.worst_ratio = worst;
    cert.mu_bar = 0.5 * worst;
    cert.holds = worst > 0.0;
    if (!cert.holds) cert.note = "positive two-point form found";
    return cert;
}

}  // namespace ebsde
