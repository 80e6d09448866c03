#include "ebsde/builders.hpp"

#include <cmath>
#include <stdexcept>

namespace ebsde {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Simpson weights on an odd uniform grid over [0, len]
void simpson_grid(int points, double len, Eigen::VectorXd& xi, Eigen::VectorXd& w) {
    if (points < 3 || points % 2 == 0)
        throw std::invalid_argument("simpson_grid: need an odd point count >= 3");
    xi.resize(points);
    w.resize(points);
    double h = len / (points - 1);
    for (int i = 0; i < points; ++i) {
        xi[i] = i * h;
        w[i] = (i == 0 || i == points - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    }
    w *= h / 3.0;
}

// sine basis e_k(xi) = sqrt(2/len) sin(k pi xi / len), k = 1..modes
Eigen::MatrixXd sine_basis_matrix(const Eigen::VectorXd& xi, int modes, double len) {
    Eigen::MatrixXd e(xi.size(), modes);
    double norm = std::sqrt(2.0 / len);
    for (int i = 0; i < xi.size(); ++i)
        for (int k = 0; k < modes; ++k) e(i, k) = norm * std::sin((k + 1) * kPi * xi[i] / len);
    return e;
}

Eigen::MatrixXd projected_noise_matrix(const std::function<double(double)>& d_profile, int modes,
                                       double len, int quad_points) {
    if (!d_profile) return Eigen::MatrixXd::Identity(modes, modes);
    Eigen::VectorXd xi, w;
    simpson_grid(quad_points, len, xi, w);
    Eigen::MatrixXd e = sine_basis_matrix(xi, modes, len);
    Eigen::VectorXd dvals(xi.size());
    for (int i = 0; i < xi.size(); ++i) dvals[i] = d_profile(xi[i]);
    return e.transpose() * (dvals.array() * w.array()).matrix().asDiagonal() * e;
}

double fit_decay_scale(const LinearOperator& a_op, const Eigen::MatrixXd& d, double gamma) {
    if (d.cols() == 0) return 0.0;
    double scale = 0.0;
    for (int i = 0; i < 25; ++i) {
        double s = std::pow(10.0, -2.0 + 3.0 * i / 24.0);
        double lhs = (a_op.exponential(s) * d).norm();
        scale = std::max(scale, lhs / std::min(std::pow(s, -gamma), 1.0));
    }
    return scale;
}

}  // namespace

double boundary_lift_coefficient(int k) {
    if (k < 1) throw std::invalid_argument("boundary_lift_coefficient: k >= 1");
    return std::sqrt(2.0 / kPi) / k;
}

GalerkinModel build_ou_model(const OuOptions& options) {
    GalerkinModel m;
    m.name = "ou";
    m.n_modes = 1;
    m.d1 = 1;
    m.d2 = 0;
    m.a_op = LinearOperator::diagonal(Eigen::VectorXd::Constant(1, -options.a));
    m.q = Eigen::MatrixXd::Constant(1, 1, options.sigma);
    m.g = [](const StateVector&) { return Eigen::MatrixXd::Identity(1, 1); };
    m.g_inverse = [](const StateVector&) { return Eigen::MatrixXd::Identity(1, 1); };
    m.d = Eigen::MatrixXd::Zero(1, 0);
    m.constants.lip_drift = 0.0;
    m.constants.lip_g = 0.0;
    m.constants.bound_g = 1.0;
    m.constants.bound_g_inverse = 1.0;
    return m;
}

GalerkinModel build_boundary_control_model(const BoundaryModelOptions& options) {
    if (options.heat_modes < 1)
        throw std::invalid_argument("boundary model: heat_modes >= 1");
    if (options.sigma_floor <= 0.0)
        throw std::invalid_argument("boundary model: sigma floor must be positive");
    const int K = options.heat_modes;
    const int n = K + 1;

    GalerkinModel m;
    m.name = "boundary_heat";
    m.n_modes = n;
    m.d1 = 1;
    m.d2 = K;

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k < K; ++k) {
        double lam = static_cast<double>(k + 1) * (k + 1);
        a(k, k) = -lam;
        a(k, K) = lam * boundary_lift_coefficient(k + 1);  // -Delta R on modes
    }
    m.a_op = LinearOperator::dense(a);

    auto b = options.b ? options.b : [](double y) { return -y; };
    m.drift = [n, b](const StateVector& x) {
        StateVector f = StateVector::Zero(n);
        f[n - 1] = b(x[n - 1]);
        return f;
    };

    m.q = Eigen::MatrixXd::Zero(n, 1);
    m.q(n - 1, 0) = 1.0;

    auto sigma = options.sigma ? options.sigma : [](double) { return 1.0; };
    m.g = [n, sigma](const StateVector& x) {
        return Eigen::MatrixXd::Constant(1, 1, sigma(x[n - 1]));
    };
    m.g_inverse = [n, sigma](const StateVector& x) {
        return Eigen::MatrixXd::Constant(1, 1, 1.0 / sigma(x[n - 1]));
    };

    m.d = Eigen::MatrixXd::Zero(n, K);
    m.d.topRows(K) = projected_noise_matrix(options.d_profile, K, kPi, options.quad_points);

    m.constants.lip_drift = options.lip_b;
    m.constants.lip_g = options.lip_sigma;
    m.constants.bound_g = options.bound_sigma;
    m.constants.bound_g_inverse = 1.0 / options.sigma_floor;
    m.constants.decay_exponent = options.decay_exponent;
    m.constants.decay_scale = fit_decay_scale(m.a_op, m.d, options.decay_exponent);
    m.claim_joint_dissipativity = false;
    return m;
}

GalerkinModel build_reaction_model(const ReactionModelOptions& options) {
    if (options.heat_modes < 1)
        throw std::invalid_argument("reaction model: heat_modes >= 1");
    if (options.sigma_floor <= 0.0)
        throw std::invalid_argument("reaction model: sigma floor must be positive");
    const int K = options.heat_modes;
    const int n = K + 1;

    GalerkinModel m;
    m.name = "reaction_heat";
    m.n_modes = n;
    m.d1 = 1;
    m.d2 = K;

    Eigen::VectorXd eigs(n);
    for (int k = 0; k < K; ++k) {
        double lam = (k + 1) * kPi;
        eigs[k] = -lam * lam;
    }
    eigs[K] = 0.0;
    m.a_op = LinearOperator::diagonal(eigs);

    auto b = options.b ? options.b : [](double y) { return -y; };
    if (options.f) {
        Eigen::VectorXd xi, w;
        simpson_grid(options.quad_points, 1.0, xi, w);
        Eigen::MatrixXd e = sine_basis_matrix(xi, K, 1.0);
        auto f = options.f;
        m.drift = [n, K, b, f, e, w](const StateVector& x) {
            Eigen::VectorXd field = e * x.head(K);
            for (int i = 0; i < field.size(); ++i) field[i] = f(field[i]);
            StateVector out(n);
            out.head(K) = e.transpose() * (w.array() * field.array()).matrix();
            out[n - 1] = b(x[n - 1]);
            return out;
        };
    } else {
        m.drift = [n, b](const StateVector& x) {
            StateVector out = StateVector::Zero(n);
            out[n - 1] = b(x[n - 1]);
            return out;
        };
    }

    m.q = Eigen::MatrixXd::Zero(n, 1);
    m.q(n - 1, 0) = 1.0;

    auto sigma = options.sigma ? options.sigma : [](double) { return 1.0; };
    m.g = [n, sigma](const StateVector& x) {
        return Eigen::MatrixXd::Constant(1, 1, sigma(x[n - 1]));
    };
    m.g_inverse = [n, sigma](const StateVector& x) {
        return Eigen::MatrixXd::Constant(1, 1, 1.0 / sigma(x[n - 1]));
    };

    m.d = Eigen::MatrixXd::Zero(n, K);
    m.d.topRows(K) = projected_noise_matrix(options.d_profile, K, 1.0, options.quad_points);

    m.constants.lip_drift = options.lip_f + options.lip_b;
    m.constants.lip_g = options.lip_sigma;
    m.constants.bound_g = options.bound_sigma;
    m.constants.bound_g_inverse = 1.0 / options.sigma_floor;
    m.constants.decay_exponent = options.decay_exponent;
    m.constants.decay_scale = fit_decay_scale(m.a_op, m.d, options.decay_exponent);

    DissipativityInputs di;
    di.mu_delta = kPi * kPi;
    di.mu_f = options.mu_f;
    di.lip_f = options.lip_f;
    di.mu_b = options.mu_b;
    di.lip_sigma = options.lip_sigma;
    m.dissipativity_inputs = di;
    return m;
}

std::function<double(const StateVector&)> make_field_average(
    int heat_modes, double domain_length, const std::function<double(double)>& func,
    int quad_points) {
    Eigen::VectorXd xi, w;
    simpson_grid(quad_points, domain_length, xi, w);
    Eigen::MatrixXd e = sine_basis_matrix(xi, heat_modes, domain_length);
    return [heat_modes, func, e, w](const StateVector& x) {
        Eigen::VectorXd field = e * x.head(heat_modes);
        double acc = 0.0;
        for (int i = 0; i < field.size(); ++i) acc += w[i] * func(field[i]);
        return acc;
    };
}

}  // namespace ebsde
