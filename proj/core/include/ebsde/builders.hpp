#pragma once

#include <functional>

#include "ebsde/driver.hpp"
#include "ebsde/model.hpp"

namespace ebsde {

// 1D Ornstein-Uhlenbeck benchmark: dX = -a X dt + sigma dW1, G = 1, no W2.
struct OuOptions {
    double a = 1.0;
    double sigma = 1.0;
};
GalerkinModel build_ou_model(const OuOptions& options);

// Boundary-controlled heat equation on (0, pi), Dirichlet sine modes, with
// the boundary lift r(xi) = 1 - xi/pi entering through a dense block
// generator; the scalar boundary channel y carries the W1 noise, the heat
// coordinates carry the degenerate W2 noise.
struct BoundaryModelOptions {
    int heat_modes = 16;
    std::function<double(double)> d_profile;  // default: constant 1
    std::function<double(double)> b;          // default: -y
    std::function<double(double)> sigma;      // default: 1
    std::function<double(double)> rho;        // control gain, default: gamma itself
    double lip_b = 1.0;
    double lip_sigma = 0.0;
    double bound_sigma = 1.0;
    double sigma_floor = 1.0;  // delta > 0
    double decay_exponent = 0.25;
    int quad_points = 201;
};
GalerkinModel build_boundary_control_model(const BoundaryModelOptions& options);

// Reaction-diffusion equation on (0,1), Dirichlet sine modes (eigenvalues
// -(k pi)^2), pointwise reaction f projected by quadrature, scalar channel y
// with drift b and diffusion sigma carrying the W1 noise.
struct ReactionModelOptions {
    int heat_modes = 16;
    std::function<double(double)> f;          // default: 0
    std::function<double(double)> b;          // default: -y
    std::function<double(double)> sigma;      // default: 1
    std::function<double(double)> d_profile;  // default: constant 1
    double mu_f = 0.0;   // one-sided monotonicity of f
    double lip_f = 0.0;
    double mu_b = 1.0;
    double lip_b = 1.0;
    double lip_sigma = 0.0;
    double bound_sigma = 1.0;
    double sigma_floor = 1.0;
    double decay_exponent = 0.25;
    int quad_points = 201;
};
GalerkinModel build_reaction_model(const ReactionModelOptions& options);

// Integral of func along the field reconstructed from the first heat_modes
// sine coefficients: x -> integral over (0, domain_length) of func(field(xi)),
// Simpson rule. domain_length is pi for the boundary model, 1 for reaction.
std::function<double(const StateVector&)> make_field_average(
    int heat_modes, double domain_length, const std::function<double(double)>& func,
    int quad_points = 201);

// Sine-basis coefficient <r, e_k> of the boundary lift r(xi) = 1 - xi/pi on
// (0, pi); closed form sqrt(2/pi)/k.
double boundary_lift_coefficient(int k);

}  // namespace ebsde
