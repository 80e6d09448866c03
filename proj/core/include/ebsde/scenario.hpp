#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ebsde/bsde.hpp"
#include "ebsde/builders.hpp"
#include "ebsde/control.hpp"
#include "ebsde/driver.hpp"
#include "ebsde/ergodic.hpp"
#include "ebsde/model.hpp"

namespace ebsde {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Declarative experiment description, loaded from strict JSON: unknown keys
// anywhere are rejected with their path.
struct Scenario {
    std::string name;

    // model block
    std::string model_builder;  // ou | boundary_heat | reaction_heat
    std::map<std::string, double> model_params;

    // driver block
    std::string driver_kind;  // constant | cos_x1 | linear_z | example2 | control
    std::map<std::string, double> driver_params;
    std::string state_cost_kind = "none";  // none | avg_cos
    double state_cost_weight = 1.0;

    // control block (optional)
    bool has_control = false;
    double gamma_lo = -1.0;
    double gamma_hi = 1.0;
    int gamma_points = 2001;
    std::vector<double> constant_policies;
    double control_horizon = 200.0;
    double control_burn_in = 0.0;  // 0 = auto (5 relaxation times)
    int control_paths = 200;
    double girsanov_T = 1.0;

    // solver block
    double dt = 0.01;
    int n_paths = 10000;
    uint64_t seed = 12345;
    Scheme scheme = Scheme::exponential_euler;
    bool exact_diag_variance = false;
    RegressionBasis basis;
    std::vector<double> alpha_schedule = {0.4, 0.2, 0.1, 0.05, 0.025};
    double tail_tolerance = 1e-3;
    double horizon_cap = 2000.0;
    double ridge = 1e-10;
    std::vector<StateVector> eval_points;
    StateVector x_ref;
    std::vector<std::pair<int, int>> lipschitz_pairs;

    // hjb block
    std::vector<std::pair<double, double>> t_T_pairs;
    std::vector<double> parabolic_T_list;
    int hjb_inner_paths = 4000;
    std::vector<double> gradient_h_list = {1e-2, 1e-3};
    double hjb_bias_allowance = 2e-3;

    // simulate block
    double sim_horizon = 10.0;
    int sim_paths = 1000;
    bool sim_dump_bundle = false;

    // outputs block
    std::string output_directory;  // default out/<name>
    bool emit_csv = true;
    bool emit_json = true;
};

Scenario load_scenario(const std::string& path);
// --set key=value override with dotted paths (e.g. solver.dt=0.005)
void apply_override(Scenario& scn, const std::string& key, const std::string& value);

GalerkinModel make_model(const Scenario& scn);
DriverSpec make_driver(const Scenario& scn, const GalerkinModel& model);
std::optional<ControlStructure> make_control_structure(const Scenario& scn,
                                                       const GalerkinModel& model);

BsdeConfig make_bsde_config(const Scenario& scn);
DiscountedConfig make_discounted_config(const Scenario& scn);
VanishingDiscountConfig make_vd_config(const Scenario& scn);

}  // namespace ebsde
