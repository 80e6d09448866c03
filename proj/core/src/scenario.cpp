#include "ebsde/scenario.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ebsde {

namespace {

using nlohmann::json;

constexpr double kPi = 3.14159265358979323846;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw ConfigError(path + ": " + msg);
}

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> ok) {
    std::set<std::string> allowed(ok.begin(), ok.end());
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) fail(path + "." + it.key(), "unknown key");
}

const json& child(const json& obj, const char* key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end()) fail(path + "." + key, "missing required key");
    return *it;
}

const json* maybe(const json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

double num(const json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "expected number");
    return j.get<double>();
}

int integer(const json& j, const std::string& path) {
    double v = num(j, path);
    double r = std::llround(v);
    if (std::abs(v - r) > 1e-9) fail(path, "expected integer");
    return static_cast<int>(r);
}

uint64_t unsigned64(const json& j, const std::string& path) {
    if (j.is_number_unsigned()) return j.get<uint64_t>();
    if (j.is_number_integer()) {
        auto v = j.get<int64_t>();
        if (v < 0) fail(path, "expected non-negative integer");
        return static_cast<uint64_t>(v);
    }
    fail(path, "expected non-negative integer");
}

bool boolean(const json& j, const std::string& path) {
    if (!j.is_boolean()) fail(path, "expected boolean");
    return j.get<bool>();
}

std::string str(const json& j, const std::string& path) {
    if (!j.is_string()) fail(path, "expected string");
    return j.get<std::string>();
}

std::vector<double> num_list(const json& j, const std::string& path) {
    if (!j.is_array()) fail(path, "expected array of numbers");
    std::vector<double> out;
    for (size_t i = 0; i < j.size(); ++i)
        out.push_back(num(j[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

StateVector state_vec(const json& j, const std::string& path) {
    std::vector<double> v = num_list(j, path);
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::map<std::string, double> num_map(const json& j, const std::string& path) {
    if (!j.is_object()) fail(path, "expected object");
    std::map<std::string, double> out;
    for (auto it = j.begin(); it != j.end(); ++it)
        out[it.key()] = num(it.value(), path + "." + it.key());
    return out;
}

Scheme parse_scheme(const std::string& s, const std::string& path) {
    if (s == "exponential_euler") return Scheme::exponential_euler;
    if (s == "euler_maruyama") return Scheme::euler_maruyama;
    fail(path, "unknown scheme '" + s + "'");
}

void parse_basis(const json& j, const std::string& path, RegressionBasis& basis) {
    if (!j.is_object()) fail(path, "expected object");
    check_keys(j, path, {"kind", "degree", "projection", "bandwidth", "centers"});
    if (const json* p = maybe(j, "kind")) {
        std::string k = str(*p, path + ".kind");
        if (k == "polynomial")
            basis.kind = RegressionBasis::Kind::polynomial;
        else if (k == "radial")
            basis.kind = RegressionBasis::Kind::radial;
        else
            fail(path + ".kind", "unknown basis kind '" + k + "'");
    }
    if (const json* p = maybe(j, "degree")) basis.degree = integer(*p, path + ".degree");
    if (const json* p = maybe(j, "projection")) {
        basis.projection.clear();
        if (!p->is_array()) fail(path + ".projection", "expected array of integers");
        for (size_t i = 0; i < p->size(); ++i)
            basis.projection.push_back(
                integer((*p)[i], path + ".projection[" + std::to_string(i) + "]"));
    }
    if (const json* p = maybe(j, "bandwidth")) basis.bandwidth = num(*p, path + ".bandwidth");
    if (const json* p = maybe(j, "centers")) {
        if (!p->is_array()) fail(path + ".centers", "expected array of arrays");
        std::vector<std::vector<double>> rows;
        for (size_t i = 0; i < p->size(); ++i)
            rows.push_back(num_list((*p)[i], path + ".centers[" + std::to_string(i) + "]"));
        if (!rows.empty()) {
            basis.centers.resize(static_cast<Eigen::Index>(rows.size()),
                                 static_cast<Eigen::Index>(rows[0].size()));
            for (size_t i = 0; i < rows.size(); ++i) {
                if (rows[i].size() != rows[0].size())
                    fail(path + ".centers", "ragged rows");
                for (size_t c = 0; c < rows[i].size(); ++c)
                    basis.centers(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
                        rows[i][c];
            }
        }
    }
}

double take(std::map<std::string, double>& params, const std::string& key, double dflt) {
    auto it = params.find(key);
    if (it == params.end()) return dflt;
    double v = it->second;
    params.erase(it);
    return v;
}

void reject_leftover(const std::map<std::string, double>& params, const std::string& path) {
    if (!params.empty()) fail(path + "." + params.begin()->first, "unknown key");
}

struct StateCost {
    std::function<double(const StateVector&)> fn;  // empty when kind = none
    double lip = 0.0;
    double bound = 0.0;
};

StateCost make_state_cost(const Scenario& scn, const GalerkinModel& model) {
    StateCost sc;
    if (scn.state_cost_kind == "none") return sc;
    if (scn.state_cost_kind != "avg_cos")
        fail("driver.state_cost.kind", "unknown kind '" + scn.state_cost_kind + "'");
    const double w = scn.state_cost_weight;
    if (scn.model_builder == "ou") {
        sc.fn = [w](const StateVector& x) { return w * std::cos(x[0]); };
        sc.lip = std::abs(w);
        sc.bound = std::abs(w);
        return sc;
    }
    const double len = scn.model_builder == "boundary_heat" ? kPi : 1.0;
    const int heat_modes = model.n_modes - 1;
    // 33 Simpson points: the field has few modes, and this cost sits inside
    // per-path per-step driver evaluations on both the solver and control
    // routes (same object, so the quadrature bias cancels in comparisons)
    auto avg = make_field_average(heat_modes, len, [](double v) { return std::cos(v); }, 33);
    sc.fn = [avg, w](const StateVector& x) { return w * avg(x); };
    // |l(x) - l(x')| <= |w| integral |field - field'| <= |w| sqrt(len) |x - x'|
    sc.lip = std::abs(w) * std::sqrt(len);
    sc.bound = std::abs(w) * len;
    return sc;
}

template <typename T>
T parse_value(const std::string& key, const std::string& text);

template <>
double parse_value<double>(const std::string& key, const std::string& text) {
    size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &pos);
    } catch (const std::exception&) {
        throw ConfigError("--set " + key + ": expected number, got '" + text + "'");
    }
    if (pos != text.size())
        throw ConfigError("--set " + key + ": expected number, got '" + text + "'");
    return v;
}

template <>
int parse_value<int>(const std::string& key, const std::string& text) {
    double v = parse_value<double>(key, text);
    if (std::abs(v - std::llround(v)) > 1e-9)
        throw ConfigError("--set " + key + ": expected integer, got '" + text + "'");
    return static_cast<int>(std::llround(v));
}

template <>
bool parse_value<bool>(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError("--set " + key + ": expected boolean, got '" + text + "'");
}

template <>
uint64_t parse_value<uint64_t>(const std::string& key, const std::string& text) {
    double v = parse_value<double>(key, text);
    if (v < 0 || std::abs(v - std::llround(v)) > 1e-9)
        throw ConfigError("--set " + key + ": expected non-negative integer, got '" + text + "'");
    return static_cast<uint64_t>(std::llround(v));
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(parse_value<double>(key, item));
    if (out.empty()) throw ConfigError("--set " + key + ": expected comma-separated numbers");
    return out;
}

}  // namespace

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open scenario file");
    json root;
    try {
        root = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    if (!root.is_object()) fail("$", "expected object");
    check_keys(root, "$",
               {"name", "model", "driver", "control", "solver", "hjb", "simulate", "outputs"});

    Scenario s;
    s.name = str(child(root, "name", "$"), "$.name");

    {
        const json& m = child(root, "model", "$");
        if (!m.is_object()) fail("$.model", "expected object");
        check_keys(m, "$.model", {"builder", "params"});
        s.model_builder = str(child(m, "builder", "$.model"), "$.model.builder");
        if (const json* p = maybe(m, "params")) s.model_params = num_map(*p, "$.model.params");
    }
    {
        const json& d = child(root, "driver", "$");
        if (!d.is_object()) fail("$.driver", "expected object");
        check_keys(d, "$.driver", {"kind", "params", "state_cost"});
        s.driver_kind = str(child(d, "kind", "$.driver"), "$.driver.kind");
        if (const json* p = maybe(d, "params")) s.driver_params = num_map(*p, "$.driver.params");
        if (const json* p = maybe(d, "state_cost")) {
            if (!p->is_object()) fail("$.driver.state_cost", "expected object");
            check_keys(*p, "$.driver.state_cost", {"kind", "weight"});
            s.state_cost_kind = str(child(*p, "kind", "$.driver.state_cost"),
                                    "$.driver.state_cost.kind");
            if (const json* w = maybe(*p, "weight"))
                s.state_cost_weight = num(*w, "$.driver.state_cost.weight");
        }
    }
    if (const json* c = maybe(root, "control")) {
        if (!c->is_object()) fail("$.control", "expected object");
        check_keys(*c, "$.control",
                   {"gamma_lo", "gamma_hi", "gamma_points", "constant_policies", "horizon",
                    "burn_in", "paths", "girsanov_T"});
        s.has_control = true;
        if (const json* p = maybe(*c, "gamma_lo")) s.gamma_lo = num(*p, "$.control.gamma_lo");
        if (const json* p = maybe(*c, "gamma_hi")) s.gamma_hi = num(*p, "$.control.gamma_hi");
        if (const json* p = maybe(*c, "gamma_points"))
            s.gamma_points = integer(*p, "$.control.gamma_points");
        if (const json* p = maybe(*c, "constant_policies"))
            s.constant_policies = num_list(*p, "$.control.constant_policies");
        if (const json* p = maybe(*c, "horizon")) s.control_horizon = num(*p, "$.control.horizon");
        if (const json* p = maybe(*c, "burn_in")) s.control_burn_in = num(*p, "$.control.burn_in");
        if (const json* p = maybe(*c, "paths")) s.control_paths = integer(*p, "$.control.paths");
        if (const json* p = maybe(*c, "girsanov_T")) s.girsanov_T = num(*p, "$.control.girsanov_T");
    }
    {
        const json& sv = child(root, "solver", "$");
        if (!sv.is_object()) fail("$.solver", "expected object");
        check_keys(sv, "$.solver",
                   {"dt", "n_paths", "seed", "scheme", "exact_diag_variance", "basis",
                    "alpha_schedule", "tail_tolerance", "horizon_cap", "ridge", "eval_points",
                    "x_ref", "lipschitz_pairs"});
        if (const json* p = maybe(sv, "dt")) s.dt = num(*p, "$.solver.dt");
        if (const json* p = maybe(sv, "n_paths")) s.n_paths = integer(*p, "$.solver.n_paths");
        if (const json* p = maybe(sv, "seed")) s.seed = unsigned64(*p, "$.solver.seed");
        if (const json* p = maybe(sv, "scheme"))
            s.scheme = parse_scheme(str(*p, "$.solver.scheme"), "$.solver.scheme");
        if (const json* p = maybe(sv, "exact_diag_variance"))
            s.exact_diag_variance = boolean(*p, "$.solver.exact_diag_variance");
        if (const json* p = maybe(sv, "basis")) parse_basis(*p, "$.solver.basis", s.basis);
        if (const json* p = maybe(sv, "alpha_schedule"))
            s.alpha_schedule = num_list(*p, "$.solver.alpha_schedule");
        if (const json* p = maybe(sv, "tail_tolerance"))
            s.tail_tolerance = num(*p, "$.solver.tail_tolerance");
        if (const json* p = maybe(sv, "horizon_cap"))
            s.horizon_cap = num(*p, "$.solver.horizon_cap");
        if (const json* p = maybe(sv, "ridge")) s.ridge = num(*p, "$.solver.ridge");
        s.x_ref = state_vec(child(sv, "x_ref", "$.solver"), "$.solver.x_ref");
        if (const json* p = maybe(sv, "eval_points")) {
            if (!p->is_array()) fail("$.solver.eval_points", "expected array of arrays");
            for (size_t i = 0; i < p->size(); ++i)
                s.eval_points.push_back(
                    state_vec((*p)[i], "$.solver.eval_points[" + std::to_string(i) + "]"));
        }
        if (const json* p = maybe(sv, "lipschitz_pairs")) {
            if (!p->is_array()) fail("$.solver.lipschitz_pairs", "expected array of [i,j]");
            for (size_t i = 0; i < p->size(); ++i) {
                std::string ip = "$.solver.lipschitz_pairs[" + std::to_string(i) + "]";
                if (!(*p)[i].is_array() || (*p)[i].size() != 2) fail(ip, "expected pair [i,j]");
                s.lipschitz_pairs.emplace_back(integer((*p)[i][0], ip + "[0]"),
                                               integer((*p)[i][1], ip + "[1]"));
            }
        }
    }
    if (const json* h = maybe(root, "hjb")) {
        if (!h->is_object()) fail("$.hjb", "expected object");
        check_keys(*h, "$.hjb",
                   {"t_T_pairs", "parabolic_T_list", "inner_paths", "gradient_h_list",
                    "bias_allowance"});
        if (const json* p = maybe(*h, "t_T_pairs")) {
            if (!p->is_array()) fail("$.hjb.t_T_pairs", "expected array of [t,T]");
            for (size_t i = 0; i < p->size(); ++i) {
                std::string ip = "$.hjb.t_T_pairs[" + std::to_string(i) + "]";
                if (!(*p)[i].is_array() || (*p)[i].size() != 2) fail(ip, "expected pair [t,T]");
                s.t_T_pairs.emplace_back(num((*p)[i][0], ip + "[0]"),
                                         num((*p)[i][1], ip + "[1]"));
            }
        }
        if (const json* p = maybe(*h, "parabolic_T_list"))
            s.parabolic_T_list = num_list(*p, "$.hjb.parabolic_T_list");
        if (const json* p = maybe(*h, "inner_paths"))
            s.hjb_inner_paths = integer(*p, "$.hjb.inner_paths");
        if (const json* p = maybe(*h, "gradient_h_list"))
            s.gradient_h_list = num_list(*p, "$.hjb.gradient_h_list");
        if (const json* p = maybe(*h, "bias_allowance"))
            s.hjb_bias_allowance = num(*p, "$.hjb.bias_allowance");
    }
    if (const json* sim = maybe(root, "simulate")) {
        if (!sim->is_object()) fail("$.simulate", "expected object");
        check_keys(*sim, "$.simulate", {"horizon", "paths", "dump_bundle"});
        if (const json* p = maybe(*sim, "horizon")) s.sim_horizon = num(*p, "$.simulate.horizon");
        if (const json* p = maybe(*sim, "paths")) s.sim_paths = integer(*p, "$.simulate.paths");
        if (const json* p = maybe(*sim, "dump_bundle"))
            s.sim_dump_bundle = boolean(*p, "$.simulate.dump_bundle");
    }
    if (const json* o = maybe(root, "outputs")) {
        if (!o->is_object()) fail("$.outputs", "expected object");
        check_keys(*o, "$.outputs", {"directory", "emit_csv", "emit_json"});
        if (const json* p = maybe(*o, "directory"))
            s.output_directory = str(*p, "$.outputs.directory");
        if (const json* p = maybe(*o, "emit_csv")) s.emit_csv = boolean(*p, "$.outputs.emit_csv");
        if (const json* p = maybe(*o, "emit_json"))
            s.emit_json = boolean(*p, "$.outputs.emit_json");
    }
    if (s.output_directory.empty()) s.output_directory = "out/" + s.name;

    if (!(s.dt > 0.0)) fail("$.solver.dt", "must be positive");
    if (s.n_paths < 2) fail("$.solver.n_paths", "needs at least 2 paths");
    if (s.alpha_schedule.empty()) fail("$.solver.alpha_schedule", "must be non-empty");
    for (double a : s.alpha_schedule)
        if (!(a > 0.0)) fail("$.solver.alpha_schedule", "alphas must be positive");
    if (!(s.tail_tolerance > 0.0)) fail("$.solver.tail_tolerance", "must be positive");
    if (!(s.horizon_cap > 0.0)) fail("$.solver.horizon_cap", "must be positive");
    if (s.has_control && !(s.gamma_hi > s.gamma_lo))
        fail("$.control", "needs gamma_hi > gamma_lo");
    if (s.has_control && s.gamma_points < 2) fail("$.control.gamma_points", "needs at least 2");
    return s;
}

void apply_override(Scenario& scn, const std::string& key, const std::string& value) {
    const std::string mp = "model.params.", dp = "driver.params.";
    if (key == "name") {
        scn.name = value;
    } else if (key == "model.builder") {
        scn.model_builder = value;
    } else if (key.starts_with(mp)) {
        scn.model_params[key.substr(mp.size())] = parse_value<double>(key, value);
    } else if (key == "driver.kind") {
        scn.driver_kind = value;
    } else if (key.starts_with(dp)) {
        scn.driver_params[key.substr(dp.size())] = parse_value<double>(key, value);
    } else if (key == "driver.state_cost.kind") {
        scn.state_cost_kind = value;
    } else if (key == "driver.state_cost.weight") {
        scn.state_cost_weight = parse_value<double>(key, value);
    } else if (key.starts_with("control.")) {
        if (!scn.has_control) throw ConfigError("--set " + key + ": scenario has no control block");
        if (key == "control.gamma_lo")
            scn.gamma_lo = parse_value<double>(key, value);
        else if (key == "control.gamma_hi")
            scn.gamma_hi = parse_value<double>(key, value);
        else if (key == "control.gamma_points")
            scn.gamma_points = parse_value<int>(key, value);
        else if (key == "control.constant_policies")
            scn.constant_policies = parse_list(key, value);
        else if (key == "control.horizon")
            scn.control_horizon = parse_value<double>(key, value);
        else if (key == "control.burn_in")
            scn.control_burn_in = parse_value<double>(key, value);
        else if (key == "control.paths")
            scn.control_paths = parse_value<int>(key, value);
        else if (key == "control.girsanov_T")
            scn.girsanov_T = parse_value<double>(key, value);
        else
            throw ConfigError("--set " + key + ": unknown key");
    } else if (key == "solver.dt") {
        scn.dt = parse_value<double>(key, value);
    } else if (key == "solver.n_paths") {
        scn.n_paths = parse_value<int>(key, value);
    } else if (key == "solver.seed") {
        scn.seed = parse_value<uint64_t>(key, value);
    } else if (key == "solver.scheme") {
        scn.scheme = parse_scheme(value, "--set " + key);
    } else if (key == "solver.exact_diag_variance") {
        scn.exact_diag_variance = parse_value<bool>(key, value);
    } else if (key == "solver.basis.kind") {
        if (value == "polynomial")
            scn.basis.kind = RegressionBasis::Kind::polynomial;
        else if (value == "radial")
            scn.basis.kind = RegressionBasis::Kind::radial;
        else
            throw ConfigError("--set " + key + ": unknown basis kind '" + value + "'");
    } else if (key == "solver.basis.degree") {
        scn.basis.degree = parse_value<int>(key, value);
    } else if (key == "solver.basis.bandwidth") {
        scn.basis.bandwidth = parse_value<double>(key, value);
    } else if (key == "solver.alpha_schedule") {
        scn.alpha_schedule = parse_list(key, value);
    } else if (key == "solver.tail_tolerance") {
        scn.tail_tolerance = parse_value<double>(key, value);
    } else if (key == "solver.horizon_cap") {
        scn.horizon_cap = parse_value<double>(key, value);
    } else if (key == "solver.ridge") {
        scn.ridge = parse_value<double>(key, value);
    } else if (key == "hjb.inner_paths") {
        scn.hjb_inner_paths = parse_value<int>(key, value);
    } else if (key == "hjb.bias_allowance") {
        scn.hjb_bias_allowance = parse_value<double>(key, value);
    } else if (key == "simulate.horizon") {
        scn.sim_horizon = parse_value<double>(key, value);
    } else if (key == "simulate.paths") {
        scn.sim_paths = parse_value<int>(key, value);
    } else if (key == "simulate.dump_bundle") {
        scn.sim_dump_bundle = parse_value<bool>(key, value);
    } else if (key == "outputs.directory") {
        scn.output_directory = value;
    } else if (key == "outputs.emit_csv") {
        scn.emit_csv = parse_value<bool>(key, value);
    } else if (key == "outputs.emit_json") {
        scn.emit_json = parse_value<bool>(key, value);
    } else {
        throw ConfigError("--set " + key + ": unknown key");
    }
}

GalerkinModel make_model(const Scenario& scn) {
    auto params = scn.model_params;
    if (scn.model_builder == "ou") {
        OuOptions o;
        o.a = take(params, "a", o.a);
        o.sigma = take(params, "sigma", o.sigma);
        reject_leftover(params, "model.params");
        if (!(o.a > 0.0) || !(o.sigma > 0.0))
            fail("model.params", "ou needs a > 0 and sigma > 0");
        return build_ou_model(o);
    }
    if (scn.model_builder == "boundary_heat") {
        BoundaryModelOptions o;
        o.heat_modes = static_cast<int>(take(params, "heat_modes", o.heat_modes));
        const double b_slope = take(params, "b_slope", 1.0);
        const double sigma_base = take(params, "sigma_base", 1.0);
        const double sigma_amp = take(params, "sigma_amp", 0.0);
        o.quad_points = static_cast<int>(take(params, "quad_points", o.quad_points));
        o.decay_exponent = take(params, "decay_exponent", o.decay_exponent);
        reject_leftover(params, "model.params");
        o.b = [b_slope](double y) { return -b_slope * y; };
        o.lip_b = std::abs(b_slope);
        if (sigma_amp != 0.0)
            o.sigma = [sigma_base, sigma_amp](double y) {
                return sigma_base + sigma_amp * std::sin(y);
            };
        o.lip_sigma = std::abs(sigma_amp);
        o.bound_sigma = sigma_base + std::abs(sigma_amp);
        o.sigma_floor = sigma_base - std::abs(sigma_amp);
        if (!(o.sigma_floor > 0.0))
            fail("model.params.sigma_amp", "must stay below sigma_base in magnitude");
        return build_boundary_control_model(o);
    }
    if (scn.model_builder == "reaction_heat") {
        ReactionModelOptions o;
        o.heat_modes = static_cast<int>(take(params, "heat_modes", o.heat_modes));
        const double b_slope = take(params, "b_slope", 1.0);
        const double sigma_base = take(params, "sigma_base", 1.0);
        const double sigma_amp = take(params, "sigma_amp", 0.0);
        const double f_lin = take(params, "f_lin", 0.0);
        const double f_sin_amp = take(params, "f_sin_amp", 0.0);
        o.quad_points = static_cast<int>(take(params, "quad_points", o.quad_points));
        o.decay_exponent = take(params, "decay_exponent", o.decay_exponent);
        reject_leftover(params, "model.params");
        if (f_lin != 0.0 || f_sin_amp != 0.0) {
            o.f = [f_lin, f_sin_amp](double v) { return -f_lin * v + f_sin_amp * std::sin(v); };
            o.mu_f = f_lin - std::abs(f_sin_amp);
            o.lip_f = std::abs(f_lin) + std::abs(f_sin_amp);
        }
        o.b = [b_slope](double y) { return -b_slope * y; };
        o.mu_b = b_slope;
        o.lip_b = std::abs(b_slope);
        if (sigma_amp != 0.0)
            o.sigma = [sigma_base, sigma_amp](double y) {
                return sigma_base + sigma_amp * std::sin(y);
            };
        o.lip_sigma = std::abs(sigma_amp);
        o.bound_sigma = sigma_base + std::abs(sigma_amp);
        o.sigma_floor = sigma_base - std::abs(sigma_amp);
        if (!(o.sigma_floor > 0.0))
            fail("model.params.sigma_amp", "must stay below sigma_base in magnitude");
        return build_reaction_model(o);
    }
    fail("model.builder", "unknown builder '" + scn.model_builder + "'");
}

DriverSpec make_driver(const Scenario& scn, const GalerkinModel& model) {
    auto params = scn.driver_params;
    StateCost sc = make_state_cost(scn, model);
    DriverSpec d;
    d.d1 = model.d1;
    d.d2 = model.d2;
    d.concave_in_zu = true;

    if (scn.driver_kind == "constant") {
        const double c = take(params, "c", 1.0);
        reject_leftover(params, "driver.params");
        d.name = "constant";
        auto fn = sc.fn;
        d.psi = [c, fn](const StateVector& x, const Eigen::VectorXd&, const Eigen::VectorXd&) {
            return c + (fn ? fn(x) : 0.0);
        };
        d.lip_x = sc.lip;
        d.bound_at_zero = std::abs(c) + sc.bound;
        return d;
    }
    if (scn.driver_kind == "cos_x1") {
        const double w = take(params, "weight", 1.0);
        reject_leftover(params, "driver.params");
        d.name = "cos_x1";
        auto fn = sc.fn;
        d.psi = [w, fn](const StateVector& x, const Eigen::VectorXd&, const Eigen::VectorXd&) {
            return w * std::cos(x[0]) + (fn ? fn(x) : 0.0);
        };
        d.lip_x = std::abs(w) + sc.lip;
        d.bound_at_zero = std::abs(w) + sc.bound;
        return d;
    }
    if (scn.driver_kind == "linear_z") {
        const double c = take(params, "c", 0.0);
        const double a_z = take(params, "a_z", 0.5);
        const double a_u = take(params, "a_u", 0.0);
        const double cw = take(params, "cos_weight", 0.0);
        reject_leftover(params, "driver.params");
        if (a_z != 0.0 && model.d1 < 1) fail("driver.params.a_z", "model has no W1 channel");
        if (a_u != 0.0 && model.d2 < 1) fail("driver.params.a_u", "model has no W2 channel");
        d.name = "linear_z";
        auto fn = sc.fn;
        d.psi = [c, a_z, a_u, cw, fn](const StateVector& x, const Eigen::VectorXd& z,
                                      const Eigen::VectorXd& u) {
            double v = c + (fn ? fn(x) : 0.0);
            if (cw != 0.0) v += cw * std::cos(x[0]);
            if (a_z != 0.0) v += a_z * z[0];
            if (a_u != 0.0) v += a_u * u[0];
            return v;
        };
        d.lip_x = std::abs(cw) + sc.lip;
        d.lip_z = std::abs(a_z);
        d.lip_u = std::abs(a_u);
        d.bound_at_zero = std::abs(c) + std::abs(cw) + sc.bound;
        return d;
    }
    if (scn.driver_kind == "example2") {
        reject_leftover(params, "driver.params");
        if (model.d1 != 1) fail("driver.kind", "example2 needs a scalar W1 channel");
        d.name = "example2";
        auto fn = sc.fn;
        d.psi = [fn](const StateVector& x, const Eigen::VectorXd& z, const Eigen::VectorXd&) {
            return example2_closed_form(z[0]) + (fn ? fn(x) : 0.0);
        };
        d.lip_x = sc.lip;
        d.lip_z = 1.0;
        d.bound_at_zero = sc.bound;
        return d;
    }
    if (scn.driver_kind == "control") {
        reject_leftover(params, "driver.params");
        if (!scn.has_control) fail("driver.kind", "'control' needs a control block");
        auto cs = make_control_structure(scn, model);
        return driver_from_control(*cs, sc.lip);
    }
    fail("driver.kind", "unknown kind '" + scn.driver_kind + "'");
}

std::optional<ControlStructure> make_control_structure(const Scenario& scn,
                                                       const GalerkinModel& model) {
    if (!scn.has_control) return std::nullopt;
    ControlStructure cs;
    cs.d1 = model.d1;
    cs.d2 = model.d2;
    cs.gamma_grid = Eigen::VectorXd::LinSpaced(scn.gamma_points, scn.gamma_lo, scn.gamma_hi);
    const int d1 = model.d1, d2 = model.d2;
    cs.r1 = [d1](double gamma) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(d1);
        if (d1 > 0) v[0] = gamma;
        return v;
    };
    cs.r2 = [d2](double) { return Eigen::VectorXd::Zero(d2); };

    StateCost sc = make_state_cost(scn, model);
    if (sc.fn) {
        // argmin scans call this with a fixed x across the whole gamma grid;
        // memoizing the state term keeps the field quadrature out of the loop
        struct Memo {
            StateVector x;
            double val = 0.0;
            bool valid = false;
        };
        auto memo = std::make_shared<Memo>();
        auto fn = sc.fn;
        cs.running_cost = [fn, memo](const StateVector& x, double gamma) {
            if (!memo->valid || memo->x.size() != x.size() || memo->x != x) {
                memo->x = x;
                memo->val = fn(x);
                memo->valid = true;
            }
            return memo->val + gamma * gamma;
        };
    } else {
        cs.running_cost = [](const StateVector&, double gamma) { return gamma * gamma; };
    }
    const double gmax = std::max(std::abs(scn.gamma_lo), std::abs(scn.gamma_hi));
    cs.bound_c = sc.bound + gmax * gmax;
    return cs;
}

BsdeConfig make_bsde_config(const Scenario& scn) {
    BsdeConfig cfg;
    cfg.dt = scn.dt;
    cfg.n_paths = scn.n_paths;
    cfg.seed = scn.seed;
    cfg.scheme = scn.scheme;
    cfg.exact_diag_variance = scn.exact_diag_variance;
    cfg.start_points = {scn.x_ref};
    cfg.ridge = scn.ridge;
    return cfg;
}

DiscountedConfig make_discounted_config(const Scenario& scn) {
    DiscountedConfig cfg;
    cfg.solver = make_bsde_config(scn);
    cfg.tail_tolerance = scn.tail_tolerance;
    cfg.horizon_cap = scn.horizon_cap;
    return cfg;
}

VanishingDiscountConfig make_vd_config(const Scenario& scn) {
    VanishingDiscountConfig cfg;
    cfg.discounted = make_discounted_config(scn);
    cfg.basis = scn.basis;
    return cfg;
}

}  // namespace ebsde
