#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ebsde/control.hpp"
#include "ebsde/outputs.hpp"
#include "ebsde/scenario.hpp"

namespace {

using namespace ebsde;

struct CommonArgs {
    std::string scenario_path;
    std::vector<std::string> overrides;
    std::string out_dir;
};

Scenario prepare(const CommonArgs& args) {
    Scenario scn = load_scenario(args.scenario_path);
    for (const auto& kv : args.overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set " + kv + ": expected key=value");
        apply_override(scn, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!args.out_dir.empty()) scn.output_directory = args.out_dir;
    return scn;
}

class StageTimer {
  public:
    explicit StageTimer(ManifestWriter& mw, const std::string& stage)
        : mw_(mw), stage_(stage), start_(std::chrono::steady_clock::now()) {}
    ~StageTimer() {
        auto dt = std::chrono::steady_clock::now() - start_;
        mw_.record_timing(stage_, std::chrono::duration<double>(dt).count());
    }

  private:
    ManifestWriter& mw_;
    std::string stage_;
    std::chrono::steady_clock::time_point start_;
};

std::string fmt(double v) { return format_double(v); }

double certificate_rate(const GalerkinModel& model) {
    if (!model.claim_joint_dissipativity || !model.dissipativity_inputs) return 1.0;
    auto cert = joint_dissipativity_certificate(model, {});
    return cert.holds && cert.mu_bar > 0.0 ? cert.mu_bar : 1.0;
}

SimConfig base_sim(const Scenario& scn) {
    SimConfig sim;
    sim.dt = scn.dt;
    sim.seed = scn.seed;
    sim.scheme = scn.scheme;
    sim.exact_diag_variance = scn.exact_diag_variance;
    return sim;
}

int run_validate(const CommonArgs& args) {
    Scenario scn = prepare(args);
    GalerkinModel model = make_model(scn);
    DriverSpec driver = make_driver(scn, model);
    ManifestWriter mw(scn.output_directory, scn.name, fnv1a64_file(args.scenario_path));

    std::string text;
    bool ok = true;
    {
        StageTimer t(mw, "validate");
        ValidationReport mr = validate_standing_assumptions(model, 2000, scn.seed);
        for (const auto& c : mr.checks) {
            bool pass = c.passed || !c.claimed;
            ok = ok && pass;
            text += (pass ? "PASS " : "FAIL ") + c.name + "  observed=" + fmt(c.observed) +
                    " bound=" + fmt(c.bound) + (c.claimed ? "" : "  (reported only)") +
                    (c.note.empty() ? "" : "  " + c.note) + "\n";
        }
        DriverCheckReport dr = validate_driver(driver, model.n_modes, 500, scn.seed + 1);
        for (const auto& c : dr.checks) {
            bool pass = c.passed || !c.claimed;
            ok = ok && pass;
            text += (pass ? "PASS " : "FAIL ") + c.name + "  observed=" + fmt(c.observed) +
                    " bound=" + fmt(c.bound) + (c.claimed ? "" : "  (reported only)") + "\n";
        }
        if (model.dissipativity_inputs) {
            auto cert = joint_dissipativity_certificate(model, {});
            ok = ok && (cert.holds || !model.claim_joint_dissipativity);
            text += std::string(cert.holds ? "PASS " : "FAIL ") +
                    "joint_dissipativity_certificate  mu_bar=" + fmt(cert.mu_bar) +
                    (cert.note.empty() ? "" : "  " + cert.note) + "\n";
        }
    }
    std::cout << text;
    write_text_file(scn.output_directory + "/validation.txt", text);
    mw.record_file("validation.txt");
    mw.finalize();
    return ok ? 0 : 2;
}

int run_simulate(const CommonArgs& args) {
    Scenario scn = prepare(args);
    GalerkinModel model = make_model(scn);
    ManifestWriter mw(scn.output_directory, scn.name, fnv1a64_file(args.scenario_path));

    SimConfig sim = base_sim(scn);
    sim.horizon = scn.sim_horizon;
    sim.n_paths = scn.sim_paths;
    {
        StageTimer t(mw, "moments");
        MomentReport mom = estimate_moment_bound(model, scn.x_ref, sim);
        CsvTable table;
        table.header = {"t", "mean_abs"};
        for (Eigen::Index i = 0; i < mom.times.size(); ++i)
            table.rows.push_back({fmt(mom.times[i]), fmt(mom.mean_abs[i])});
        write_csv(scn.output_directory + "/moments.csv", table);
        mw.record_file("moments.csv");
        std::cout << "sup_t E|X_t| ~ " << fmt(mom.running_max)
                  << (mom.growth_flag ? "  (tail still growing)" : "") << "\n";
    }
    {
        StageTimer t(mw, "contraction");
        StateVector x0p = scn.x_ref;
        x0p.array() += 0.5;
        ContractionOptions opt;
        opt.mu_guess = certificate_rate(model);
        DecayFit fit = estimate_contraction(model, scn.x_ref, x0p, sim, opt);
        CsvTable table;
        table.header = {"t", "mean_abs_diff"};
        for (Eigen::Index i = 0; i < fit.times.size(); ++i)
            table.rows.push_back({fmt(fit.times[i]), fmt(fit.mean_abs_diff[i])});
        write_csv(scn.output_directory + "/contraction.csv", table);
        mw.record_file("contraction.csv");
        std::cout << "coupling decay rate mu_hat = " << fmt(fit.mu_hat)
                  << "  (r^2 = " << fmt(fit.r_squared) << ")\n";
    }
    if (scn.sim_dump_bundle) {
        StageTimer t(mw, "bundle");
        SimConfig small = sim;
        small.n_paths = std::min(sim.n_paths, 64);
        PathBundle bundle = simulate(model, scn.x_ref, {}, small);
        dump_path_bundle(bundle, scn.output_directory + "/paths.bin");
        mw.record_file("paths.bin");
    }
    mw.finalize();
    return 0;
}

ErgodicSolution run_vanishing_discount(const Scenario& scn, const GalerkinModel& model,
                                       const DriverSpec& driver, ManifestWriter& mw) {
    StageTimer t(mw, "vanishing_discount");
    return vanishing_discount(model, driver, scn.alpha_schedule, scn.x_ref, scn.eval_points,
                              make_vd_config(scn));
}

void write_ergodic_outputs(const Scenario& scn, const ErgodicSolution& sol, ManifestWriter& mw) {
    CsvTable sweep;
    sweep.header = {"alpha", "v_alpha_ref", "alpha_v", "stderr"};
    for (const auto& r : sol.alpha_records)
        sweep.rows.push_back({fmt(r.alpha), fmt(r.v_ref), fmt(r.alpha_v), fmt(r.alpha_v_stderr)});
    write_csv(scn.output_directory + "/alpha_sweep.csv", sweep);
    mw.record_file("alpha_sweep.csv");

    if (!sol.vbar.empty()) {
        CsvTable vb;
        vb.header = {"point_index", "vbar", "stderr"};
        for (size_t i = 0; i < sol.vbar.size(); ++i)
            vb.rows.push_back(
                {std::to_string(i), fmt(sol.vbar[i].value), fmt(sol.vbar[i].std_error)});
        write_csv(scn.output_directory + "/vbar.csv", vb);
        mw.record_file("vbar.csv");
    }

    nlohmann::json summary;
    summary["lambda_hat"] = sol.lambda_hat;
    summary["stderr"] = sol.lambda_stderr;
    summary["schedule"] = nlohmann::json::array();
    for (const auto& r : sol.alpha_records) summary["schedule"].push_back(r.alpha);
    summary["seed"] = scn.seed;
    std::ofstream out(scn.output_directory + "/summary.json");
    out << summary.dump(2) << '\n';
    out.close();
    mw.record_file("summary.json");
}

int run_ergodic(const CommonArgs& args) {
    Scenario scn = prepare(args);
    GalerkinModel model = make_model(scn);
    DriverSpec driver = make_driver(scn, model);
    ManifestWriter mw(scn.output_directory, scn.name, fnv1a64_file(args.scenario_path));

    ErgodicSolution sol = run_vanishing_discount(scn, model, driver, mw);
    write_ergodic_outputs(scn, sol, mw);

    std::string report = "lambda_hat = " + fmt(sol.lambda_hat) + " +/- " +
                         fmt(sol.lambda_stderr) + "\n";
    for (const auto& r : sol.alpha_records)
        report += "  alpha=" + fmt(r.alpha) + "  T=" + fmt(r.truncation_T) +
                  "  alpha*v=" + fmt(r.alpha_v) + " +/- " + fmt(r.alpha_v_stderr) + "\n";

    if (!scn.lipschitz_pairs.empty()) {
        LipschitzReport lip = lipschitz_uniformity_diag(sol.alpha_records, scn.lipschitz_pairs);
        CsvTable table;
        table.header = {"alpha", "pair_i", "pair_j", "quotient", "stderr"};
        for (const auto& row : lip.rows)
            table.rows.push_back({fmt(row.alpha), std::to_string(row.pair_i),
                                  std::to_string(row.pair_j), fmt(row.quotient),
                                  fmt(row.quotient_stderr)});
        write_csv(scn.output_directory + "/lipschitz.csv", table);
        mw.record_file("lipschitz.csv");
        report += "difference-quotient spread = " + fmt(lip.max_relative_spread) +
                  (lip.growth_flag ? "  (grows as alpha shrinks)" : "") + "\n";
    }
    {
        StageTimer t(mw, "residual");
        SimConfig sim = base_sim(scn);
        sim.n_paths = std::min(scn.n_paths, 2000);
        sim.seed = scn.seed + 99991;
        ErgodicResidualStats rs = verify_ergodic_bsde_residual(model, driver, sol, 10.0, sim);
        report += "pathwise residual: mean_square=" + fmt(rs.mean_square) +
                  "  integrated_mean=" + fmt(rs.integrated_mean) + " +/- " +
                  fmt(rs.integrated_stderr) + "\n";
    }
    for (const auto& w : sol.warnings) report += "warning: " + w + "\n";
    write_text_file(scn.output_directory + "/ergodic_report.txt", report);
    mw.record_file("ergodic_report.txt");
    mw.finalize();
    std::cout << report;
    return 0;
}

int run_hjb(const CommonArgs& args) {
    Scenario scn = prepare(args);
    GalerkinModel model = make_model(scn);
    DriverSpec driver = make_driver(scn, model);
    ManifestWriter mw(scn.output_directory, scn.name, fnv1a64_file(args.scenario_path));

    ErgodicSolution sol = run_vanishing_discount(scn, model, driver, mw);
    write_ergodic_outputs(scn, sol, mw);
    std::string report;
    bool ok = true;

    if (!scn.t_T_pairs.empty()) {
        StageTimer t(mw, "mild_identity");
        HjbConfig hcfg;
        hcfg.inner_paths = scn.hjb_inner_paths;
        hcfg.bias_allowance = scn.hjb_bias_allowance;
        hcfg.sim = base_sim(scn);
        hcfg.sim.seed = scn.seed + 31337;
        HjbVerificationReport rep =
            verify_mild_hjb(model, driver, sol, scn.t_T_pairs, scn.eval_points, hcfg);
        CsvTable table;
        table.header = {"t", "T", "point_index", "residual", "stderr", "pass"};
        for (const auto& row : rep.rows)
            table.rows.push_back({fmt(row.t), fmt(row.T), std::to_string(row.point_index),
                                  fmt(row.residual), fmt(row.std_error),
                                  row.pass ? "1" : "0"});
        write_csv(scn.output_directory + "/hjb.csv", table);
        mw.record_file("hjb.csv");
        ok = ok && rep.all_pass;
        report += std::string("mild identity: ") + (rep.all_pass ? "all pass" : "FAIL") + " (" +
                  std::to_string(rep.rows.size()) + " cells)\n";
    }
    if (!scn.parabolic_T_list.empty()) {
        StageTimer t(mw, "parabolic");
        auto rows = parabolic_long_time_ratio(model, driver, scn.parabolic_T_list, scn.x_ref,
                                              scn.basis, make_bsde_config(scn));
        CsvTable table;
        table.header = {"T", "value", "stderr", "ratio"};
        for (const auto& row : rows) {
            table.rows.push_back({fmt(row.T), fmt(row.value), fmt(row.std_error),
                                  fmt(row.ratio)});
            report += "v^T/T at T=" + fmt(row.T) + ": " + fmt(row.ratio) + "\n";
        }
        write_csv(scn.output_directory + "/parabolic.csv", table);
        mw.record_file("parabolic.csv");
    }
    {
        StageTimer t(mw, "gradient");
        double mu = certificate_rate(model);
        GradientReport rep = gradient_consistency(model, driver, sol, scn.eval_points,
                                                  scn.gradient_h_list, mu);
        CsvTable table;
        table.header = {"point_index", "max_abs_diff"};
        for (const auto& row : rep.rows)
            table.rows.push_back({std::to_string(row.point_index), fmt(row.max_abs_diff)});
        write_csv(scn.output_directory + "/gradient.csv", table);
        mw.record_file("gradient.csv");
        report += std::string("differentiability predicate ") +
                  (rep.predicate_holds ? "holds" : "does not hold") + ": mu=" +
                  fmt(rep.predicate_lhs) + " vs 2(Lz^2 M^2 + Lu^2)=" + fmt(rep.predicate_rhs) +
                  "\n";
    }
    write_text_file(scn.output_directory + "/hjb_report.txt", report);
    mw.record_file("hjb_report.txt");
    mw.finalize();
    std::cout << report;
    return ok ? 0 : 3;
}

int run_control(const CommonArgs& args) {
    Scenario scn = prepare(args);
    GalerkinModel model = make_model(scn);
    DriverSpec driver = make_driver(scn, model);
    auto cs = make_control_structure(scn, model);
    if (!cs) throw ConfigError("control: scenario has no control block");
    ManifestWriter mw(scn.output_directory, scn.name, fnv1a64_file(args.scenario_path));

    ErgodicSolution sol = run_vanishing_discount(scn, model, driver, mw);
    write_ergodic_outputs(scn, sol, mw);

    std::vector<Policy> policies;
    for (double g : scn.constant_policies) policies.push_back(Policy::constant_policy(g));
    policies.push_back(synthesize_feedback(sol, *cs, model));

    CostConfig ccfg;
    ccfg.sim = base_sim(scn);
    ccfg.sim.horizon = scn.control_horizon;
    ccfg.sim.n_paths = scn.control_paths;
    ccfg.sim.seed = scn.seed + 424243;
    ccfg.burn_in = scn.control_burn_in;
    ccfg.mu_hint = certificate_rate(model);

    std::string report;
    {
        StageTimer t(mw, "policy_costs");
        GapReport rep = verify_bound_and_gap(model, *cs, sol, scn.x_ref, policies, ccfg);
        CsvTable table;
        table.header = {"policy_id", "j_hat", "stderr", "gap", "T", "burn_in"};
        for (const auto& row : rep.rows) {
            table.rows.push_back({row.policy_id, fmt(row.j_hat), fmt(row.std_error),
                                  fmt(row.gap), fmt(row.horizon_T), fmt(row.burn_in)});
            report += row.policy_id + ": J=" + fmt(row.j_hat) + " +/- " + fmt(row.std_error) +
                      "  gap=" + fmt(row.gap) + " (combined se " + fmt(row.combined_stderr) +
                      ")" + (row.lower_bound_ok ? "" : "  BELOW BOUND") +
                      (row.is_feedback && row.gap_ok ? "  (closes the gap)" : "") + "\n";
        }
        write_csv(scn.output_directory + "/gaps.csv", table);
        mw.record_file("gaps.csv");
        report += std::string("bound and gap: ") + (rep.all_pass ? "all pass" : "FAIL") + "\n";
    }
    {
        StageTimer t(mw, "girsanov");
        Policy probe = scn.constant_policies.empty()
                           ? policies.back()
                           : Policy::constant_policy(scn.constant_policies.front());
        GirsanovConfig gcfg;
        gcfg.sim = ccfg.sim;
        gcfg.sim.seed = scn.seed + 777001;
        GirsanovReport rep =
            girsanov_consistency_check(model, *cs, scn.x_ref, probe, scn.girsanov_T, gcfg);
        CsvTable table;
        table.header = {"direct",       "direct_stderr", "weighted", "weighted_stderr",
                        "ess_fraction", "density_cov",   "agree",    "inconclusive"};
        table.rows.push_back({fmt(rep.direct_mean), fmt(rep.direct_stderr),
                              fmt(rep.weighted_mean), fmt(rep.weighted_stderr),
                              fmt(rep.ess_fraction), fmt(rep.density_cov),
                              rep.agree_3sigma ? "1" : "0", rep.inconclusive ? "1" : "0"});
        write_csv(scn.output_directory + "/girsanov.csv", table);
        mw.record_file("girsanov.csv");
        report += "measure-change check: direct=" + fmt(rep.direct_mean) + " weighted=" +
                  fmt(rep.weighted_mean) +
                  (rep.inconclusive ? "  INCONCLUSIVE (low ESS)"
                                    : (rep.agree_3sigma ? "  agree" : "  DISAGREE")) +
                  "\n";
    }
    write_text_file(scn.output_directory + "/control_report.txt", report);
    mw.record_file("control_report.txt");
    mw.finalize();
    std::cout << report;
    return 0;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open");
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (first) {
            table.header = cells;
            first = false;
        } else {
            table.rows.push_back(cells);
        }
    }
    return table;
}

// pulls two named columns out of a previously written CSV as a plot series
std::vector<std::pair<double, double>> csv_series(const CsvTable& table, const std::string& xcol,
                                                  const std::string& ycol) {
    auto index_of = [&table](const std::string& name) {
        for (size_t i = 0; i < table.header.size(); ++i)
            if (table.header[i] == name) return static_cast<long>(i);
        return -1L;
    };
    long xi = index_of(xcol), yi = index_of(ycol);
    std::vector<std::pair<double, double>> series;
    if (xi < 0 || yi < 0) return series;
    for (const auto& row : table.rows)
        series.push_back({std::stod(row[xi]), std::stod(row[yi])});
    return series;
}

int run_report(const CommonArgs& args) {
    Scenario scn = prepare(args);
    const std::string dir = scn.output_directory;
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw ConfigError(dir + "/manifest.json: not found (run a pipeline command first)");
    nlohmann::json m = nlohmann::json::parse(in);

    // new manifest = prior inventory + the series files emitted below
    ManifestWriter mw(dir, scn.name, fnv1a64_file(args.scenario_path));
    std::set<std::string> recorded;
    auto record = [&mw, &recorded](const std::string& name) {
        if (recorded.insert(name).second) mw.record_file(name);
    };
    for (const auto& f : m["files"]) record(f.value("path", std::string()));
    for (const auto& t : m["timings"])
        mw.record_timing(t.value("stage", std::string("?")), t.value("seconds", 0.0));

    std::string text = "scenario: " + m.value("scenario", std::string("?")) + "\n";
    const std::vector<std::array<std::string, 4>> series_specs = {
        {"alpha_sweep.csv", "alpha", "alpha_v", "series_alpha_lambda.dat"},
        {"parabolic.csv", "T", "ratio", "series_parabolic_ratio.dat"},
        {"contraction.csv", "t", "mean_abs_diff", "series_contraction.dat"},
    };
    for (const auto& spec : series_specs) {
        if (!std::filesystem::exists(dir + "/" + spec[0])) continue;
        auto series = csv_series(read_csv(dir + "/" + spec[0]), spec[1], spec[2]);
        if (series.empty()) continue;
        write_series(dir + "/" + spec[3], series);
        record(spec[3]);
        text += spec[3] + ": " + std::to_string(series.size()) + " points from " + spec[0] + "\n";
    }

    std::ifstream sin(dir + "/summary.json");
    if (sin) {
        nlohmann::json s = nlohmann::json::parse(sin);
        text += "lambda_hat = " + fmt(s.value("lambda_hat", 0.0)) + " +/- " +
                fmt(s.value("stderr", 0.0)) + "\n";
    }
    for (const auto& t : m["timings"])
        text += "  " + t.value("stage", std::string("?")) + ": " +
                fmt(t.value("seconds", 0.0)) + " s\n";
    write_text_file(dir + "/report.txt", text);
    record("report.txt");
    mw.finalize();
    std::cout << text;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ergodic limits of discounted BSDEs: simulation, calibration, verification"};
    app.require_subcommand(1);

    CommonArgs args;
    const std::vector<std::pair<std::string, std::string>> subs = {
        {"validate", "check declared model/driver constants against samples"},
        {"simulate", "forward paths: moment bound and coupling decay"},
        {"ergodic", "vanishing-discount sweep: lambda and vbar"},
        {"hjb", "verify the mild identity, parabolic ratio and gradient consistency"},
        {"control", "policy costs, optimality gap and measure-change consistency"},
        {"report", "collate a run directory into summary text and plot series"},
    };
    for (const auto& [name, desc] : subs) {
        CLI::App* sub = app.add_subcommand(name, desc);
        sub->add_option("scenario", args.scenario_path, "scenario JSON path")->required();
        sub->add_option("--set", args.overrides, "override, dotted key=value");
        sub->add_option("--out", args.out_dir, "output directory override");
    }
    CLI11_PARSE(app, argc, argv);

    try {
        std::string name = app.get_subcommands().front()->get_name();
        if (name == "validate") return run_validate(args);
        if (name == "simulate") return run_simulate(args);
        if (name == "ergodic") return run_ergodic(args);
        if (name == "hjb") return run_hjb(args);
        if (name == "control") return run_control(args);
        if (name == "report") return run_report(args);
        return 2;
    } catch (const ebsde::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    }
}
