// Scenario simulator for the constraint-violation-probability-minimizing
// controller. `run` executes a closed loop and writes the trace; `validate`
// prints the assumption certificate for a scenario without running it.

#include "cvpm/errors.hpp"
#include "cvpm/simulation.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>

namespace {

cvpm::Scenario resolve_scenario(const std::string& config, const std::string& builtin) {
    if (!config.empty()) return cvpm::load_scenario(config);
    if (builtin == "dcdc") return cvpm::builtin_dcdc_scenario();
    throw cvpm::ParseError("unknown builtin scenario: " + builtin);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CVPM-MPC scenario simulator"};
    app.require_subcommand(1);

    std::string config, builtin, out_path, format = "csv", export_sets, method;
    int steps = -1, mc_samples = -1;
    long long seed = -1;

    CLI::App* run = app.add_subcommand("run", "simulate a closed loop");
    auto* run_cfg = run->add_option("--config", config, "scenario file (JSON)");
    auto* run_builtin =
        run->add_option("--builtin", builtin, "builtin scenario name (dcdc)");
    run_cfg->excludes(run_builtin);
    run->add_option("--steps", steps, "override simulation length");
    run->add_option("--seed", seed, "override random seed");
    run->add_option("--method", method, "probability minimization method")
        ->check(CLI::IsMember({"qp", "montecarlo"}));
    run->add_option("--mc-samples", mc_samples, "Monte-Carlo sample count");
    run->add_option("--out", out_path, "trace output path");
    run->add_option("--format", format, "trace format")
        ->check(CLI::IsMember({"csv", "json"}));
    run->add_option("--export-sets", export_sets,
                    "write X_P/X_f/X_C1 geometry to this path");

    CLI::App* validate = app.add_subcommand("validate", "assumption report only");
    auto* val_cfg = validate->add_option("--config", config, "scenario file (JSON)");
    auto* val_builtin =
        validate->add_option("--builtin", builtin, "builtin scenario name (dcdc)");
    val_cfg->excludes(val_builtin);

    CLI11_PARSE(app, argc, argv);

    try {
        if (config.empty() && builtin.empty())
            throw cvpm::ParseError("one of --config or --builtin is required");
        cvpm::Scenario scenario = resolve_scenario(config, builtin);

        if (app.got_subcommand(validate)) {
            cvpm::AssumptionReport report = cvpm::validate_assumptions(
                scenario.system, scenario.config, scenario.X_P, scenario.U_set);
            std::cout << report.summary();
            if (!report.all_passed()) return 2;
            std::cout << "all assumptions hold\n";
            return 0;
        }

        if (steps > 0) scenario.steps = steps;
        if (seed >= 0) scenario.seed = static_cast<std::uint64_t>(seed);
        if (mc_samples > 0) scenario.mc_samples = mc_samples;
        if (method == "qp") scenario.method = cvpm::Method::Qp;
        if (method == "montecarlo") scenario.method = cvpm::Method::MonteCarlo;

        cvpm::SimulationTrace trace = cvpm::run_closed_loop(scenario);

        if (!export_sets.empty()) {
            std::ofstream out(export_sets, std::ios::binary);
            if (!out) throw cvpm::Error("cannot open " + export_sets);
            nlohmann::json geo = {
                {"X_P", cvpm::polytope_to_json(trace.X_P.set)},
                {"X_f", cvpm::polytope_to_json(trace.X_f.set)},
                {"X_C1", cvpm::polytope_to_json(trace.X_C1.set)}};
            out << geo.dump(2) << "\n";
        }

        if (!out_path.empty()) {
            cvpm::write_trace(trace, out_path,
                              format == "csv" ? cvpm::TraceFormat::Csv
                                              : cvpm::TraceFormat::Json);
        } else {
            std::cout << cvpm::trace_to_csv(trace);
        }

        int n_safe = 0;
        for (const auto& r : trace.steps)
            if (r.step_case == cvpm::StepCase::Safe) ++n_safe;
        std::cerr << "steps: " << trace.steps.size() << ", safe: " << n_safe
                  << ", probabilistic: " << trace.steps.size() - n_safe << "\n";
        for (const auto& w : trace.report.warnings) std::cerr << "warning: " << w << "\n";
        return 0;
    } catch (const cvpm::AssumptionError& e) {
        std::cerr << "assumption failure: " << e.what() << "\n";
        return 2;
    } catch (const cvpm::SolverFailureError& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return 3;
    } catch (const cvpm::InternalConsistencyError& e) {
        std::cerr << "internal consistency error: " << e.what() << "\n";
        return 3;
    } catch (const cvpm::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
