#include "cvpm/simulation.hpp"

#include "cvpm/errors.hpp"
#include "cvpm/linalg.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace cvpm {

using nlohmann::json;

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json matrix_to_json(const Matrix& M) {
    json rows = json::array();
    for (int i = 0; i < M.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
        rows.push_back(row);
    }
    return rows;
}

json vector_to_json(const Vector& v) {
    json arr = json::array();
    for (int i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

Matrix matrix_from_json(const json& j, const char* field) {
    if (!j.is_array() || j.empty() || !j[0].is_array())
        throw SchemaError(std::string("expected a matrix (array of rows) for ") + field);
    const int rows = static_cast<int>(j.size());
    const int cols = static_cast<int>(j[0].size());
    Matrix M(rows, cols);
    for (int i = 0; i < rows; ++i) {
        if (static_cast<int>(j[i].size()) != cols)
            throw SchemaError(std::string("ragged matrix for ") + field);
        for (int c = 0; c < cols; ++c) {
            if (!j[i][c].is_number())
                throw SchemaError(std::string("non-numeric entry in ") + field);
            M(i, c) = j[i][c].get<double>();
        }
    }
    return M;
}

Vector vector_from_json(const json& j, const char* field) {
    if (!j.is_array())
        throw SchemaError(std::string("expected a vector for ") + field);
    Vector v(static_cast<int>(j.size()));
    for (size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number())
            throw SchemaError(std::string("non-numeric entry in ") + field);
        v(static_cast<int>(i)) = j[i].get<double>();
    }
    return v;
}

const json& require(const json& j, const char* field) {
    auto it = j.find(field);
    if (it == j.end())
        throw SchemaError(std::string("missing field: ") + field);
    return *it;
}

// A set is either {"box": {"lower", "upper"}} or an H-rep {"F", "g"}.
Polytope set_from_json(const json& j, const char* field) {
    if (j.contains("box")) {
        const json& b = j["box"];
        return Polytope::from_box(vector_from_json(require(b, "lower"), field),
                                  vector_from_json(require(b, "upper"), field));
    }
    if (j.contains("F") && j.contains("g"))
        return Polytope(matrix_from_json(j["F"], field), vector_from_json(j["g"], field));
    throw SchemaError(std::string(field) + ": expected a box or an {F, g} halfspace form");
}

}  // namespace

json polytope_to_json(const Polytope& P) {
    json j;
    j["F"] = matrix_to_json(P.F());
    j["g"] = vector_to_json(P.g());
    j["dim"] = P.dim();
    if (P.dim() <= 3) {
        try {
            json verts = json::array();
            for (const auto& v : vertices(P)) verts.push_back(vector_to_json(v));
            j["vertices"] = verts;
        } catch (const Error&) {
            // unbounded or empty: omit the vertex list
        }
    }
    return j;
}

Polytope polytope_from_json(const json& j) {
    Polytope P(matrix_from_json(require(j, "F"), "F"),
               vector_from_json(require(j, "g"), "g"));
    if (j.contains("dim") && j["dim"].get<int>() != P.dim())
        throw SchemaError("polytope dim field disagrees with F");
    return P;
}

Scenario builtin_dcdc_scenario() {
    Scenario s{
        LinearSystem{
            (Matrix(2, 2) << 0.99, -0.02, 0.21, 0.92).finished(),
            (Matrix(2, 1) << 0.30, 0.06).finished(),
            (Matrix(2, 2) << 0.02, 0.00, 0.01, 0.19).finished(),
            (Matrix(2, 2) << 0.2, 0.0, 0.0, 0.2).finished(),
            Polytope::from_box((Vector(2) << -0.2, -0.2).finished(),
                               (Vector(2) << 0.2, 0.2).finished())},
        MpcConfig{},
        Polytope::from_box((Vector(2) << 0.0, 2.8).finished(),
                           (Vector(2) << 2.0, 3.8).finished()),
        Polytope::from_box(Vector::Zero(1), Vector::Ones(1)),
        (Vector(2) << 2.4, 2.2).finished(),
        120,
        1,
        Method::Qp,
        10000,
        300,
        {}};
    s.config.N = 10;
    s.config.Q = (Matrix(2, 2) << 1.0, 0.0, 0.0, 5.0).finished();
    s.config.R = Matrix::Ones(1, 1);
    s.config.x_ref = (Vector(2) << 1.06, 3.30).finished();
    s.config.u_ref = Vector::Constant(1, 0.28);
    s.config.dt = 0.1;

    Event ev;
    ev.t = 50;
    ev.kind = EventKind::UnmodeledDisturbance;
    ev.w_extra = (Vector(2) << 0.0, -4.0).finished();
    s.events.push_back(ev);
    return s;
}

Scenario scenario_from_json(const json& j) {
    Scenario s = builtin_dcdc_scenario();
    s.events.clear();

    const json& sys = require(j, "system");
    s.system.A = matrix_from_json(require(sys, "A"), "A");
    s.system.B = matrix_from_json(require(sys, "B"), "B");
    s.system.G = matrix_from_json(require(sys, "G"), "G");
    s.system.Sigma_w = matrix_from_json(require(sys, "Sigma_w"), "Sigma_w");
    s.system.W = set_from_json(require(sys, "W"), "W");

    const json& cfg = require(j, "config");
    s.config.N = require(cfg, "N").get<int>();
    s.config.Q = matrix_from_json(require(cfg, "Q"), "Q");
    s.config.R = matrix_from_json(require(cfg, "R"), "R");
    s.config.x_ref = vector_from_json(require(cfg, "x_ref"), "x_ref");
    s.config.u_ref = vector_from_json(require(cfg, "u_ref"), "u_ref");
    s.config.dt = cfg.value("dt", 0.0);

    s.X_P = set_from_json(require(j, "X_P"), "X_P");
    s.U_set = set_from_json(require(j, "U"), "U");
    s.x0 = vector_from_json(require(j, "x0"), "x0");
    s.steps = require(j, "steps").get<int>();
    s.seed = require(j, "seed").get<std::uint64_t>();
    const std::string method = j.value("method", "qp");
    if (method == "qp") s.method = Method::Qp;
    else if (method == "montecarlo") s.method = Method::MonteCarlo;
    else throw SchemaError("method must be 'qp' or 'montecarlo'");
    s.mc_samples = j.value("mc_samples", 10000);
    s.mc_max_evaluations = j.value("mc_max_evaluations", 300);

    if (j.contains("events")) {
        for (const auto& je : j["events"]) {
            Event ev;
            ev.t = require(je, "t").get<int>();
            const std::string kind = require(je, "type").get<std::string>();
            if (kind == "unmodeled_disturbance") {
                ev.kind = EventKind::UnmodeledDisturbance;
                ev.w_extra = vector_from_json(require(je, "w_extra"), "w_extra");
            } else if (kind == "update_disturbance_set") {
                ev.kind = EventKind::UpdateDisturbanceSet;
                ev.W_new = set_from_json(require(je, "W"), "event W");
                ev.Sigma_w_new = matrix_from_json(require(je, "Sigma_w"), "event Sigma_w");
            } else if (kind == "update_state_constraints") {
                ev.kind = EventKind::UpdateStateConstraints;
                ev.X_P_new = set_from_json(require(je, "X_P"), "event X_P");
            } else {
                throw SchemaError("unknown event type: " + kind);
            }
            s.events.push_back(ev);
        }
    }

    // Schema-level sanity.
    const int nx = static_cast<int>(s.system.A.rows());
    if (s.system.A.cols() != nx) throw SchemaError("A must be square");
    if (s.x0.size() != nx) throw SchemaError("x0 dimension mismatch");
    if (s.steps < 1) throw SchemaError("steps must be >= 1");
    if (!s.system.W.contains(Vector::Zero(s.system.W.dim()), 0.0))
        throw SchemaError("W must contain the origin");
    for (const auto& ev : s.events)
        if (ev.t < 0 || ev.t >= s.steps)
            throw SchemaError("event time outside [0, steps)");

    // Quick assumption screening; the full certificate runs at build time.
    if (spectral_radius(s.system.A) >= 1.0)
        throw AssumptionError(
            "scenario violates Assumption 4: system matrix is not stable");
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open scenario file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("scenario parse error: ") + e.what());
    }
    return scenario_from_json(j);
}

json scenario_to_json(const Scenario& s) {
    json j;
    j["system"] = {{"A", matrix_to_json(s.system.A)},
                   {"B", matrix_to_json(s.system.B)},
                   {"G", matrix_to_json(s.system.G)},
                   {"Sigma_w", matrix_to_json(s.system.Sigma_w)},
                   {"W", {{"F", matrix_to_json(s.system.W.F())},
                          {"g", vector_to_json(s.system.W.g())}}}};
    j["config"] = {{"N", s.config.N},
                   {"Q", matrix_to_json(s.config.Q)},
                   {"R", matrix_to_json(s.config.R)},
                   {"x_ref", vector_to_json(s.config.x_ref)},
                   {"u_ref", vector_to_json(s.config.u_ref)},
                   {"dt", s.config.dt}};
    j["X_P"] = {{"F", matrix_to_json(s.X_P.F())}, {"g", vector_to_json(s.X_P.g())}};
    j["U"] = {{"F", matrix_to_json(s.U_set.F())}, {"g", vector_to_json(s.U_set.g())}};
    j["x0"] = vector_to_json(s.x0);
    j["steps"] = s.steps;
    j["seed"] = s.seed;
    j["method"] = s.method == Method::Qp ? "qp" : "montecarlo";
    j["mc_samples"] = s.mc_samples;
    j["mc_max_evaluations"] = s.mc_max_evaluations;
    json evs = json::array();
    for (const auto& ev : s.events) {
        json je;
        je["t"] = ev.t;
        switch (ev.kind) {
            case EventKind::UnmodeledDisturbance:
                je["type"] = "unmodeled_disturbance";
                je["w_extra"] = vector_to_json(ev.w_extra);
                break;
            case EventKind::UpdateDisturbanceSet:
                je["type"] = "update_disturbance_set";
                je["W"] = {{"F", matrix_to_json(ev.W_new->F())},
                           {"g", vector_to_json(ev.W_new->g())}};
                je["Sigma_w"] = matrix_to_json(*ev.Sigma_w_new);
                break;
            case EventKind::UpdateStateConstraints:
                je["type"] = "update_state_constraints";
                je["X_P"] = {{"F", matrix_to_json(ev.X_P_new->F())},
                             {"g", vector_to_json(ev.X_P_new->g())}};
                break;
        }
        evs.push_back(je);
    }
    j["events"] = evs;
    return j;
}

namespace {

SetSnapshot snapshot(const Polytope& P) {
    SetSnapshot snap{P, {}};
    if (P.dim() <= 3) {
        try {
            snap.vertex_list = vertices(P);
        } catch (const Error&) {
        }
    }
    return snap;
}

constexpr std::uint64_t kPlantKey = 1000000;
constexpr std::uint64_t kMcKey = 2000000;

}  // namespace

SimulationTrace run_closed_loop(const Scenario& scenario) {
    auto problem = std::make_shared<const CvpmProblem>(
        CvpmProblem::build(scenario.system, scenario.config, scenario.X_P,
                           scenario.U_set));
    CvpmController controller(problem);

    std::map<int, std::vector<const Event*>> by_time;
    for (const auto& ev : scenario.events) by_time[ev.t].push_back(&ev);

    RngStream base(scenario.seed);
    Vector x = scenario.x0;
    SimulationTrace trace;
    trace.report = problem->report();

    for (int t = 0; t < scenario.steps; ++t) {
        StepRecord rec;
        rec.t = t;
        rec.x = x;

        StepOutcome outcome;
        try {
            const StepCase c = detect_case(*problem, x);
            if (c == StepCase::Safe || scenario.method == Method::Qp) {
                outcome = controller.step(x);
                rec.lyapunov = outcome.objective;
            } else {
                // Sampling-based probabilistic case; the Lyapunov diagnostic
                // stays the optimal value of the quadratic program.
                StepOutcome incumbent = solve_case2(*problem, x);
                rec.lyapunov = incumbent.objective;
                outcome = solve_case2_sampling(*problem, x, scenario.mc_samples,
                                               base.substream(kMcKey + t),
                                               scenario.mc_max_evaluations, &incumbent);
            }
        } catch (const Error& e) {
            throw SolverFailureError("simulation aborted at step " + std::to_string(t) +
                                     ": " + e.what());
        }
        rec.u = outcome.u_applied;
        rec.step_case = outcome.step_case;
        rec.p_violation = outcome.p_violation;
        rec.objective = outcome.objective;
        rec.active_set_size = outcome.diagnostics.active_set_size;

        // Set-update events fire after the controller acted on the pre-event
        // state; the rebuilt problem governs the next step.
        Vector w_extra = Vector::Zero(problem->n_x());
        auto it = by_time.find(t);
        if (it != by_time.end()) {
            for (const Event* ev : it->second) {
                switch (ev->kind) {
                    case EventKind::UnmodeledDisturbance:
                        w_extra += ev->w_extra;
                        break;
                    case EventKind::UpdateDisturbanceSet:
                        problem = std::make_shared<const CvpmProblem>(
                            problem->update_disturbance_set(*ev->W_new, *ev->Sigma_w_new));
                        controller.reset_problem(problem);
                        rec.recompute = true;
                        break;
                    case EventKind::UpdateStateConstraints:
                        problem = std::make_shared<const CvpmProblem>(
                            problem->update_state_constraints(*ev->X_P_new));
                        controller.reset_problem(problem);
                        rec.recompute = true;
                        break;
                }
            }
        }

        RngStream plant = base.substream(kPlantKey + t);
        Vector w = sample_truncated_gaussian(problem->system().Sigma_w,
                                             problem->system().W, plant);
        w += w_extra;
        x = problem->system().A * x + problem->system().B * outcome.u_applied +
            problem->system().G * w;
        trace.steps.push_back(std::move(rec));
    }

    trace.X_P = snapshot(problem->state_constraints());
    trace.X_f = snapshot(problem->terminal_set());
    trace.X_C1 = snapshot(problem->case1_set());
    return trace;
}

std::string trace_to_csv(const SimulationTrace& trace) {
    std::ostringstream os;
    const int nx = trace.steps.empty() ? 0 : static_cast<int>(trace.steps[0].x.size());
    const int nu = trace.steps.empty() ? 0 : static_cast<int>(trace.steps[0].u.size());
    os << "t";
    for (int i = 0; i < nx; ++i) os << ",x" << (i + 1);
    if (nu == 1) os << ",u";
    else
        for (int i = 0; i < nu; ++i) os << ",u" << (i + 1);
    os << ",case,p_violation,lyapunov,objective\n";
    for (const auto& r : trace.steps) {
        os << r.t;
        for (int i = 0; i < nx; ++i) os << "," << fmt17(r.x(i));
        for (int i = 0; i < nu; ++i) os << "," << fmt17(r.u(i));
        os << "," << to_string(r.step_case) << "," << fmt17(r.p_violation) << ","
           << fmt17(r.lyapunov) << "," << fmt17(r.objective) << "\n";
    }
    return os.str();
}

json trace_to_json(const SimulationTrace& trace) {
    json j;
    json steps = json::array();
    for (const auto& r : trace.steps) {
        json js;
        js["t"] = r.t;
        js["x"] = vector_to_json(r.x);
        js["u"] = vector_to_json(r.u);
        js["case"] = to_string(r.step_case);
        js["p_violation"] = r.p_violation;
        js["lyapunov"] = r.lyapunov;
        js["objective"] = r.objective;
        js["active_set_size"] = r.active_set_size;
        js["recompute"] = r.recompute;
        steps.push_back(js);
    }
    j["steps"] = steps;
    j["sets"] = {{"X_P", polytope_to_json(trace.X_P.set)},
                 {"X_f", polytope_to_json(trace.X_f.set)},
                 {"X_C1", polytope_to_json(trace.X_C1.set)}};
    return j;
}

void write_trace(const SimulationTrace& trace, const std::string& path,
                 TraceFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open output file: " + path);
    if (format == TraceFormat::Csv) {
        out << trace_to_csv(trace);
    } else {
        out << trace_to_json(trace).dump(2) << "\n";
    }
    if (!out) throw Error("write failed: " + path);
}

json set_geometry_json(const CvpmProblem& problem) {
    json j;
    j["X_P"] = polytope_to_json(problem.state_constraints());
    j["X_f"] = polytope_to_json(problem.terminal_set());
    j["X_C1"] = polytope_to_json(problem.case1_set());
    return j;
}

}  // namespace cvpm
