#pragma once

#include "cvpm/controller.hpp"
#include "cvpm/sampling.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace cvpm {

enum class Method { Qp, MonteCarlo };

enum class EventKind { UnmodeledDisturbance, UpdateDisturbanceSet, UpdateStateConstraints };

// Timed simulator event; exactly one payload per kind.
struct Event {
    int t = 0;
    EventKind kind = EventKind::UnmodeledDisturbance;
    Vector w_extra;                      // added to the sampled disturbance for one step
    std::optional<Polytope> W_new;       // UpdateDisturbanceSet
    std::optional<Matrix> Sigma_w_new;   // UpdateDisturbanceSet
    std::optional<Polytope> X_P_new;     // UpdateStateConstraints
};

struct Scenario {
    LinearSystem system;
    MpcConfig config;
    Polytope X_P;
    Polytope U_set;
    Vector x0;
    int steps = 0;
    std::uint64_t seed = 0;
    Method method = Method::Qp;
    int mc_samples = 10000;
    int mc_max_evaluations = 300;
    std::vector<Event> events;
};

struct StepRecord {
    int t = 0;
    Vector x;
    Vector u;
    StepCase step_case = StepCase::Safe;
    double p_violation = 0.0;
    double lyapunov = 0.0;
    double objective = 0.0;
    int active_set_size = 0;
    bool recompute = false;  // a set-update event fired at this step
};

struct SetSnapshot {
    Polytope set{Matrix::Identity(1, 1), Vector::Ones(1)};
    std::vector<Vector> vertex_list;  // empty when dim > 3
};

struct SimulationTrace {
    std::vector<StepRecord> steps;
    SetSnapshot X_P, X_f, X_C1;
    AssumptionReport report;
};

// The DC-DC converter regulation experiment; the initial state
// and the unmodeled-disturbance magnitude at t = 50 are artifact choices
// documented in the README.
Scenario builtin_dcdc_scenario();

// Parse and validate a scenario file. Parse failures, schema violations and
// assumption failures raise distinct exception types.
Scenario load_scenario(const std::string& path);
Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& s);

// Closed-loop run of x_{t+1} = A x_t + B u*_t + G w_t with truncated-Gaussian
// disturbances and timed events. Deterministic for a fixed seed.
SimulationTrace run_closed_loop(const Scenario& scenario);

enum class TraceFormat { Csv, Json };

void write_trace(const SimulationTrace& trace, const std::string& path,
                 TraceFormat format);
std::string trace_to_csv(const SimulationTrace& trace);
nlohmann::json trace_to_json(const SimulationTrace& trace);

// {"F": row-major, "g": [...], "dim": n} plus an ordered vertex list for
// plotting when available.
nlohmann::json polytope_to_json(const Polytope& P);
Polytope polytope_from_json(const nlohmann::json& j);

// Named polygons (X_P, X_f, X_C1) with ordered vertices.
nlohmann::json set_geometry_json(const CvpmProblem& problem);

}  // namespace cvpm
