#pragma once

#include "etcsim/analysis.hpp"
#include "etcsim/config.hpp"
#include "etcsim/etc_system.hpp"
#include "etcsim/table_io.hpp"

#include <string>
#include <vector>

namespace etcsim {

enum class PlantKind { SingleIntegrator, Linear };
enum class ControllerKind { Proportional, Linear };
enum class HoldKind { Zoh, ModelBased, Coefficients };

struct HoldConfig {
    HoldKind kind = HoldKind::Zoh;
    double a_held = 0.0;
    double a_signal = 0.0;
    double b_held = 0.0;
    double b_signal = 1.0;
};

/// Everything needed to assemble and run one closed-loop scenario.
struct ScenarioConfig {
    std::string name = "scenario";

    PlantKind plant_kind = PlantKind::SingleIntegrator;
    Eigen::MatrixXd plant_a;  // Linear plant: x_p' = A x_p + B u_hat
    Eigen::MatrixXd plant_b;

    ControllerKind controller_kind = ControllerKind::Proportional;
    double k_p = 0.5;  // proportional regulator gain, u = -k_p x_c
    Eigen::MatrixXd ctrl_a, ctrl_b, ctrl_c, ctrl_d;  // Linear controller

    HoldConfig plant_hold;
    HoldConfig controller_hold;

    double beta_p = 1e-5;
    double beta_c = 1e-5;
    double tau_p = 1.0;
    double tau_pi = 60.0;
    double tau_c = 2.0;
    double tau_kappa = 120.0;

    Eigen::VectorXd x_p0, e_p0, x_c0, e_u0;
    double eta_p0 = 0.0;
    double eta_c0 = 0.0;

    SolverConfig solver;

    std::string out_dir;  // empty: nothing is written
    unsigned seed = 1;

    /// Throws ConfigError with a field diagnostic on inconsistent values
    /// (e.g. tau_min >= tau_max, dimension mismatches).
    void validate() const;
};

/// Derived statistics; every field is recomputable from the trajectory and
/// event tables alone.
struct RunSummary {
    std::string scenario;
    std::string terminal_status;
    int plant_events = 0;
    int controller_events = 0;
    int total_events = 0;
    double min_plant_gap = 0.0;
    double mean_plant_gap = 0.0;
    double min_controller_gap = 0.0;
    double mean_controller_gap = 0.0;
    double max_abs_e_p = 0.0;
    double max_abs_e_u = 0.0;
    int x_p_sign_changes = 0;
    double t_final = 0.0;
    int j_final = 0;

    [[nodiscard]] bool operator==(const RunSummary&) const = default;
};

struct RunOutput {
    ScenarioConfig config;
    HybridArc arc;
    Table trajectory;  // t, j, x_p, e_p, eta_p, x_c, e_u, eta_c, V_p, W_p, V_c, W_u, U
    Table events;      // t, j, sampler, cause
    DwellTimeReport dwell;
    StorageTrace storage;
    RunSummary summary;
};

/// The built-in single-integrator scenario: x_p' = u_hat, x_m = x_p,
/// x_p(0,0) = 10; tracking controller x_c' = xhat_p - x_c, x_c(0,0) = 10,
/// u = -k_p x_c; zero-order holds on both samplers; tau_max windows 60 s
/// (plant) and 120 s (controller); quadratic storages with beta = 1e-5.
[[nodiscard]] ScenarioConfig builtin_integrator_scenario(double k_p, double tau_p, double tau_c);

/// Named regimes of the built-in scenario:
///   fig2  -> (k_p, tau_p, tau_c) = (10, 1, 2)     divergent errors
///   fig34 -> (0.5, 1, 2)                          bounded, overshooting
///   fig56 -> (0.5, 0.2, 0.3)                      overshoot eliminated
[[nodiscard]] ScenarioConfig builtin_example(const std::string& name);

[[nodiscard]] EtcSystem build_etc_system(const ScenarioConfig& config);

/// Full-state storage/threshold evaluators for trajectory columns and
/// storage monitoring.
struct StorageEvaluators {
    StateFn v_p;
    StateFn w_p;
    StateFn v_c;
    StateFn w_u;
};
[[nodiscard]] StorageEvaluators make_storage_evaluators(const ScenarioConfig& config);

/// Simulates the scenario, assembles tables, dwell report, storage trace
/// and summary, and (when out_dir is set) writes trajectory.csv,
/// events.csv, summary.json, dwell.json, storage.csv and arc.json.
/// Engine terminations (Zeno guard, no-progress, step failure) land in
/// summary.terminal_status; only configuration errors throw.
[[nodiscard]] RunOutput run_scenario(const ScenarioConfig& config);

/// Recomputes the summary from tables alone (round-trip check support).
[[nodiscard]] RunSummary summarize_tables(const std::string& scenario, const Table& trajectory,
                                          const Table& events, const std::string& terminal_status);

[[nodiscard]] std::string to_json(const RunSummary& summary);

struct SweepResult {
    double value = 0.0;
    RunSummary summary;
    std::string dir;
};

/// Runs the scenario once per parameter value (parallel across runs; each
/// run writes to <out_dir>/<param>=<value>/). Results are ordered by
/// parameter value. Supported params: k_p, tau_p, tau_c, t_end, max_step.
[[nodiscard]] std::vector<SweepResult> sweep_scenario(const ScenarioConfig& base,
                                                      const std::string& param,
                                                      const std::vector<double>& values);

/// Builds a ScenarioConfig from a parsed config map; throws ConfigError
/// with line/field diagnostics.
[[nodiscard]] ScenarioConfig scenario_from_config(const ConfigMap& map);

/// Reads the [small_gain] section: chi/alpha/rho function specs, grid axes
/// and the scalar grid. Defaults target the built-in quadratic storages.
[[nodiscard]] std::pair<SmallGainProblem, GridSpec> small_gain_from_config(
    const ConfigMap& map, const ScenarioConfig& scenario);

/// Serializes the arc (with trigger windows) for `check-dwell`.
[[nodiscard]] std::string arc_to_json(const HybridArc& arc, const ScenarioConfig& config);

struct LoadedArc {
    HybridArc arc;
    DwellCheckConfig dwell;
};
[[nodiscard]] LoadedArc arc_from_json(const std::string& content);

}  // namespace etcsim
