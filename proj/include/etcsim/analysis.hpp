#pragma once

#include "etcsim/etc_system.hpp"
#include "etcsim/hybrid_arc.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace etcsim {

// ---------------------------------------------------------------------------
// Dwell-time verification
// ---------------------------------------------------------------------------

struct DwellViolation {
    std::string check;      // "plant-gap" | "controller-gap" | "average-dwell" | "timer-range"
    HybridTime first;
    HybridTime second;
    double observed = 0.0;  // gap or timer value
    double required = 0.0;  // bound it failed against
};

struct DwellCheckConfig {
    double tau_p = 0.0;
    double tau_c = 0.0;
    double tolerance = 1e-4;
    // Timer-range check inputs; skipped when absent.
    std::optional<double> tau_pi;
    std::optional<double> tau_kappa;
    std::optional<StateLayout> layout;
};

/// Inter-jump statistics plus every check failure. tau_avg = min(tau_p,
/// tau_c) / 2 bounds jump counts linearly in elapsed flow time:
/// j - i <= (t - s) / tau_avg + 1 for hybrid times (s,i) preceding (t,j).
/// The reachability constants derived from tau_avg are reported as
/// metadata: gamma_slope = horizon_offset = 1 / (1 + 1/tau_avg).
struct DwellTimeReport {
    double tau_p = 0.0;
    double tau_c = 0.0;
    double tau_avg = 0.0;
    double tolerance = 0.0;
    int plant_jumps = 0;       // events attributed to the plant sampler
    int controller_jumps = 0;  // events attributed to the controller sampler
    int simultaneous_pairs = 0;
    double min_plant_gap = 0.0;       // infinity-free: 0 when fewer than 2 events
    double min_controller_gap = 0.0;
    double max_eta_p = 0.0;
    double max_eta_c = 0.0;
    double gamma_slope = 0.0;
    double horizon_offset = 0.0;
    std::vector<DwellViolation> violations;

    [[nodiscard]] bool clean() const { return violations.empty(); }
};

/// Checks, over a complete arc:
///  (a) consecutive plant-attributed jumps are >= tau_p - tolerance apart,
///  (b) consecutive controller-attributed jumps are >= tau_c - tolerance apart,
///  (c) the average dwell inequality over all hybrid-time pairs of the
///      domain (evaluated at the extremal segment boundaries, which is
///      equivalent), and
///  (d) recorded timers stay below tau_max + tolerance (when the layout
///      and maxima are supplied).
/// Violations are reported, never thrown.
[[nodiscard]] DwellTimeReport verify_dwell(const HybridArc& arc, const DwellCheckConfig& config);
[[nodiscard]] DwellTimeReport verify_dwell(const HybridArc& arc, double tau_p, double tau_c);

// ---------------------------------------------------------------------------
// Storage monitoring
// ---------------------------------------------------------------------------

using StateFn = std::function<double(const StateVec&)>;  // V over the full state
using ScalarFn = std::function<double(double)>;

struct StorageSample {
    HybridTime time;
    double v_p = 0.0;
    double v_c = 0.0;
    double u = 0.0;  // max(V_p, rho(V_c))
};

struct JumpMonotonicityFlag {
    HybridTime time;     // pre-jump hybrid time
    std::string which;   // "V_p" | "V_c" | "U"
    double before = 0.0;
    double after = 0.0;
};

/// U = max(V_p, rho(V_c)) along the arc plus per-jump monotonicity flags.
/// tail_nonconvergent records whether the peak of U over the second half
/// of the horizon reached or exceeded the peak over the first half.
struct StorageTrace {
    std::vector<StorageSample> samples;
    std::vector<JumpMonotonicityFlag> flags;
    bool tail_nonconvergent = false;

    [[nodiscard]] bool clean() const { return flags.empty(); }
};

/// Evaluates V_p, V_c and U over every recorded sample; flags every jump
/// across which V_p, V_c, or U increased by more than increase_tolerance.
/// rho must be increasing on the sampled range; identity when omitted.
[[nodiscard]] StorageTrace monitor_storage(const HybridArc& arc, const StateFn& v_p,
                                           const StateFn& v_c, const ScalarFn& rho = {},
                                           double increase_tolerance = 1e-12);

// ---------------------------------------------------------------------------
// Clarke directional derivative estimate
// ---------------------------------------------------------------------------

struct ClarkeConfig {
    std::vector<double> h_grid = {1e-4, 1e-5, 1e-6};  // positive, decreasing
    double y_radius = 1e-4;
    int n_samples = 200;  // sampled base points inside the radius
    unsigned seed = 0x9e3779b9u;
};

/// Finite-sampling estimate of the generalized directional derivative of a
/// locally Lipschitz f at x along v:
///   max over sampled y near x and h in h_grid of (f(y + h v) - f(y)) / h.
/// This under-approximates the limsup; absence of violations downstream is
/// evidence, not proof. Throws StepFailure on non-finite evaluations.
[[nodiscard]] double clarke_estimate(const std::function<double(const StateVec&)>& f,
                                     const StateVec& x, const StateVec& v,
                                     const ClarkeConfig& config = {});

// ---------------------------------------------------------------------------
// Small-gain condition checking
// ---------------------------------------------------------------------------

/// Rectangular sampling grid over the packed closed-loop state. One entry
/// per coordinate; a fixed coordinate uses points = 1 with lo == hi.
struct GridAxis {
    double lo = 0.0;
    double hi = 0.0;
    int points = 21;
};

struct GridSpec {
    std::vector<GridAxis> axes;

    [[nodiscard]] long total_points() const;
    [[nodiscard]] StateVec point(long index) const;  // row-major grid walk
};

struct SmallGainFunctions {
    StorageFn v_p;
    StorageFn v_c;
    ScalarFn chi_p;        // class-Kinf or zero
    ScalarFn chi_c;
    ScalarFn alpha_p;      // decay margins for the flow condition
    ScalarFn alpha_c;
    ScalarFn alpha_p_lower;  // sandwich envelopes
    ScalarFn alpha_p_upper;
    ScalarFn alpha_c_lower;
    ScalarFn alpha_c_upper;
    ScalarFn rho;          // bracket candidate; identity when omitted
};

struct SmallGainProblem {
    EtcSystem system;
    SmallGainFunctions fns;
    ClarkeConfig clarke;
    double margin = 1e-6;          // slack added to every compared bound
    std::vector<double> scalar_grid;  // s-grid for the composition and rho checks
};

struct SmallGainViolation {
    int item = 0;   // condition 1..5
    long grid_index = -1;  // -1 for scalar-grid items
    std::string what;
    double measured = 0.0;
    double required = 0.0;
    StateVec state;  // empty for scalar-grid items
};

struct SmallGainReport {
    long points_checked = 0;
    std::vector<GridAxis> axes;  // coverage metadata
    std::vector<double> scalar_grid;
    std::vector<int> items_checked;  // conditions whose functions were supplied
    std::vector<SmallGainViolation> violations;

    [[nodiscard]] bool clean() const { return violations.empty(); }
    [[nodiscard]] int count_for_item(int item) const;
};

enum class RunPolicy { Serial, Parallel };

/// Samples the grid and checks the five sufficient conditions:
///   1. sandwich bounds on V_p, V_c against the distance to the local
///      attractor sets,
///   2. the gain implication: V_p >= chi_p(V_c) forces the sampled Clarke
///      derivative of V_p along the flow to be <= -alpha_p (dually for c),
///   3. V non-increase across synthesized jumps for grid states in the
///      jump set,
///   4. chi_p(chi_c(s)) < s on the scalar grid, and
///   5. chi_p(r) < rho(r) < chi_c^{-1}(r) with rho'(r) > 0 (finite
///      differences) on the scalar grid.
/// Grid points are independent; RunPolicy::Parallel distributes them over
/// OpenMP threads and merges violations in deterministic grid order.
[[nodiscard]] SmallGainReport check_small_gain(const SmallGainProblem& problem,
                                               const GridSpec& grid,
                                               RunPolicy policy = RunPolicy::Parallel);

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

[[nodiscard]] std::string to_json(const DwellTimeReport& report);
[[nodiscard]] std::string to_json(const StorageTrace& trace);
[[nodiscard]] std::string to_json(const SmallGainReport& report);
[[nodiscard]] std::string violations_csv(const DwellTimeReport& report);
[[nodiscard]] std::string violations_csv(const SmallGainReport& report);

}  // namespace etcsim
