#pragma once

#include "etcsim/hybrid_arc.hpp"

#include <functional>
#include <stdexcept>
#include <vector>

namespace etcsim {

/// Thrown when a flow-map evaluation or an integration stage produces a
/// non-finite value. simulate() converts it into TerminationStatus::StepFailure.
class StepFailure : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

using FlowMap = std::function<StateVec(const StateVec&)>;
using SetMembership = std::function<bool(const StateVec&)>;

/// One admissible post-jump state, labeled with the sampler that produced
/// it and why it fired. For a simultaneous firing the jump map returns the
/// two single-sampler alternatives; the engine applies them successively.
struct JumpSuccessor {
    StateVec state;
    SamplerId sampler = SamplerId::Plant;
    TriggerCause cause = TriggerCause::Threshold;
};

using JumpMap = std::function<std::vector<JumpSuccessor>(const StateVec&)>;

struct HybridSystemDef {
    int dim = 0;
    FlowMap flow_map;
    JumpMap jump_map;
    SetMembership flow_set;
    SetMembership jump_set;
};

/// Which single-sampler alternative is applied first when both samplers
/// fire at the same hybrid instant.
enum class JumpOrder { PlantFirst, ControllerFirst };

struct ZenoWindow {
    double seconds = 1.0;
    int max_jumps = 1000;
};

struct SolverConfig {
    double max_step = 1e-2;
    double event_tolerance = 1e-6;  // bisection width for jump-set entry
    double t_end = 60.0;
    long j_max = 100000;
    ZenoWindow zeno_window;
    double record_stride = 1e-2;
    JumpOrder jump_order = JumpOrder::PlantFirst;

    /// Throws std::invalid_argument when a bound is out of range.
    void validate() const;
};

/// One classical 4th-order Runge-Kutta step. Exact for flows with
/// polynomial solutions up to degree 4; local truncation error O(dt^5).
/// Throws StepFailure when any stage evaluates non-finite.
[[nodiscard]] StateVec flow_step(const FlowMap& flow_map, const StateVec& state, double dt);

struct EventLocation {
    double offset = 0.0;  // delta in (0, dt]
    StateVec state;       // state flowed by offset, inside the jump set
};

/// Bisects the entry into the jump set along one flow step.
/// Requires membership(state_before) == false and membership after flowing
/// dt == true. The returned offset delta satisfies: flowing delta lands in
/// the set while flowing delta - tolerance does not.
[[nodiscard]] EventLocation locate_event(const FlowMap& flow_map,
                                         const SetMembership& jump_set_membership,
                                         const StateVec& state_before, double dt,
                                         double tolerance);

struct JumpResult {
    StateVec state;                        // final post-jump state
    std::vector<StateVec> intermediate;    // states after each applied jump
    std::vector<EventRecord> events;       // one record per consumed jump index
};

/// Applies the jump map at `state`. A single successor is applied as one
/// jump. Two successors indicate both samplers fired: they are applied as
/// two successive jumps in the order given by `order`, each consuming a
/// jump index, with both events recorded as forced-simultaneous.
/// `at` is the hybrid time before the first applied jump; records carry
/// (at.t, at.j), (at.t, at.j + 1), ...
[[nodiscard]] JumpResult jump_step(const HybridSystemDef& system, const StateVec& state,
                                   JumpOrder order, const HybridTime& at);

/// Integrates the hybrid system from q0 until t_end, j_max, a Zeno-guard
/// trip, a dead state (outside both sets), or a non-finite step.
/// The returned arc records stride-spaced samples plus both endpoints of
/// every segment; recorded flowing states satisfy flow-set membership up
/// to event_tolerance of the jump-set boundary.
[[nodiscard]] HybridArc simulate(const HybridSystemDef& system, const StateVec& q0,
                                 const SolverConfig& config);

}  // namespace etcsim
