#include "etcsim/solver.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace etcsim {

void SolverConfig::validate() const {
    if (!(max_step > 0.0)) throw std::invalid_argument("solver: max_step must be > 0");
    if (!(event_tolerance > 0.0) || !(event_tolerance < max_step))
        throw std::invalid_argument("solver: event_tolerance must be in (0, max_step)");
    if (!(t_end > 0.0)) throw std::invalid_argument("solver: t_end must be > 0");
    if (j_max <= 0) throw std::invalid_argument("solver: j_max must be > 0");
    if (!(record_stride > 0.0)) throw std::invalid_argument("solver: record_stride must be > 0");
    if (!(zeno_window.seconds > 0.0) || zeno_window.max_jumps <= 0)
        throw std::invalid_argument("solver: zeno window must be positive");
}

StateVec flow_step(const FlowMap& flow_map, const StateVec& state, double dt) {
    auto eval = [&](const StateVec& s) {
        StateVec d = flow_map(s);
        if (!d.allFinite()) throw StepFailure("non-finite flow derivative");
        return d;
    };
    const StateVec k1 = eval(state);
    const StateVec k2 = eval(state + (0.5 * dt) * k1);
    const StateVec k3 = eval(state + (0.5 * dt) * k2);
    const StateVec k4 = eval(state + dt * k3);
    StateVec out = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!out.allFinite()) throw StepFailure("non-finite state after step");
    return out;
}

EventLocation locate_event(const FlowMap& flow_map, const SetMembership& jump_set_membership,
                           const StateVec& state_before, double dt, double tolerance) {
    double lo = 0.0;
    double hi = dt;
    StateVec hi_state = flow_step(flow_map, state_before, dt);
    while (hi - lo > tolerance) {
        const double mid = 0.5 * (lo + hi);
        StateVec mid_state = flow_step(flow_map, state_before, mid);
        if (jump_set_membership(mid_state)) {
            hi = mid;
            hi_state = std::move(mid_state);
        } else {
            lo = mid;
        }
    }
    return {hi, std::move(hi_state)};
}

JumpResult jump_step(const HybridSystemDef& system, const StateVec& state, JumpOrder order,
                     const HybridTime& at) {
    auto successors = system.jump_map(state);
    if (successors.empty())
        throw std::logic_error("jump_map returned no successor for a jump-set state");

    JumpResult result;
    if (successors.size() == 1) {
        result.state = successors[0].state;
        result.intermediate.push_back(successors[0].state);
        result.events.push_back({at, successors[0].sampler, successors[0].cause});
        return result;
    }

    // Both samplers fired: pick the policy-preferred alternative, then take
    // the remaining jump from the intermediate state.
    const SamplerId first_id =
        order == JumpOrder::PlantFirst ? SamplerId::Plant : SamplerId::Controller;
    const auto first_it =
        std::find_if(successors.begin(), successors.end(),
                     [&](const JumpSuccessor& s) { return s.sampler == first_id; });
    const JumpSuccessor& first = first_it != successors.end() ? *first_it : successors.front();

    result.intermediate.push_back(first.state);
    result.events.push_back({at, first.sampler, TriggerCause::ForcedSimultaneous});
    result.state = first.state;

    auto second_list = system.jump_map(first.state);
    if (!second_list.empty()) {
        const auto second_it =
            std::find_if(second_list.begin(), second_list.end(),
                         [&](const JumpSuccessor& s) { return s.sampler != first.sampler; });
        const JumpSuccessor& second =
            second_it != second_list.end() ? *second_it : second_list.front();
        result.intermediate.push_back(second.state);
        result.events.push_back(
            {{at.t, at.j + 1}, second.sampler, TriggerCause::ForcedSimultaneous});
        result.state = second.state;
    }
    return result;
}

namespace {

class ZenoGuardCounter {
  public:
    explicit ZenoGuardCounter(const ZenoWindow& window) : window_(window) {}

    /// Records one jump at time t; true when the window budget is exceeded.
    bool record(double t) {
        times_.push_back(t);
        while (!times_.empty() && times_.front() < t - window_.seconds) times_.pop_front();
        return static_cast<int>(times_.size()) > window_.max_jumps;
    }

  private:
    ZenoWindow window_;
    std::deque<double> times_;
};

}  // namespace

HybridArc simulate(const HybridSystemDef& system, const StateVec& q0, const SolverConfig& config) {
    config.validate();

    HybridArc arc;
    double t = 0.0;
    int j = 0;
    StateVec q = q0;

    ArcSegment seg;
    seg.jump_index = 0;
    seg.t_start = 0.0;
    seg.samples.push_back({0.0, q});
    double next_record = config.record_stride;

    ZenoGuardCounter zeno(config.zeno_window);

    auto close_segment = [&](double t_close) {
        if (seg.samples.back().t < t_close) seg.samples.push_back({t_close, q});
        seg.t_end = t_close;
        arc.segments.push_back(std::move(seg));
        seg = ArcSegment{};
    };
    auto open_segment = [&](double t_open) {
        seg.jump_index = j;
        seg.t_start = t_open;
        seg.samples.push_back({t_open, q});
        next_record = t_open + config.record_stride;
    };

    while (true) {
        if (j >= config.j_max) {
            arc.status = TerminationStatus::ReachedJumpLimit;
            break;
        }
        if (t >= config.t_end) {
            arc.status = TerminationStatus::ReachedTEnd;
            break;
        }

        if (system.jump_set(q)) {
            close_segment(t);
            JumpResult jr = jump_step(system, q, config.jump_order, {t, j});
            for (auto& ev : jr.events) arc.events.push_back(ev);

            // Intermediate states of a double jump become zero-length segments.
            for (size_t k = 0; k + 1 < jr.intermediate.size(); ++k) {
                ArcSegment mid;
                mid.jump_index = j + static_cast<int>(k) + 1;
                mid.t_start = mid.t_end = t;
                mid.samples.push_back({t, jr.intermediate[k]});
                arc.segments.push_back(std::move(mid));
            }

            j += static_cast<int>(jr.events.size());
            q = jr.state;
            open_segment(t);

            bool tripped = false;
            for (size_t k = 0; k < jr.events.size(); ++k) tripped = zeno.record(t) || tripped;
            if (tripped) {
                arc.status = TerminationStatus::ZenoGuard;
                arc.message = "zeno guard: more than " +
                              std::to_string(config.zeno_window.max_jumps) + " jumps within " +
                              std::to_string(config.zeno_window.seconds) + " s";
                break;
            }
            if (!system.flow_set(q) && !system.jump_set(q)) {
                arc.status = TerminationStatus::NoProgress;
                arc.message = "post-jump state left both the flow and jump sets";
                break;
            }
            continue;
        }

        if (!system.flow_set(q)) {
            arc.status = TerminationStatus::NoProgress;
            arc.message = "state outside both the flow and jump sets";
            break;
        }

        const double target = std::min({t + config.max_step, next_record, config.t_end});
        const double dt = target - t;

        StateVec candidate;
        try {
            candidate = flow_step(system.flow_map, q, dt);

            if (system.jump_set(candidate)) {
                auto loc =
                    locate_event(system.flow_map, system.jump_set, q, dt, config.event_tolerance);
                q = std::move(loc.state);
                t += loc.offset;
                continue;  // the jump branch fires next iteration
            }
            if (!system.flow_set(candidate)) {
                // Left the flow set without entering the jump set: localize the
                // boundary and decide whether it coincides with jump-set entry.
                auto outside = [&](const StateVec& s) { return !system.flow_set(s); };
                auto loc = locate_event(system.flow_map, outside, q, dt, config.event_tolerance);
                q = std::move(loc.state);
                t += loc.offset;
                if (system.jump_set(q)) continue;
                arc.status = TerminationStatus::NoProgress;
                arc.message = "flow left the flow set away from the jump set";
                break;
            }
        } catch (const StepFailure& failure) {
            arc.status = TerminationStatus::StepFailure;
            arc.message = failure.what();
            break;
        }

        q = std::move(candidate);
        t = target;
        if (t == next_record) {
            seg.samples.push_back({t, q});
            next_record += config.record_stride;
        }
    }

    close_segment(t);
    return arc;
}

}  // namespace etcsim
