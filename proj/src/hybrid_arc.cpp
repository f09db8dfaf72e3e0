#include "etcsim/hybrid_arc.hpp"

#include <cmath>
#include <sstream>

namespace etcsim {

bool precedes(const HybridTime& a, const HybridTime& b) {
    return a.t + a.j <= b.t + b.j && a.t <= b.t && a.j <= b.j;
}

const char* to_string(SamplerId s) {
    switch (s) {
        case SamplerId::Plant: return "plant";
        case SamplerId::Controller: return "controller";
        case SamplerId::Both: return "both";
    }
    return "?";
}

const char* to_string(TriggerCause c) {
    switch (c) {
        case TriggerCause::Threshold: return "threshold";
        case TriggerCause::Timeout: return "timeout";
        case TriggerCause::ForcedSimultaneous: return "forced-simultaneous";
    }
    return "?";
}

const char* to_string(TerminationStatus s) {
    switch (s) {
        case TerminationStatus::ReachedTEnd: return "reached-t-end";
        case TerminationStatus::ReachedJumpLimit: return "reached-jump-limit";
        case TerminationStatus::ZenoGuard: return "zeno-guard";
        case TerminationStatus::NoProgress: return "no-progress";
        case TerminationStatus::StepFailure: return "step-failure";
    }
    return "?";
}

std::string validate_domain(const HybridArc& arc) {
    std::ostringstream err;
    for (size_t k = 0; k < arc.segments.size(); ++k) {
        const auto& seg = arc.segments[k];
        if (seg.t_end < seg.t_start) {
            err << "segment " << k << ": t_end < t_start";
            return err.str();
        }
        if (seg.samples.empty()) {
            err << "segment " << k << ": no samples";
            return err.str();
        }
        if (seg.samples.front().t != seg.t_start || seg.samples.back().t != seg.t_end) {
            err << "segment " << k << ": samples do not span the interval";
            return err.str();
        }
        for (size_t m = 0; m + 1 < seg.samples.size(); ++m) {
            if (seg.samples[m].t > seg.samples[m + 1].t) {
                err << "segment " << k << ": samples out of order";
                return err.str();
            }
        }
        if (k > 0) {
            const auto& prev = arc.segments[k - 1];
            if (seg.jump_index != prev.jump_index + 1) {
                err << "segment " << k << ": jump index not incremented by one";
                return err.str();
            }
            if (seg.t_start != prev.t_end) {
                err << "segment " << k << ": interval gap or overlap";
                return err.str();
            }
        }
    }
    return {};
}

}  // namespace etcsim
