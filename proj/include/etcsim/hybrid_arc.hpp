#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

namespace etcsim {

using StateVec = Eigen::VectorXd;

/// A point (t, j) of a hybrid time domain: t seconds of flow, j jumps so far.
struct HybridTime {
    double t = 0.0;
    int j = 0;
};

/// Lexicographic-compatible ordering: (s,i) precedes (t,j) iff s+i <= t+j
/// with s <= t and i <= j. Within one arc this is a total order.
[[nodiscard]] bool precedes(const HybridTime& a, const HybridTime& b);

enum class SamplerId { Plant, Controller, Both };
enum class TriggerCause { Threshold, Timeout, ForcedSimultaneous };

[[nodiscard]] const char* to_string(SamplerId s);
[[nodiscard]] const char* to_string(TriggerCause c);

/// One sampler firing. `time.j` is the jump index *before* the jump was
/// taken, so the post-jump segment of the arc carries index time.j + 1.
struct EventRecord {
    HybridTime time;
    SamplerId sampler = SamplerId::Plant;
    TriggerCause cause = TriggerCause::Threshold;
};

enum class TerminationStatus {
    ReachedTEnd,
    ReachedJumpLimit,
    ZenoGuard,
    NoProgress,
    StepFailure,
};

[[nodiscard]] const char* to_string(TerminationStatus s);

struct TrajectorySample {
    double t = 0.0;
    StateVec state;
};

/// Maximal flow interval [t_start, t_end] x {jump_index} of a solution.
/// Zero-length segments occur between the two halves of a simultaneous
/// (double) jump. Samples are ordered by t; the first sample sits at
/// t_start and the last at t_end.
struct ArcSegment {
    int jump_index = 0;
    double t_start = 0.0;
    double t_end = 0.0;
    std::vector<TrajectorySample> samples;
};

/// A recorded solution on a hybrid time domain. Segment intervals are
/// contiguous: segments[k].t_end == segments[k+1].t_start and jump
/// indices increase by exactly one per segment.
struct HybridArc {
    std::vector<ArcSegment> segments;
    std::vector<EventRecord> events;
    TerminationStatus status = TerminationStatus::ReachedTEnd;
    std::string message;

    [[nodiscard]] double total_time() const {
        return segments.empty() ? 0.0 : segments.back().t_end;
    }
    [[nodiscard]] int total_jumps() const {
        return segments.empty() ? 0 : segments.back().jump_index;
    }
};

/// Checks the hybrid time domain structure: contiguous intervals, no
/// gaps or overlaps, jump index increasing by one per segment, and sample
/// times confined to their segment. Returns an empty string when valid.
[[nodiscard]] std::string validate_domain(const HybridArc& arc);

}  // namespace etcsim
