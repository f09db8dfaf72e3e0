#include "doctest.h"

#include "etcsim/solver.hpp"

#include <cmath>
#include <vector>

using namespace etcsim;

namespace {

StateVec scalar(double v) {
    StateVec s(1);
    s(0) = v;
    return s;
}

// Timer toy: one state flowing at unit rate, jump set {x >= threshold},
// jump resets to zero. Events at threshold, 2*threshold, ... in wall time.
HybridSystemDef timer_system(double threshold) {
    HybridSystemDef sys;
    sys.dim = 1;
    sys.flow_map = [](const StateVec&) { return scalar(1.0); };
    sys.jump_set = [threshold](const StateVec& q) { return q(0) >= threshold; };
    sys.flow_set = [threshold](const StateVec& q) { return q(0) < threshold; };
    sys.jump_map = [](const StateVec&) {
        return std::vector<JumpSuccessor>{{scalar(0.0), SamplerId::Plant, TriggerCause::Timeout}};
    };
    return sys;
}

}  // namespace

TEST_CASE("flow_step leaves state unchanged under zero flow") {
    StateVec q(2);
    q << 3.5, -1.25;
    auto out = flow_step([](const StateVec& s) { return StateVec::Zero(s.size()).eval(); }, q, 0.3);
    CHECK(out(0) == 3.5);
    CHECK(out(1) == -1.25);
}

TEST_CASE("flow_step integrates a constant-rate flow exactly") {
    auto out = flow_step([](const StateVec&) { return scalar(1.0); }, scalar(0.0), 0.5);
    CHECK(out(0) == 0.5);
}

TEST_CASE("flow_step matches the exponential on x' = -x") {
    auto out = flow_step([](const StateVec& s) { return (-s).eval(); }, scalar(1.0), 0.1);
    CHECK(std::abs(out(0) - std::exp(-0.1)) < 1e-7);
}

TEST_CASE("flow_step reports non-finite stage evaluations") {
    auto bad = [](const StateVec&) { return scalar(std::nan("")); };
    CHECK_THROWS_AS((void)flow_step(bad, scalar(1.0), 0.1), StepFailure);
}

TEST_CASE("locate_event bisects a linear timer crossing") {
    auto flow = [](const StateVec&) { return scalar(1.0); };
    auto member = [](const StateVec& q) { return q(0) >= 1.0; };
    auto loc = locate_event(flow, member, scalar(0.95), 0.1, 1e-6);
    CHECK(std::abs(loc.offset - 0.05) <= 1e-6);
    CHECK(loc.state(0) >= 1.0);
    // One tolerance earlier must still be outside.
    auto just_before = flow_step(flow, scalar(0.95), loc.offset - 1e-6);
    CHECK_FALSE(member(just_before));
}

TEST_CASE("locate_event handles immediate membership") {
    auto flow = [](const StateVec&) { return scalar(1.0); };
    auto member = [](const StateVec& q) { return q(0) > 0.0; };
    auto loc = locate_event(flow, member, scalar(0.0), 0.1, 1e-6);
    CHECK(loc.offset > 0.0);
    CHECK(loc.offset <= 1e-6);
}

TEST_CASE("jump_step applies a single successor and records it") {
    auto sys = timer_system(1.0);
    auto res = jump_step(sys, scalar(1.0), JumpOrder::PlantFirst, HybridTime{2.5, 3});
    CHECK(res.state(0) == 0.0);
    REQUIRE(res.events.size() == 1);
    CHECK(res.events[0].time.t == 2.5);
    CHECK(res.events[0].time.j == 3);
    CHECK(res.events[0].sampler == SamplerId::Plant);
    CHECK(res.events[0].cause == TriggerCause::Timeout);
}

TEST_CASE("jump_step applies simultaneous successors as two ordered jumps") {
    // Two coordinates with independent resets; both trip at (1, 1).
    HybridSystemDef sys;
    sys.dim = 2;
    sys.flow_map = [](const StateVec&) { return StateVec::Ones(2).eval(); };
    sys.jump_set = [](const StateVec& q) { return q(0) >= 1.0 || q(1) >= 1.0; };
    sys.flow_set = [](const StateVec& q) { return q(0) < 1.0 && q(1) < 1.0; };
    sys.jump_map = [](const StateVec& q) {
        std::vector<JumpSuccessor> out;
        if (q(0) >= 1.0) {
            StateVec s = q;
            s(0) = 0.0;
            out.push_back({s, SamplerId::Plant, TriggerCause::Threshold});
        }
        if (q(1) >= 1.0) {
            StateVec s = q;
            s(1) = 0.0;
            out.push_back({s, SamplerId::Controller, TriggerCause::Threshold});
        }
        return out;
    };

    StateVec q(2);
    q << 1.0, 1.0;

    SUBCASE("plant first") {
        auto res = jump_step(sys, q, JumpOrder::PlantFirst, HybridTime{1.0, 0});
        CHECK(res.state(0) == 0.0);
        CHECK(res.state(1) == 0.0);
        REQUIRE(res.events.size() == 2);
        CHECK(res.events[0].sampler == SamplerId::Plant);
        CHECK(res.events[1].sampler == SamplerId::Controller);
        CHECK(res.events[0].cause == TriggerCause::ForcedSimultaneous);
        CHECK(res.events[1].cause == TriggerCause::ForcedSimultaneous);
        CHECK(res.events[0].time.j == 0);
        CHECK(res.events[1].time.j == 1);
        REQUIRE(res.intermediate.size() == 2);
        CHECK(res.intermediate[0](0) == 0.0);
        CHECK(res.intermediate[0](1) == 1.0);
    }
    SUBCASE("controller first reaches the same terminal state") {
        auto res = jump_step(sys, q, JumpOrder::ControllerFirst, HybridTime{1.0, 0});
        CHECK(res.state(0) == 0.0);
        CHECK(res.state(1) == 0.0);
        REQUIRE(res.events.size() == 2);
        CHECK(res.events[0].sampler == SamplerId::Controller);
        CHECK(res.events[1].sampler == SamplerId::Plant);
    }
}

TEST_CASE("simulate: constant system produces one full-horizon segment") {
    HybridSystemDef sys;
    sys.dim = 1;
    sys.flow_map = [](const StateVec&) { return StateVec::Zero(1).eval(); };
    sys.flow_set = [](const StateVec&) { return true; };
    sys.jump_set = [](const StateVec&) { return false; };
    sys.jump_map = [](const StateVec&) { return std::vector<JumpSuccessor>{}; };

    SolverConfig cfg;
    cfg.t_end = 2.0;
    auto arc = simulate(sys, scalar(7.0), cfg);

    CHECK(arc.status == TerminationStatus::ReachedTEnd);
    REQUIRE(arc.segments.size() == 1);
    CHECK(arc.segments[0].t_start == 0.0);
    CHECK(arc.segments[0].t_end == doctest::Approx(2.0));
    CHECK(arc.events.empty());
    for (const auto& s : arc.segments[0].samples) CHECK(s.state(0) == 7.0);
    CHECK(validate_domain(arc).empty());
}

TEST_CASE("simulate: linear decay matches the closed form at t_end") {
    HybridSystemDef sys;
    sys.dim = 1;
    sys.flow_map = [](const StateVec& s) { return (-s).eval(); };
    sys.flow_set = [](const StateVec&) { return true; };
    sys.jump_set = [](const StateVec&) { return false; };
    sys.jump_map = [](const StateVec&) { return std::vector<JumpSuccessor>{}; };

    SolverConfig cfg;
    cfg.t_end = 1.0;
    auto arc = simulate(sys, scalar(1.0), cfg);

    REQUIRE(arc.status == TerminationStatus::ReachedTEnd);
    const auto& last = arc.segments.back().samples.back();
    CHECK(last.t == doctest::Approx(1.0));
    CHECK(std::abs(last.state(0) - std::exp(-1.0)) < 1e-6);

    // Every recorded sample tracks the closed form.
    for (const auto& s : arc.segments[0].samples)
        CHECK(std::abs(s.state(0) - std::exp(-s.t)) < 1e-6);
}

TEST_CASE("simulate: periodic timer jumps land on the boundary") {
    auto sys = timer_system(0.25);
    SolverConfig cfg;
    cfg.t_end = 1.1;
    auto arc = simulate(sys, scalar(0.0), cfg);

    REQUIRE(arc.status == TerminationStatus::ReachedTEnd);
    REQUIRE(arc.events.size() == 4);
    for (size_t k = 0; k < arc.events.size(); ++k) {
        CHECK(std::abs(arc.events[k].time.t - 0.25 * static_cast<double>(k + 1)) <= 1e-5);
        CHECK(arc.events[k].time.j == static_cast<int>(k));
    }
    CHECK(validate_domain(arc).empty());

    // Jumps occur at states inside the jump set, within tolerance of it.
    for (size_t k = 0; k + 1 < arc.segments.size(); ++k) {
        const auto& pre = arc.segments[k].samples.back().state;
        CHECK(sys.jump_set(pre));
        CHECK(pre(0) <= 0.25 + cfg.event_tolerance);
    }
}

TEST_CASE("simulate: j_max caps the jump count") {
    auto sys = timer_system(0.1);
    SolverConfig cfg;
    cfg.t_end = 10.0;
    cfg.j_max = 2;
    auto arc = simulate(sys, scalar(0.0), cfg);
    CHECK(arc.status == TerminationStatus::ReachedJumpLimit);
    CHECK(arc.total_jumps() == 2);
}

TEST_CASE("simulate: initial state outside both sets is no progress") {
    HybridSystemDef sys;
    sys.dim = 1;
    sys.flow_map = [](const StateVec&) { return scalar(1.0); };
    sys.flow_set = [](const StateVec& q) { return q(0) < 1.0; };
    sys.jump_set = [](const StateVec&) { return false; };
    sys.jump_map = [](const StateVec&) { return std::vector<JumpSuccessor>{}; };

    SolverConfig cfg;
    cfg.t_end = 5.0;
    auto arc = simulate(sys, scalar(2.0), cfg);
    CHECK(arc.status == TerminationStatus::NoProgress);
}

TEST_CASE("simulate: flow-set exit without jump-set entry is no progress") {
    HybridSystemDef sys;
    sys.dim = 1;
    sys.flow_map = [](const StateVec&) { return scalar(1.0); };
    sys.flow_set = [](const StateVec& q) { return q(0) < 1.0; };
    sys.jump_set = [](const StateVec& q) { return q(0) >= 2.0; };
    sys.jump_map = [](const StateVec&) {
        return std::vector<JumpSuccessor>{{scalar(0.0), SamplerId::Plant, TriggerCause::Timeout}};
    };

    SolverConfig cfg;
    cfg.t_end = 5.0;
    auto arc = simulate(sys, scalar(0.0), cfg);
    CHECK(arc.status == TerminationStatus::NoProgress);
    // Stopped at the flow boundary, not at t_end.
    CHECK(std::abs(arc.total_time() - 1.0) <= 1e-3);
}

TEST_CASE("simulate: zeno guard trips on an always-jumping system") {
    HybridSystemDef sys;
    sys.dim = 1;
    sys.flow_map = [](const StateVec&) { return scalar(0.0); };
    sys.flow_set = [](const StateVec&) { return false; };
    sys.jump_set = [](const StateVec&) { return true; };
    sys.jump_map = [](const StateVec& q) {
        return std::vector<JumpSuccessor>{{q, SamplerId::Plant, TriggerCause::Threshold}};
    };

    SolverConfig cfg;
    cfg.t_end = 5.0;
    cfg.j_max = 100000;
    cfg.zeno_window = {1.0, 50};
    auto arc = simulate(sys, scalar(0.0), cfg);
    CHECK(arc.status == TerminationStatus::ZenoGuard);
    CHECK(arc.total_jumps() <= 52);
}

TEST_CASE("simulate: non-finite flow surfaces as step failure") {
    HybridSystemDef sys;
    sys.dim = 1;
    sys.flow_map = [](const StateVec& q) {
        return scalar(q(0) < 0.5 ? 1.0 : std::numeric_limits<double>::infinity());
    };
    sys.flow_set = [](const StateVec&) { return true; };
    sys.jump_set = [](const StateVec&) { return false; };
    sys.jump_map = [](const StateVec&) { return std::vector<JumpSuccessor>{}; };

    SolverConfig cfg;
    cfg.t_end = 2.0;
    auto arc = simulate(sys, scalar(0.0), cfg);
    CHECK(arc.status == TerminationStatus::StepFailure);
}

TEST_CASE("simulate is deterministic: bit-identical event sequences") {
    auto sys = timer_system(0.173);
    SolverConfig cfg;
    cfg.t_end = 3.0;
    auto a = simulate(sys, scalar(0.0), cfg);
    auto b = simulate(sys, scalar(0.0), cfg);
    REQUIRE(a.events.size() == b.events.size());
    for (size_t k = 0; k < a.events.size(); ++k) {
        CHECK(a.events[k].time.t == b.events[k].time.t);  // exact, not approximate
        CHECK(a.events[k].time.j == b.events[k].time.j);
        CHECK(a.events[k].sampler == b.events[k].sampler);
        CHECK(a.events[k].cause == b.events[k].cause);
    }
    REQUIRE(a.segments.size() == b.segments.size());
    for (size_t k = 0; k < a.segments.size(); ++k)
        CHECK(a.segments[k].t_end == b.segments[k].t_end);
}

TEST_CASE("simulate: segment intervals are contiguous with unit jump increments") {
    auto sys = timer_system(0.31);
    SolverConfig cfg;
    cfg.t_end = 2.0;
    auto arc = simulate(sys, scalar(0.0), cfg);
    CHECK(validate_domain(arc).empty());
    for (size_t k = 0; k + 1 < arc.segments.size(); ++k) {
        CHECK(arc.segments[k].t_end == arc.segments[k + 1].t_start);
        CHECK(arc.segments[k].jump_index + 1 == arc.segments[k + 1].jump_index);
    }
}

TEST_CASE("hybrid time ordering") {
    CHECK(precedes({1.0, 0}, {2.0, 1}));
    CHECK(precedes({1.0, 1}, {1.0, 1}));
    CHECK_FALSE(precedes({2.0, 1}, {1.0, 0}));
    CHECK_FALSE(precedes({0.0, 3}, {1.0, 1}));  // i > j
}

TEST_CASE("solver config validation") {
    SolverConfig cfg;
    cfg.max_step = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = SolverConfig{};
    cfg.event_tolerance = cfg.max_step * 2;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = SolverConfig{};
    cfg.t_end = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = SolverConfig{};
    cfg.j_max = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    CHECK_NOTHROW(SolverConfig{}.validate());
}
