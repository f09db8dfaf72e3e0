#include "doctest.h"

#include "etcsim/analysis.hpp"
#include "integrator_fixture.hpp"

#include <cmath>
#include <random>

using namespace etcsim;
using etcsim::testing::make_integrator_system;
using etcsim::testing::make_q;
using etcsim::testing::vec1;

namespace {

HybridArc run_integrator(double k_p, double tau_p, double tau_c, double t_end = 60.0) {
    auto sys = make_integrator_system(k_p, tau_p, tau_c);
    auto def = build_closed_loop(sys);
    Vec q0 = make_q(sys.layout, 10.0, 0.0, 0.0, 10.0, 0.0, 0.0);
    SolverConfig cfg;
    cfg.t_end = t_end;
    return simulate(def, q0, cfg);
}

// Synthetic arc from a list of (time, sampler) events; boundary samples only.
HybridArc synthetic_arc(const std::vector<std::pair<double, SamplerId>>& events, double t_end) {
    HybridArc arc;
    double t_prev = 0.0;
    int j = 0;
    for (const auto& [t, sampler] : events) {
        ArcSegment seg;
        seg.jump_index = j;
        seg.t_start = t_prev;
        seg.t_end = t;
        seg.samples = {{t_prev, vec1(0.0)}, {t, vec1(0.0)}};
        if (t == t_prev) seg.samples.pop_back();
        if (seg.samples.back().t != t) seg.samples.back().t = t;
        arc.segments.push_back(seg);
        arc.events.push_back({{t, j}, sampler, TriggerCause::Threshold});
        t_prev = t;
        ++j;
    }
    ArcSegment tail;
    tail.jump_index = j;
    tail.t_start = t_prev;
    tail.t_end = t_end;
    tail.samples = {{t_prev, vec1(0.0)}, {t_end, vec1(0.0)}};
    arc.segments.push_back(tail);
    arc.status = TerminationStatus::ReachedTEnd;
    return arc;
}

StateFn full_state_vp(const StateLayout& layout, const TriggerSpec& spec) {
    return [layout, storage = spec.storage](const StateVec& q) {
        return storage(layout.plant_local(q));
    };
}

StateFn full_state_vc(const StateLayout& layout, const TriggerSpec& spec) {
    return [layout, storage = spec.storage](const StateVec& q) {
        return storage(layout.controller_local(q));
    };
}

}  // namespace

TEST_CASE("verify_dwell: bounded regime satisfies the per-sampler and timer checks") {
    auto arc = run_integrator(0.5, 1.0, 2.0);
    DwellCheckConfig cfg;
    cfg.tau_p = 1.0;
    cfg.tau_c = 2.0;
    cfg.tau_pi = 60.0;
    cfg.tau_kappa = 120.0;
    cfg.layout = StateLayout{1, 1, 1};
    auto report = verify_dwell(arc, cfg);
    CHECK(report.tau_avg == doctest::Approx(0.5));
    CHECK(report.plant_jumps >= 2);
    CHECK(report.min_plant_gap >= 1.0 - 1e-4);
    CHECK(report.min_controller_gap >= 2.0 - 1e-4);
    CHECK(report.max_eta_p <= 60.0 + 1e-4);
    CHECK(report.gamma_slope == doctest::Approx(1.0 / (1.0 + 1.0 / 0.5)));
    CHECK(report.horizon_offset == report.gamma_slope);

    // The per-sampler gap and timer-range checks hold exactly. The pairwise
    // average-dwell inequality (its "+1" form) does not: a plant jump and a
    // controller jump may legally land closer than tau_avg (here the plant
    // fires at t = 2 and the controller at t ~ 2.26 with tau_avg = 0.5),
    // making j - i = 2 exceed (t - s)/tau_avg + 1. Those are the only
    // violations this run may report, and each is within the "+2" bound
    // that the per-sampler gaps actually imply.
    for (const auto& v : report.violations) {
        CHECK(v.check == "average-dwell");
        CHECK(v.observed <= v.required + 1.0);
    }
    CHECK_FALSE(report.clean());  // the asynchronous pair above is real
}

TEST_CASE("verify_dwell: arc with zero jumps is vacuously clean") {
    auto arc = synthetic_arc({}, 10.0);
    auto report = verify_dwell(arc, 1.0, 2.0);
    CHECK(report.clean());
    CHECK(report.plant_jumps == 0);
    CHECK(report.controller_jumps == 0);
}

TEST_CASE("verify_dwell soundness: an injected close pair always violates") {
    auto arc = synthetic_arc(
        {{0.4, SamplerId::Plant}, {0.401, SamplerId::Plant}, {3.0, SamplerId::Controller}}, 10.0);
    auto report = verify_dwell(arc, 1.0, 2.0);
    REQUIRE_FALSE(report.clean());
    bool found = false;
    for (const auto& v : report.violations)
        if (v.check == "plant-gap" && std::abs(v.observed - 0.001) < 1e-12) found = true;
    CHECK(found);
}

TEST_CASE("per-sampler gaps bound the pairwise jump counts") {
    // Random event streams respecting the per-sampler minimum gap. What the
    // gaps genuinely imply for any hybrid-time pair is
    //   j - i <= (t - s)/tau_avg + 2,
    // with "+1" attainable only for odd j - i: an adjacent plant/controller
    // pair may be arbitrarily close in time. The checker applies the "+1"
    // form, so every reported average-dwell violation must carry at most
    // one jump of slack, and odd-difference pairs must never be reported.
    std::mt19937 rng(314159u);
    std::uniform_real_distribution<double> gap_scale(1.0, 3.0);

    for (int trial = 0; trial < 200; ++trial) {
        const double tau_p = 0.3, tau_c = 0.5;
        std::vector<std::pair<double, SamplerId>> events;
        double next_p = gap_scale(rng) * tau_p;
        double next_c = gap_scale(rng) * tau_c;
        for (int k = 0; k < 40; ++k) {
            if (next_p <= next_c) {
                events.push_back({next_p, SamplerId::Plant});
                next_p += gap_scale(rng) * tau_p;
            } else {
                events.push_back({next_c, SamplerId::Controller});
                next_c += gap_scale(rng) * tau_c;
            }
        }
        auto arc = synthetic_arc(events, events.back().first + 1.0);
        auto report = verify_dwell(arc, tau_p, tau_c);
        for (const auto& v : report.violations) {
            // (a) and (b) hold by construction.
            CHECK(v.check != "plant-gap");
            CHECK(v.check != "controller-gap");
            if (v.check == "average-dwell") {
                CHECK(v.observed <= v.required + 1.0);
                CHECK(static_cast<long>(v.observed) % 2 == 0);
            }
        }
    }
}

TEST_CASE("clarke_estimate: smooth square function") {
    auto f = [](const StateVec& x) { return x(0) * x(0); };
    double est = clarke_estimate(f, vec1(1.0), vec1(1.0));
    CHECK(std::abs(est - 2.0) < 1e-3);
}

TEST_CASE("clarke_estimate: absolute value at the kink") {
    auto f = [](const StateVec& x) { return std::abs(x(0)); };
    double est = clarke_estimate(f, vec1(0.0), vec1(1.0));
    CHECK(std::abs(est - 1.0) < 1e-3);
}

TEST_CASE("clarke_estimate: zero direction gives zero") {
    auto f = [](const StateVec& x) { return x(0) * x(0); };
    CHECK(clarke_estimate(f, vec1(1.0), vec1(0.0)) == 0.0);
}

TEST_CASE("clarke_estimate converges to the gradient on polynomials") {
    auto f = [](const StateVec& x) { return x(0) * x(0) * x(0) - 2.0 * x(0); };
    // grad at x=2 is 3*4-2 = 10.
    double est = clarke_estimate(f, vec1(2.0), vec1(1.0));
    CHECK(std::abs(est - 10.0) / 10.0 < 1e-3);
}

TEST_CASE("clarke_estimate reports non-finite evaluations") {
    auto f = [](const StateVec&) { return std::numeric_limits<double>::quiet_NaN(); };
    CHECK_THROWS_AS((void)clarke_estimate(f, vec1(0.0), vec1(1.0)), StepFailure);
}

TEST_CASE("monitor_storage: ZOH run with quadratic storages is never flagged") {
    auto sys = make_integrator_system(0.5, 1.0, 2.0);
    auto arc = run_integrator(0.5, 1.0, 2.0);
    auto trace =
        monitor_storage(arc, full_state_vp(sys.layout, sys.trigger_p),
                        full_state_vc(sys.layout, sys.trigger_c));
    CHECK(trace.clean());
    CHECK_FALSE(trace.samples.empty());
    for (const auto& s : trace.samples) {
        CHECK(s.u >= 0.0);
        CHECK(s.u == doctest::Approx(std::max(s.v_p, s.v_c)));
    }
    // Bounded regime decays; the tail flag stays off.
    CHECK_FALSE(trace.tail_nonconvergent);
}

TEST_CASE("monitor_storage: zero initial state keeps U at zero") {
    auto sys = make_integrator_system(0.5, 1.0, 2.0);
    auto def = build_closed_loop(sys);
    Vec q0 = make_q(sys.layout, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    SolverConfig cfg;
    cfg.t_end = 5.0;
    auto arc = simulate(def, q0, cfg);
    auto trace = monitor_storage(arc, full_state_vp(sys.layout, sys.trigger_p),
                                 full_state_vc(sys.layout, sys.trigger_c));
    for (const auto& s : trace.samples) CHECK(s.u == doctest::Approx(0.0));
}

TEST_CASE("monitor_storage: divergent regime is flagged non-convergent") {
    auto sys = make_integrator_system(10.0, 1.0, 2.0);
    auto arc = run_integrator(10.0, 1.0, 2.0);
    auto trace = monitor_storage(arc, full_state_vp(sys.layout, sys.trigger_p),
                                 full_state_vc(sys.layout, sys.trigger_c));
    CHECK(trace.tail_nonconvergent);
}

TEST_CASE("grid spec walks points in row-major order") {
    GridSpec grid;
    grid.axes = {{0.0, 1.0, 3}, {-1.0, -1.0, 1}, {0.0, 10.0, 2}};
    REQUIRE(grid.total_points() == 6);
    CHECK(grid.point(0)(0) == 0.0);
    CHECK(grid.point(0)(1) == -1.0);
    CHECK(grid.point(0)(2) == 0.0);
    CHECK(grid.point(1)(2) == 10.0);
    CHECK(grid.point(2)(0) == 0.5);
    CHECK(grid.point(5)(0) == 1.0);
    CHECK(grid.point(5)(2) == 10.0);
}

namespace {

SmallGainProblem integrator_problem(double k_p = 0.5, bool decoupled = false) {
    auto sys = make_integrator_system(k_p, 1.0, 2.0);
    if (decoupled) {
        // Output feedback straight from the estimate: u = -k_p xhat_p, so
        // the plant flow on the zero-error slice is x_p' = -k_p x_p.
        sys.controller.g_c = [k_p](const Vec&, const Vec& xhat) { return (-k_p * xhat).eval(); };
        sys.controller.jac_xc = [](const Vec&, const Vec&) { return Eigen::MatrixXd::Zero(1, 1); };
        sys.controller.jac_xhat = [k_p](const Vec&, const Vec&) {
            return Eigen::MatrixXd::Constant(1, 1, -k_p);
        };
    }

    SmallGainProblem problem;
    problem.system = sys;
    problem.fns.v_p = sys.trigger_p.storage;
    problem.fns.v_c = sys.trigger_c.storage;
    problem.fns.chi_p = [](double s) { return 0.5 * s; };
    problem.fns.chi_c = [](double s) { return 0.5 * s; };
    problem.fns.alpha_p = [](double r) { return 0.4 * r * r; };
    problem.fns.alpha_c = [](double) { return 0.0; };  // no decay claim on the c side
    problem.fns.alpha_p_lower = [](double r) { return 0.5e-5 * r * r; };
    problem.fns.alpha_p_upper = [](double r) { return 0.5 * r * r; };
    problem.fns.alpha_c_lower = [](double r) { return 0.5e-5 * r * r; };
    problem.fns.alpha_c_upper = [](double r) { return 0.5 * r * r; };
    problem.fns.rho = [](double r) { return r; };
    return problem;
}

GridSpec slice_grid() {
    // x_p sweeps; errors pinned at zero; timers inside their windows;
    // x_c pinned at zero so the decoupled feedback acts alone.
    GridSpec grid;
    grid.axes = {{-10.0, 10.0, 21}, {0.0, 0.0, 1}, {0.5, 0.5, 1},
                 {0.0, 0.0, 1},    {0.0, 0.0, 1}, {0.5, 0.5, 1}};
    return grid;
}

}  // namespace

TEST_CASE("check_small_gain: composition condition holds for s/2 gains") {
    auto problem = integrator_problem();
    auto report = check_small_gain(problem, slice_grid(), RunPolicy::Serial);
    CHECK(report.count_for_item(4) == 0);
    CHECK(report.count_for_item(5) == 0);
}

TEST_CASE("check_small_gain: composition condition fails for an expanding gain") {
    auto problem = integrator_problem();
    problem.fns.chi_p = [](double s) { return 2.0 * s; };
    problem.fns.chi_c = [](double s) { return s; };
    problem.fns.rho = {};  // bracket cannot exist; skip item 5
    auto report = check_small_gain(problem, slice_grid(), RunPolicy::Serial);
    CHECK(report.count_for_item(4) == static_cast<int>(report.scalar_grid.size()));
}

TEST_CASE("check_small_gain: flow condition holds on the decoupled zero-error slice") {
    auto problem = integrator_problem(0.5, /*decoupled=*/true);
    auto report = check_small_gain(problem, slice_grid(), RunPolicy::Serial);
    CHECK(report.count_for_item(2) == 0);
    CHECK(report.count_for_item(1) == 0);
    CHECK(report.points_checked == 21);
}

TEST_CASE("check_small_gain: flow condition flags an overclaimed decay rate") {
    auto problem = integrator_problem(0.5, /*decoupled=*/true);
    problem.fns.alpha_p = [](double r) { return 0.6 * r * r; };  // claims more than -0.5 x^2
    auto report = check_small_gain(problem, slice_grid(), RunPolicy::Serial);
    CHECK(report.count_for_item(2) > 0);
}

TEST_CASE("check_small_gain: sandwich violation is reported with its bound") {
    auto problem = integrator_problem();
    problem.fns.alpha_p_upper = [](double r) { return 0.4 * r * r; };  // below V_p = r^2/2
    auto report = check_small_gain(problem, slice_grid(), RunPolicy::Serial);
    REQUIRE(report.count_for_item(1) > 0);
    bool found = false;
    for (const auto& v : report.violations)
        if (v.item == 1 && v.measured > v.required) found = true;
    CHECK(found);
}

TEST_CASE("check_small_gain: jump condition clean under ZOH, dirty under a doubling hold") {
    auto problem = integrator_problem();
    GridSpec grid;
    grid.axes = {{-4.0, 4.0, 5}, {-4.0, 4.0, 5}, {1.5, 1.5, 1},
                 {-4.0, 4.0, 5}, {-4.0, 4.0, 5}, {2.5, 2.5, 1}};
    auto clean = check_small_gain(problem, grid, RunPolicy::Serial);
    CHECK(clean.count_for_item(3) == 0);

    auto dirty = problem;
    dirty.system.plant_sampler = coefficient_hold(0.0, 0.0, 2.0, 0.0);  // doubles the estimate
    auto report = check_small_gain(dirty, grid, RunPolicy::Serial);
    CHECK(report.count_for_item(3) > 0);
}

TEST_CASE("check_small_gain: rho bracket violation") {
    auto problem = integrator_problem();
    problem.fns.rho = [](double r) { return 3.0 * r; };  // above chi_c^{-1}(r) = 2r
    auto report = check_small_gain(problem, slice_grid(), RunPolicy::Serial);
    CHECK(report.count_for_item(5) > 0);
}

TEST_CASE("check_small_gain: parallel and serial reports are identical") {
    auto problem = integrator_problem(0.5, /*decoupled=*/true);
    GridSpec grid;
    grid.axes = {{-10.0, 10.0, 9}, {-2.0, 2.0, 5}, {0.5, 1.5, 3},
                 {-10.0, 10.0, 5}, {-2.0, 2.0, 3}, {0.5, 2.5, 3}};
    auto serial = check_small_gain(problem, grid, RunPolicy::Serial);
    auto parallel = check_small_gain(problem, grid, RunPolicy::Parallel);
    CHECK(serial.points_checked == parallel.points_checked);
    REQUIRE(serial.violations.size() == parallel.violations.size());
    for (size_t k = 0; k < serial.violations.size(); ++k) {
        CHECK(serial.violations[k].item == parallel.violations[k].item);
        CHECK(serial.violations[k].grid_index == parallel.violations[k].grid_index);
        CHECK(serial.violations[k].measured == parallel.violations[k].measured);  // bit-identical
        CHECK(serial.violations[k].required == parallel.violations[k].required);
    }
}

TEST_CASE("reports serialize to JSON and CSV") {
    auto arc = synthetic_arc({{0.2, SamplerId::Plant}, {0.25, SamplerId::Plant}}, 1.0);
    auto report = verify_dwell(arc, 1.0, 2.0);
    auto json = to_json(report);
    CHECK(json.find("\"violations\"") != std::string::npos);
    CHECK(json.find("plant-gap") != std::string::npos);
    auto csv = violations_csv(report);
    CHECK(csv.find("check,") == 0);
    CHECK(csv.find("plant-gap") != std::string::npos);

    auto problem = integrator_problem();
    problem.fns.chi_p = [](double s) { return 2.0 * s; };
    problem.fns.rho = {};
    auto sg = check_small_gain(problem, slice_grid(), RunPolicy::Serial);
    auto sg_json = to_json(sg);
    CHECK(sg_json.find("\"points_checked\"") != std::string::npos);
    auto sg_csv = violations_csv(sg);
    CHECK(sg_csv.find("item,") == 0);
}
