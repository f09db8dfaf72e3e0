#include "etcsim/analysis.hpp"

#include "etcsim/table_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace etcsim {

// ---------------------------------------------------------------------------
// Dwell-time verification
// ---------------------------------------------------------------------------

namespace {

struct AttributedEvents {
    std::vector<HybridTime> plant;
    std::vector<HybridTime> controller;
    int simultaneous_pairs = 0;
};

AttributedEvents attribute_events(const HybridArc& arc) {
    AttributedEvents out;
    for (size_t k = 0; k < arc.events.size(); ++k) {
        const auto& ev = arc.events[k];
        if (ev.sampler == SamplerId::Plant || ev.sampler == SamplerId::Both)
            out.plant.push_back(ev.time);
        if (ev.sampler == SamplerId::Controller || ev.sampler == SamplerId::Both)
            out.controller.push_back(ev.time);
        if (k > 0 && ev.cause == TriggerCause::ForcedSimultaneous &&
            arc.events[k - 1].cause == TriggerCause::ForcedSimultaneous &&
            arc.events[k - 1].time.t == ev.time.t &&
            arc.events[k - 1].sampler != ev.sampler)
            ++out.simultaneous_pairs;
    }
    return out;
}

void check_gaps(const std::vector<HybridTime>& times, double tau, double tol,
                const std::string& name, double& min_gap,
                std::vector<DwellViolation>& violations) {
    min_gap = 0.0;
    for (size_t k = 0; k + 1 < times.size(); ++k) {
        const double gap = times[k + 1].t - times[k].t;
        if (k == 0 || gap < min_gap) min_gap = gap;
        if (gap < tau - tol)
            violations.push_back({name, times[k], times[k + 1], gap, tau - tol});
    }
}

}  // namespace

DwellTimeReport verify_dwell(const HybridArc& arc, const DwellCheckConfig& config) {
    DwellTimeReport report;
    report.tau_p = config.tau_p;
    report.tau_c = config.tau_c;
    report.tolerance = config.tolerance;
    report.tau_avg = 0.5 * std::min(config.tau_p, config.tau_c);
    if (report.tau_avg > 0.0) {
        report.gamma_slope = 1.0 / (1.0 + 1.0 / report.tau_avg);
        report.horizon_offset = report.gamma_slope;
    }

    const auto attributed = attribute_events(arc);
    report.plant_jumps = static_cast<int>(attributed.plant.size());
    report.controller_jumps = static_cast<int>(attributed.controller.size());
    report.simultaneous_pairs = attributed.simultaneous_pairs;

    check_gaps(attributed.plant, config.tau_p, config.tolerance, "plant-gap",
               report.min_plant_gap, report.violations);
    check_gaps(attributed.controller, config.tau_c, config.tolerance, "controller-gap",
               report.min_controller_gap, report.violations);

    // Average dwell inequality over every hybrid-time pair of the domain.
    // For fixed segments i < j the inequality is tightest at s = end of
    // segment i and t = start of segment j, so checking those extremal
    // boundary points covers all pairs.
    if (report.tau_avg > 0.0) {
        for (size_t i = 0; i < arc.segments.size(); ++i) {
            for (size_t j = i + 1; j < arc.segments.size(); ++j) {
                const double gap = arc.segments[j].t_start - arc.segments[i].t_end;
                const int dj = arc.segments[j].jump_index - arc.segments[i].jump_index;
                const double bound = (gap + config.tolerance) / report.tau_avg + 1.0;
                if (static_cast<double>(dj) > bound) {
                    report.violations.push_back(
                        {"average-dwell",
                         {arc.segments[i].t_end, arc.segments[i].jump_index},
                         {arc.segments[j].t_start, arc.segments[j].jump_index},
                         static_cast<double>(dj), bound});
                }
            }
        }
    }

    // Timer excursions, when we know where the timers live.
    if (config.layout) {
        const auto& L = *config.layout;
        for (const auto& seg : arc.segments) {
            for (const auto& s : seg.samples) {
                const double ep = L.eta_p(s.state);
                const double ec = L.eta_c(s.state);
                report.max_eta_p = std::max(report.max_eta_p, ep);
                report.max_eta_c = std::max(report.max_eta_c, ec);
                if (config.tau_pi && ep > *config.tau_pi + config.tolerance)
                    report.violations.push_back({"timer-range",
                                                 {s.t, seg.jump_index},
                                                 {s.t, seg.jump_index},
                                                 ep,
                                                 *config.tau_pi + config.tolerance});
                if (config.tau_kappa && ec > *config.tau_kappa + config.tolerance)
                    report.violations.push_back({"timer-range",
                                                 {s.t, seg.jump_index},
                                                 {s.t, seg.jump_index},
                                                 ec,
                                                 *config.tau_kappa + config.tolerance});
            }
        }
    }
    return report;
}

DwellTimeReport verify_dwell(const HybridArc& arc, double tau_p, double tau_c) {
    DwellCheckConfig config;
    config.tau_p = tau_p;
    config.tau_c = tau_c;
    return verify_dwell(arc, config);
}

// ---------------------------------------------------------------------------
// Storage monitoring
// ---------------------------------------------------------------------------

StorageTrace monitor_storage(const HybridArc& arc, const StateFn& v_p, const StateFn& v_c,
                             const ScalarFn& rho, double increase_tolerance) {
    const ScalarFn rho_eff = rho ? rho : [](double s) { return s; };
    StorageTrace trace;

    for (const auto& seg : arc.segments) {
        for (const auto& s : seg.samples) {
            StorageSample sample;
            sample.time = {s.t, seg.jump_index};
            sample.v_p = v_p(s.state);
            sample.v_c = v_c(s.state);
            sample.u = std::max(sample.v_p, rho_eff(sample.v_c));
            trace.samples.push_back(sample);
        }
    }

    for (size_t k = 0; k + 1 < arc.segments.size(); ++k) {
        const auto& pre = arc.segments[k].samples.back();
        const auto& post = arc.segments[k + 1].samples.front();
        const HybridTime at{pre.t, arc.segments[k].jump_index};
        const double vp0 = v_p(pre.state), vp1 = v_p(post.state);
        const double vc0 = v_c(pre.state), vc1 = v_c(post.state);
        const double u0 = std::max(vp0, rho_eff(vc0)), u1 = std::max(vp1, rho_eff(vc1));
        if (vp1 > vp0 + increase_tolerance) trace.flags.push_back({at, "V_p", vp0, vp1});
        if (vc1 > vc0 + increase_tolerance) trace.flags.push_back({at, "V_c", vc0, vc1});
        if (u1 > u0 + increase_tolerance) trace.flags.push_back({at, "U", u0, u1});
    }

    const double horizon = arc.total_time();
    if (horizon > 0.0) {
        double head = 0.0, tail = 0.0;
        for (const auto& s : trace.samples) {
            double& bucket = s.time.t < 0.5 * horizon ? head : tail;
            bucket = std::max(bucket, s.u);
        }
        trace.tail_nonconvergent = tail > 0.0 && tail >= head;
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Clarke directional derivative estimate
// ---------------------------------------------------------------------------

double clarke_estimate(const std::function<double(const StateVec&)>& f, const StateVec& x,
                       const StateVec& v, const ClarkeConfig& config) {
    std::mt19937 rng(config.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    auto eval = [&](const StateVec& p) {
        const double value = f(p);
        if (!std::isfinite(value)) throw StepFailure("non-finite evaluation in clarke_estimate");
        return value;
    };

    double best = -std::numeric_limits<double>::infinity();
    StateVec y = x;      // base point, perturbed in place
    StateVec probe = x;  // y + h v, assembled in place
    for (int n = 0; n <= config.n_samples; ++n) {
        if (n > 0) {
            for (int i = 0; i < x.size(); ++i) y(i) = x(i) + config.y_radius * unit(rng);
        } else {
            y = x;  // always include the base point itself
        }
        const double fy = eval(y);
        for (double h : config.h_grid) {
            probe = y;
            probe.noalias() += h * v;
            const double d = (eval(probe) - fy) / h;
            best = std::max(best, d);
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Small-gain grid checking
// ---------------------------------------------------------------------------

long GridSpec::total_points() const {
    long total = 1;
    for (const auto& a : axes) total *= std::max(1, a.points);
    return total;
}

StateVec GridSpec::point(long index) const {
    StateVec p(static_cast<int>(axes.size()));
    long rem = index;
    for (int k = static_cast<int>(axes.size()) - 1; k >= 0; --k) {
        const int n = std::max(1, axes[k].points);
        const long i = rem % n;
        rem /= n;
        p(k) = n == 1 ? axes[k].lo
                      : axes[k].lo + (axes[k].hi - axes[k].lo) *
                                         (static_cast<double>(i) / static_cast<double>(n - 1));
    }
    return p;
}

int SmallGainReport::count_for_item(int item) const {
    int n = 0;
    for (const auto& v : violations)
        if (v.item == item) ++n;
    return n;
}

namespace {

StateVec pack_local(const LocalState& q) {
    StateVec p(q.x.size() + q.e.size() + 1);
    p.head(q.x.size()) = q.x;
    p.segment(q.x.size(), q.e.size()) = q.e;
    p(p.size() - 1) = q.eta;
    return p;
}

/// |q|_A with A = {x = 0, e = 0, eta in [0, tau_max]}.
double attractor_distance(const LocalState& q, double tau_max) {
    const double eta_excess = std::max({0.0, -q.eta, q.eta - tau_max});
    return std::sqrt(q.x.squaredNorm() + q.e.squaredNorm() + eta_excess * eta_excess);
}

/// Monotone numeric inverse of a class-Kinf function; +inf when the
/// function never reaches r (e.g. the zero gain).
double kinf_inverse(const ScalarFn& chi, double r) {
    double hi = 1.0;
    for (int k = 0; k < 200 && chi(hi) < r; ++k) hi *= 2.0;
    if (chi(hi) < r) return std::numeric_limits<double>::infinity();
    double lo = 0.0;
    for (int k = 0; k < 100; ++k) {
        const double mid = 0.5 * (lo + hi);
        (chi(mid) < r ? lo : hi) = mid;
    }
    return hi;
}

std::vector<double> default_scalar_grid() {
    std::vector<double> grid;
    for (int k = 0; k < 21; ++k) grid.push_back(std::pow(10.0, -2.0 + 4.0 * k / 20.0));
    return grid;
}

/// Per-point worker for items 1-3; returns the violations at this point.
std::vector<SmallGainViolation> check_grid_point(const SmallGainProblem& problem,
                                                 const HybridSystemDef& def, long index,
                                                 const StateVec& q) {
    std::vector<SmallGainViolation> out;
    const auto& sys = problem.system;
    const auto& L = sys.layout;
    const auto& fns = problem.fns;
    const double margin = problem.margin;

    const LocalState q_p = L.plant_local(q);
    const LocalState q_c = L.controller_local(q);
    const double vp = fns.v_p ? fns.v_p(q_p) : 0.0;
    const double vc = fns.v_c ? fns.v_c(q_c) : 0.0;
    const double rp = attractor_distance(q_p, sys.trigger_p.tau_max);
    const double rc = attractor_distance(q_c, sys.trigger_c.tau_max);

    auto add = [&](int item, const std::string& what, double measured, double required) {
        out.push_back({item, index, what, measured, required, q});
    };

    // Item 1: sandwich bounds.
    if (fns.v_p && fns.alpha_p_lower && fns.alpha_p_upper) {
        if (vp < fns.alpha_p_lower(rp) - margin)
            add(1, "V_p below its lower envelope", vp, fns.alpha_p_lower(rp));
        if (vp > fns.alpha_p_upper(rp) + margin)
            add(1, "V_p above its upper envelope", vp, fns.alpha_p_upper(rp));
    }
    if (fns.v_c && fns.alpha_c_lower && fns.alpha_c_upper) {
        if (vc < fns.alpha_c_lower(rc) - margin)
            add(1, "V_c below its lower envelope", vc, fns.alpha_c_lower(rc));
        if (vc > fns.alpha_c_upper(rc) + margin)
            add(1, "V_c above its upper envelope", vc, fns.alpha_c_upper(rc));
    }

    // Item 2: gain-triggered decay along the flow, on the flow set only.
    if (fns.chi_p && fns.chi_c && fns.alpha_p && fns.alpha_c && def.flow_set(q)) {
        try {
            const StateVec dq = closed_loop_flow(sys, q);
            ClarkeConfig clarke = problem.clarke;
            clarke.seed = problem.clarke.seed + 2654435761u * static_cast<unsigned>(index + 1);

            if (fns.v_p && vp >= fns.chi_p(vc)) {
                const int np = L.n_p;
                LocalState buf = q_p;  // reused across the sampling loop
                auto f = [&](const StateVec& y) {
                    buf.x = y.head(np);
                    buf.e = y.segment(np, np);
                    buf.eta = y(2 * np);
                    return fns.v_p(buf);
                };
                const StateVec x0 = pack_local(q_p);
                const StateVec dir = dq.head(2 * np + 1);
                const double est = clarke_estimate(f, x0, dir, clarke);
                const double bound = -fns.alpha_p(rp);
                if (est > bound + margin)
                    add(2, "V_p flow derivative above -alpha_p", est, bound);
            }
            if (fns.v_c && vc >= fns.chi_c(vp)) {
                const int nc = L.n_c, nu = L.n_u;
                LocalState buf = q_c;
                auto f = [&](const StateVec& y) {
                    buf.x = y.head(nc);
                    buf.e = y.segment(nc, nu);
                    buf.eta = y(nc + nu);
                    return fns.v_c(buf);
                };
                const StateVec x0 = pack_local(q_c);
                const StateVec dir = dq.tail(nc + nu + 1);
                const double est = clarke_estimate(f, x0, dir, clarke);
                const double bound = -fns.alpha_c(rc);
                if (est > bound + margin)
                    add(2, "V_c flow derivative above -alpha_c", est, bound);
            }
        } catch (const StepFailure&) {
            add(2, "flow evaluation failed", std::numeric_limits<double>::quiet_NaN(), 0.0);
        }
    }

    // Item 3: storage non-increase across synthesized jumps.
    if (fns.v_p && fns.v_c) {
        const auto dp = trigger_fired(q_p, sys.trigger_p);
        const auto dc = trigger_fired(q_c, sys.trigger_c);
        if (dp.fired || dc.fired) {
            for (const auto& succ : closed_loop_jump(sys, q, dp.fired, dc.fired)) {
                const double vp_after = fns.v_p(L.plant_local(succ.state));
                const double vc_after = fns.v_c(L.controller_local(succ.state));
                if (vp_after > vp + margin) add(3, "V_p increased across a jump", vp_after, vp);
                if (vc_after > vc + margin) add(3, "V_c increased across a jump", vc_after, vc);
            }
        }
    }
    return out;
}

}  // namespace

SmallGainReport check_small_gain(const SmallGainProblem& problem, const GridSpec& grid,
                                 RunPolicy policy) {
    SmallGainReport report;
    report.axes = grid.axes;
    report.scalar_grid = problem.scalar_grid.empty() ? default_scalar_grid() : problem.scalar_grid;

    const auto& fns = problem.fns;
    if (fns.v_p && fns.alpha_p_lower && fns.alpha_p_upper) report.items_checked.push_back(1);
    if (fns.chi_p && fns.chi_c && fns.alpha_p && fns.alpha_c) report.items_checked.push_back(2);
    if (fns.v_p && fns.v_c) report.items_checked.push_back(3);
    if (fns.chi_p && fns.chi_c) report.items_checked.push_back(4);
    if (fns.chi_p && fns.chi_c && fns.rho) report.items_checked.push_back(5);

    const HybridSystemDef def = build_closed_loop(problem.system);
    const long total = grid.total_points();
    report.points_checked = total;

    // Grid points are independent; violations are gathered per point and
    // merged in grid order so serial and parallel runs agree exactly.
    std::vector<std::vector<SmallGainViolation>> per_point(static_cast<size_t>(total));
    if (policy == RunPolicy::Parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 64)
#endif
        for (long i = 0; i < total; ++i)
            per_point[static_cast<size_t>(i)] = check_grid_point(problem, def, i, grid.point(i));
    } else {
        for (long i = 0; i < total; ++i)
            per_point[static_cast<size_t>(i)] = check_grid_point(problem, def, i, grid.point(i));
    }
    for (auto& vs : per_point)
        for (auto& v : vs) report.violations.push_back(std::move(v));

    // Items 4 and 5 live on the scalar grid.
    if (fns.chi_p && fns.chi_c) {
        for (double s : report.scalar_grid) {
            if (s <= 0.0) continue;
            const double composed = fns.chi_p(fns.chi_c(s));
            if (!(composed < s)) {
                report.violations.push_back(
                    {4, -1, "chi_p(chi_c(s)) not below s", composed, s, StateVec()});
            }
        }
        if (fns.rho) {
            for (double r : report.scalar_grid) {
                if (r <= 0.0) continue;
                const double rho_r = fns.rho(r);
                const double lower = fns.chi_p(r);
                const double upper = kinf_inverse(fns.chi_c, r);
                if (!(rho_r > lower))
                    report.violations.push_back(
                        {5, -1, "rho(r) not above chi_p(r)", rho_r, lower, StateVec()});
                if (!(rho_r < upper))
                    report.violations.push_back(
                        {5, -1, "rho(r) not below chi_c^{-1}(r)", rho_r, upper, StateVec()});
                const double h = 1e-6 * std::max(1.0, r);
                const double drho = (fns.rho(r + h) - fns.rho(std::max(0.0, r - h))) /
                                    (r + h - std::max(0.0, r - h));
                if (!(drho > 0.0))
                    report.violations.push_back(
                        {5, -1, "rho'(r) not positive", drho, 0.0, StateVec()});
            }
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

nlohmann::json time_json(const HybridTime& ht) { return {{"t", ht.t}, {"j", ht.j}}; }

}  // namespace

std::string to_json(const DwellTimeReport& report) {
    nlohmann::json j;
    j["tau_p"] = report.tau_p;
    j["tau_c"] = report.tau_c;
    j["tau_avg"] = report.tau_avg;
    j["tolerance"] = report.tolerance;
    j["plant_jumps"] = report.plant_jumps;
    j["controller_jumps"] = report.controller_jumps;
    j["simultaneous_pairs"] = report.simultaneous_pairs;
    j["min_plant_gap"] = report.min_plant_gap;
    j["min_controller_gap"] = report.min_controller_gap;
    j["max_eta_p"] = report.max_eta_p;
    j["max_eta_c"] = report.max_eta_c;
    j["gamma_slope"] = report.gamma_slope;
    j["horizon_offset"] = report.horizon_offset;
    j["clean"] = report.clean();
    j["violations"] = nlohmann::json::array();
    for (const auto& v : report.violations) {
        j["violations"].push_back({{"check", v.check},
                                   {"first", time_json(v.first)},
                                   {"second", time_json(v.second)},
                                   {"observed", v.observed},
                                   {"required", v.required}});
    }
    return j.dump(2);
}

std::string to_json(const StorageTrace& trace) {
    nlohmann::json j;
    j["tail_nonconvergent"] = trace.tail_nonconvergent;
    j["clean"] = trace.clean();
    j["samples"] = nlohmann::json::array();
    for (const auto& s : trace.samples) {
        j["samples"].push_back(
            {{"t", s.time.t}, {"j", s.time.j}, {"V_p", s.v_p}, {"V_c", s.v_c}, {"U", s.u}});
    }
    j["flags"] = nlohmann::json::array();
    for (const auto& f : trace.flags) {
        j["flags"].push_back({{"time", time_json(f.time)},
                              {"which", f.which},
                              {"before", f.before},
                              {"after", f.after}});
    }
    return j.dump(2);
}

std::string to_json(const SmallGainReport& report) {
    nlohmann::json j;
    j["points_checked"] = report.points_checked;
    j["items_checked"] = report.items_checked;
    j["scalar_grid"] = report.scalar_grid;
    j["clean"] = report.clean();
    j["axes"] = nlohmann::json::array();
    for (const auto& a : report.axes)
        j["axes"].push_back({{"lo", a.lo}, {"hi", a.hi}, {"points", a.points}});
    j["violations"] = nlohmann::json::array();
    for (const auto& v : report.violations) {
        nlohmann::json entry = {{"item", v.item},
                                {"grid_index", v.grid_index},
                                {"what", v.what},
                                {"measured", v.measured},
                                {"required", v.required}};
        if (v.state.size() > 0) {
            entry["state"] = std::vector<double>(v.state.data(), v.state.data() + v.state.size());
        }
        j["violations"].push_back(entry);
    }
    return j.dump(2);
}

std::string violations_csv(const DwellTimeReport& report) {
    std::ostringstream out;
    out << "check,first_t,first_j,second_t,second_j,observed,required\n";
    for (const auto& v : report.violations) {
        out << csv_escape(v.check) << ',' << format_double(v.first.t) << ',' << v.first.j << ','
            << format_double(v.second.t) << ',' << v.second.j << ',' << format_double(v.observed)
            << ',' << format_double(v.required) << '\n';
    }
    return out.str();
}

std::string violations_csv(const SmallGainReport& report) {
    std::ostringstream out;
    out << "item,grid_index,what,measured,required\n";
    for (const auto& v : report.violations) {
        out << v.item << ',' << v.grid_index << ',' << csv_escape(v.what) << ','
            << format_double(v.measured) << ',' << format_double(v.required) << '\n';
    }
    return out.str();
}

}  // namespace etcsim
