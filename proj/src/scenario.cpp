#include "etcsim/scenario.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace etcsim {

namespace {

Eigen::MatrixXd matrix_from_rows(const ConfigMap& map, const std::string& key) {
    // Rows separated by ';', entries by ','.
    auto text = map.get(key);
    if (!text) throw ConfigError("missing required matrix '" + key + "'", 0, key);
    std::vector<std::vector<double>> rows;
    std::stringstream ss(*text);
    std::string row;
    while (std::getline(ss, row, ';')) {
        std::vector<double> entries;
        std::stringstream rs(row);
        std::string cell;
        while (std::getline(rs, cell, ',')) {
            if (cell.find_first_not_of(" \t") == std::string::npos) continue;
            entries.push_back(std::strtod(cell.c_str(), nullptr));
        }
        if (!entries.empty()) rows.push_back(entries);
    }
    if (rows.empty()) throw ConfigError("empty matrix '" + key + "'", map.line_of(key), key);
    Eigen::MatrixXd m(rows.size(), rows[0].size());
    for (size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows[0].size())
            throw ConfigError("ragged matrix '" + key + "'", map.line_of(key), key);
        for (size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
    }
    return m;
}

Eigen::VectorXd vector_from_list(const std::vector<double>& values) {
    Eigen::VectorXd v(values.size());
    for (size_t k = 0; k < values.size(); ++k) v(k) = values[k];
    return v;
}

HoldKind hold_kind_from(const std::string& name, int line) {
    if (name == "zoh") return HoldKind::Zoh;
    if (name == "model-based") return HoldKind::ModelBased;
    if (name == "custom") return HoldKind::Coefficients;
    throw ConfigError("unknown hold '" + name + "' (expected zoh | model-based | custom)", line);
}

}  // namespace

void ScenarioConfig::validate() const {
    if (!(tau_p > 0.0) || !(tau_p < tau_pi))
        throw ConfigError("sampler.plant: tau_min must be < tau_max and positive (tau_min=" +
                          format_double(tau_p) + ", tau_max=" + format_double(tau_pi) + ")");
    if (!(tau_c > 0.0) || !(tau_c < tau_kappa))
        throw ConfigError("sampler.controller: tau_min must be < tau_max and positive (tau_min=" +
                          format_double(tau_c) + ", tau_max=" + format_double(tau_kappa) + ")");
    if (beta_p < 0.0 || beta_c < 0.0) throw ConfigError("storage: beta must be >= 0");
    if (x_p0.size() == 0 || x_c0.size() == 0)
        throw ConfigError("initial: x_p and x_c must be non-empty");
    if (e_p0.size() != x_p0.size())
        throw ConfigError("initial: e_p dimension must match x_p");
    if (plant_hold.kind == HoldKind::ModelBased && controller_hold.kind == HoldKind::ModelBased)
        throw ConfigError("sampler.controller: model-based hold is plant-side only");
    try {
        solver.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

ScenarioConfig builtin_integrator_scenario(double k_p, double tau_p, double tau_c) {
    ScenarioConfig cfg;
    cfg.name = "single-integrator";
    cfg.plant_kind = PlantKind::SingleIntegrator;
    cfg.controller_kind = ControllerKind::Proportional;
    cfg.k_p = k_p;
    cfg.tau_p = tau_p;
    cfg.tau_pi = 60.0;
    cfg.tau_c = tau_c;
    cfg.tau_kappa = 120.0;
    cfg.beta_p = 1e-5;
    cfg.beta_c = 1e-5;
    cfg.x_p0 = Eigen::VectorXd::Constant(1, 10.0);
    cfg.e_p0 = Eigen::VectorXd::Zero(1);
    cfg.x_c0 = Eigen::VectorXd::Constant(1, 10.0);
    cfg.e_u0 = Eigen::VectorXd::Zero(1);
    cfg.solver.t_end = 60.0;
    cfg.solver.max_step = 1e-2;
    cfg.solver.record_stride = 1e-2;
    return cfg;
}

ScenarioConfig builtin_example(const std::string& name) {
    if (name == "fig2") {
        auto cfg = builtin_integrator_scenario(10.0, 1.0, 2.0);
        cfg.name = "fig2";
        return cfg;
    }
    if (name == "fig34") {
        auto cfg = builtin_integrator_scenario(0.5, 1.0, 2.0);
        cfg.name = "fig34";
        return cfg;
    }
    if (name == "fig56") {
        auto cfg = builtin_integrator_scenario(0.5, 0.2, 0.3);
        cfg.name = "fig56";
        return cfg;
    }
    throw ConfigError("unknown example '" + name + "' (expected fig2 | fig34 | fig56)");
}

namespace {

SamplerModel make_hold(const HoldConfig& cfg, const PlantModel& plant, bool plant_side) {
    switch (cfg.kind) {
        case HoldKind::Zoh: return zero_order_hold();
        case HoldKind::ModelBased:
            if (!plant_side) throw ConfigError("model-based hold is plant-side only");
            return model_based_hold(plant);
        case HoldKind::Coefficients:
            return coefficient_hold(cfg.a_held, cfg.a_signal, cfg.b_held, cfg.b_signal);
    }
    return zero_order_hold();
}

}  // namespace

EtcSystem build_etc_system(const ScenarioConfig& config) {
    EtcSystem sys;

    const int n_p = static_cast<int>(config.x_p0.size());
    switch (config.plant_kind) {
        case PlantKind::SingleIntegrator: {
            if (n_p != 1) throw ConfigError("plant: single-integrator is one-dimensional");
            sys.plant.n_p = 1;
            sys.plant.n_m = 1;
            sys.plant.n_u = 1;
            sys.plant.f_p = [](const Vec&, const Vec& u_hat) { return u_hat; };
            sys.plant.g_p = [](const Vec& x) { return x; };
            break;
        }
        case PlantKind::Linear: {
            const Eigen::MatrixXd a = config.plant_a;
            const Eigen::MatrixXd b = config.plant_b;
            if (a.rows() != n_p || a.cols() != n_p || b.rows() != n_p)
                throw ConfigError("plant: A must be n_p x n_p and B must have n_p rows");
            sys.plant.n_p = n_p;
            sys.plant.n_m = n_p;  // identity measurement
            sys.plant.n_u = static_cast<int>(b.cols());
            sys.plant.f_p = [a, b](const Vec& x, const Vec& u_hat) {
                return (a * x + b * u_hat).eval();
            };
            sys.plant.g_p = [](const Vec& x) { return x; };
            break;
        }
    }

    const int n_c = static_cast<int>(config.x_c0.size());
    switch (config.controller_kind) {
        case ControllerKind::Proportional: {
            if (n_c != sys.plant.n_p)
                throw ConfigError("controller: proportional tracking needs n_c == n_p");
            if (sys.plant.n_u != n_c)
                throw ConfigError("controller: proportional output needs n_u == n_c");
            const double k_p = config.k_p;
            sys.controller.n_c = n_c;
            sys.controller.f_c = [](const Vec& x_c, const Vec& xhat) {
                return (xhat - x_c).eval();
            };
            sys.controller.g_c = [k_p](const Vec& x_c, const Vec&) {
                return (-k_p * x_c).eval();
            };
            sys.controller.jac_xc = [k_p, n_c](const Vec&, const Vec&) {
                return (-k_p * Eigen::MatrixXd::Identity(n_c, n_c)).eval();
            };
            sys.controller.jac_xhat = [n_c, n_p = sys.plant.n_p](const Vec&, const Vec&) {
                return Eigen::MatrixXd::Zero(n_c, n_p).eval();
            };
            break;
        }
        case ControllerKind::Linear: {
            const Eigen::MatrixXd a = config.ctrl_a, b = config.ctrl_b;
            const Eigen::MatrixXd c = config.ctrl_c, d = config.ctrl_d;
            if (a.rows() != n_c || a.cols() != n_c || b.rows() != n_c ||
                b.cols() != sys.plant.n_p || c.cols() != n_c || d.rows() != c.rows() ||
                d.cols() != sys.plant.n_p || c.rows() != sys.plant.n_u)
                throw ConfigError("controller: linear matrices have inconsistent dimensions");
            sys.controller.n_c = n_c;
            sys.controller.f_c = [a, b](const Vec& x_c, const Vec& xhat) {
                return (a * x_c + b * xhat).eval();
            };
            sys.controller.g_c = [c, d](const Vec& x_c, const Vec& xhat) {
                return (c * x_c + d * xhat).eval();
            };
            sys.controller.jac_xc = [c](const Vec&, const Vec&) { return c; };
            sys.controller.jac_xhat = [d](const Vec&, const Vec&) { return d; };
            break;
        }
    }

    sys.plant_sampler = make_hold(config.plant_hold, sys.plant, true);
    sys.controller_sampler = make_hold(config.controller_hold, sys.plant, false);

    QuadraticSpecParams params;
    params.beta_p = config.beta_p;
    params.beta_c = config.beta_c;
    params.tau_p = config.tau_p;
    params.tau_pi = config.tau_pi;
    params.tau_c = config.tau_c;
    params.tau_kappa = config.tau_kappa;
    params.n_p = sys.plant.n_p;
    params.n_c = sys.controller.n_c;
    auto pair = builtin_quadratic_specs(params);
    sys.trigger_p = pair.plant;
    sys.trigger_c = pair.controller;
    sys.trigger_p.timer_slack = config.solver.event_tolerance;
    sys.trigger_c.timer_slack = config.solver.event_tolerance;

    sys.layout = StateLayout{sys.plant.n_p, sys.controller.n_c, sys.plant.n_u};
    return sys;
}

StorageEvaluators make_storage_evaluators(const ScenarioConfig& config) {
    auto sys = build_etc_system(config);
    const StateLayout layout = sys.layout;
    StorageEvaluators ev;
    ev.v_p = [layout, storage = sys.trigger_p.storage](const StateVec& q) {
        return storage(layout.plant_local(q));
    };
    ev.w_p = [layout, threshold = sys.trigger_p.threshold](const StateVec& q) {
        return threshold(layout.plant_local(q).e);
    };
    ev.v_c = [layout, storage = sys.trigger_c.storage](const StateVec& q) {
        return storage(layout.controller_local(q));
    };
    ev.w_u = [layout, threshold = sys.trigger_c.threshold](const StateVec& q) {
        return threshold(layout.controller_local(q).e);
    };
    return ev;
}

namespace {

void append_vector_columns(std::vector<std::string>& header, const std::string& base, int n) {
    if (n == 1) {
        header.push_back(base);
    } else {
        for (int k = 0; k < n; ++k) header.push_back(base + std::to_string(k));
    }
}

Table make_trajectory_table(const HybridArc& arc, const StateLayout& layout,
                            const StorageEvaluators& ev) {
    Table table;
    table.header = {"t", "j"};
    append_vector_columns(table.header, "x_p", layout.n_p);
    append_vector_columns(table.header, "e_p", layout.n_p);
    table.header.push_back("eta_p");
    append_vector_columns(table.header, "x_c", layout.n_c);
    append_vector_columns(table.header, "e_u", layout.n_u);
    table.header.push_back("eta_c");
    table.header.insert(table.header.end(), {"V_p", "W_p", "V_c", "W_u", "U"});

    for (const auto& seg : arc.segments) {
        for (const auto& s : seg.samples) {
            std::vector<double> row;
            row.reserve(table.header.size());
            row.push_back(s.t);
            row.push_back(static_cast<double>(seg.jump_index));
            for (int k = 0; k < layout.n_p; ++k) row.push_back(layout.x_p(s.state)(k));
            for (int k = 0; k < layout.n_p; ++k) row.push_back(layout.e_p(s.state)(k));
            row.push_back(layout.eta_p(s.state));
            for (int k = 0; k < layout.n_c; ++k) row.push_back(layout.x_c(s.state)(k));
            for (int k = 0; k < layout.n_u; ++k) row.push_back(layout.e_u(s.state)(k));
            row.push_back(layout.eta_c(s.state));
            const double vp = ev.v_p(s.state), wp = ev.w_p(s.state);
            const double vc = ev.v_c(s.state), wu = ev.w_u(s.state);
            row.push_back(vp);
            row.push_back(wp);
            row.push_back(vc);
            row.push_back(wu);
            row.push_back(std::max(vp, vc));  // identity-rho storage envelope
            table.rows.push_back(std::move(row));
        }
    }
    return table;
}

Table make_event_table(const HybridArc& arc) {
    Table table;
    table.header = {"t", "j", "sampler", "cause"};
    for (const auto& ev : arc.events) {
        table.rows.push_back({ev.time.t, static_cast<double>(ev.time.j)});
        table.text.push_back({to_string(ev.sampler), to_string(ev.cause)});
    }
    return table;
}

std::vector<int> columns_for(const Table& table, const std::string& base) {
    std::vector<int> cols;
    for (size_t k = 0; k < table.header.size(); ++k) {
        const auto& h = table.header[k];
        if (h == base) {
            cols.push_back(static_cast<int>(k));
        } else if (h.size() > base.size() && h.rfind(base, 0) == 0) {
            const std::string suffix = h.substr(base.size());
            if (std::all_of(suffix.begin(), suffix.end(),
                            [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
                cols.push_back(static_cast<int>(k));
        }
    }
    return cols;
}

struct GapStats {
    int count = 0;
    double min_gap = 0.0;
    double mean_gap = 0.0;
};

GapStats gap_stats(const std::vector<double>& times) {
    GapStats st;
    st.count = static_cast<int>(times.size());
    if (times.size() < 2) return st;
    double sum = 0.0;
    for (size_t k = 0; k + 1 < times.size(); ++k) {
        const double gap = times[k + 1] - times[k];
        sum += gap;
        if (k == 0 || gap < st.min_gap) st.min_gap = gap;
    }
    st.mean_gap = sum / static_cast<double>(times.size() - 1);
    return st;
}

}  // namespace

RunSummary summarize_tables(const std::string& scenario, const Table& trajectory,
                            const Table& events, const std::string& terminal_status) {
    RunSummary s;
    s.scenario = scenario;
    s.terminal_status = terminal_status;

    std::vector<double> plant_times, ctrl_times;
    for (size_t r = 0; r < events.rows.size(); ++r) {
        const std::string& sampler = events.text[r][0];
        if (sampler == "plant" || sampler == "both") plant_times.push_back(events.rows[r][0]);
        if (sampler == "controller" || sampler == "both") ctrl_times.push_back(events.rows[r][0]);
    }
    const auto plant_stats = gap_stats(plant_times);
    const auto ctrl_stats = gap_stats(ctrl_times);
    s.plant_events = plant_stats.count;
    s.controller_events = ctrl_stats.count;
    s.total_events = static_cast<int>(events.rows.size());
    s.min_plant_gap = plant_stats.min_gap;
    s.mean_plant_gap = plant_stats.mean_gap;
    s.min_controller_gap = ctrl_stats.min_gap;
    s.mean_controller_gap = ctrl_stats.mean_gap;

    const auto ep_cols = columns_for(trajectory, "e_p");
    const auto eu_cols = columns_for(trajectory, "e_u");
    const auto xp_cols = columns_for(trajectory, "x_p");
    for (const auto& row : trajectory.rows) {
        double ep2 = 0.0, eu2 = 0.0;
        for (int c : ep_cols) ep2 += row[c] * row[c];
        for (int c : eu_cols) eu2 += row[c] * row[c];
        s.max_abs_e_p = std::max(s.max_abs_e_p, std::sqrt(ep2));
        s.max_abs_e_u = std::max(s.max_abs_e_u, std::sqrt(eu2));
    }

    // Sign changes of the first plant coordinate; zero samples do not count.
    if (!xp_cols.empty()) {
        int last_sign = 0;
        for (const auto& row : trajectory.rows) {
            const double x = row[xp_cols[0]];
            const int sign = x > 0.0 ? 1 : (x < 0.0 ? -1 : 0);
            if (sign != 0) {
                if (last_sign != 0 && sign != last_sign) ++s.x_p_sign_changes;
                last_sign = sign;
            }
        }
    }

    if (!trajectory.rows.empty()) {
        s.t_final = trajectory.rows.back()[0];
        s.j_final = static_cast<int>(trajectory.rows.back()[1]);
    }
    return s;
}

std::string to_json(const RunSummary& s) {
    nlohmann::json j;
    j["scenario"] = s.scenario;
    j["terminal_status"] = s.terminal_status;
    j["plant_events"] = s.plant_events;
    j["controller_events"] = s.controller_events;
    j["total_events"] = s.total_events;
    j["min_plant_gap"] = s.min_plant_gap;
    j["mean_plant_gap"] = s.mean_plant_gap;
    j["min_controller_gap"] = s.min_controller_gap;
    j["mean_controller_gap"] = s.mean_controller_gap;
    j["max_abs_e_p"] = s.max_abs_e_p;
    j["max_abs_e_u"] = s.max_abs_e_u;
    j["x_p_sign_changes"] = s.x_p_sign_changes;
    j["t_final"] = s.t_final;
    j["j_final"] = s.j_final;
    return j.dump(2);
}

namespace {

Table storage_table(const StorageTrace& trace) {
    Table table;
    table.header = {"t", "j", "V_p", "V_c", "U"};
    for (const auto& s : trace.samples)
        table.rows.push_back({s.time.t, static_cast<double>(s.time.j), s.v_p, s.v_c, s.u});
    return table;
}

}  // namespace

std::string arc_to_json(const HybridArc& arc, const ScenarioConfig& config) {
    nlohmann::json j;
    j["tau_p"] = config.tau_p;
    j["tau_c"] = config.tau_c;
    j["tau_pi"] = config.tau_pi;
    j["tau_kappa"] = config.tau_kappa;
    j["layout"] = {{"n_p", static_cast<int>(config.x_p0.size())},
                   {"n_c", static_cast<int>(config.x_c0.size())},
                   {"n_u", static_cast<int>(config.e_u0.size())}};
    j["status"] = to_string(arc.status);
    j["segments"] = nlohmann::json::array();
    for (const auto& seg : arc.segments) {
        nlohmann::json sj;
        sj["j"] = seg.jump_index;
        sj["t_start"] = seg.t_start;
        sj["t_end"] = seg.t_end;
        sj["samples"] = nlohmann::json::array();
        for (const auto& s : seg.samples) {
            nlohmann::json row = nlohmann::json::array();
            row.push_back(s.t);
            for (int k = 0; k < s.state.size(); ++k) row.push_back(s.state(k));
            sj["samples"].push_back(row);
        }
        j["segments"].push_back(sj);
    }
    j["events"] = nlohmann::json::array();
    for (const auto& ev : arc.events) {
        j["events"].push_back({{"t", ev.time.t},
                               {"j", ev.time.j},
                               {"sampler", to_string(ev.sampler)},
                               {"cause", to_string(ev.cause)}});
    }
    return j.dump();
}

LoadedArc arc_from_json(const std::string& content) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(content);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("arc file parse error: ") + e.what());
    }
    LoadedArc out;
    out.dwell.tau_p = j.value("tau_p", 0.0);
    out.dwell.tau_c = j.value("tau_c", 0.0);
    if (j.contains("tau_pi")) out.dwell.tau_pi = j["tau_pi"].get<double>();
    if (j.contains("tau_kappa")) out.dwell.tau_kappa = j["tau_kappa"].get<double>();
    if (j.contains("layout")) {
        StateLayout layout;
        layout.n_p = j["layout"].value("n_p", 1);
        layout.n_c = j["layout"].value("n_c", 1);
        layout.n_u = j["layout"].value("n_u", 1);
        out.dwell.layout = layout;
    }
    for (const auto& sj : j.value("segments", nlohmann::json::array())) {
        ArcSegment seg;
        seg.jump_index = sj.value("j", 0);
        seg.t_start = sj.value("t_start", 0.0);
        seg.t_end = sj.value("t_end", 0.0);
        for (const auto& row : sj.value("samples", nlohmann::json::array())) {
            TrajectorySample s;
            s.t = row[0].get<double>();
            s.state.resize(static_cast<int>(row.size()) - 1);
            for (size_t k = 1; k < row.size(); ++k)
                s.state(static_cast<int>(k) - 1) = row[k].get<double>();
            seg.samples.push_back(std::move(s));
        }
        out.arc.segments.push_back(std::move(seg));
    }
    for (const auto& ej : j.value("events", nlohmann::json::array())) {
        EventRecord ev;
        ev.time.t = ej.value("t", 0.0);
        ev.time.j = ej.value("j", 0);
        const std::string sampler = ej.value("sampler", "plant");
        ev.sampler = sampler == "controller"
                         ? SamplerId::Controller
                         : (sampler == "both" ? SamplerId::Both : SamplerId::Plant);
        const std::string cause = ej.value("cause", "threshold");
        ev.cause = cause == "timeout"
                       ? TriggerCause::Timeout
                       : (cause == "forced-simultaneous" ? TriggerCause::ForcedSimultaneous
                                                         : TriggerCause::Threshold);
        out.arc.events.push_back(ev);
    }
    return out;
}

RunOutput run_scenario(const ScenarioConfig& config) {
    config.validate();
    auto sys = build_etc_system(config);
    auto def = build_closed_loop(sys);
    auto ev = make_storage_evaluators(config);

    Eigen::VectorXd e_p0 = config.e_p0.size() ? config.e_p0 : Eigen::VectorXd::Zero(sys.layout.n_p);
    Eigen::VectorXd e_u0 = config.e_u0.size() ? config.e_u0 : Eigen::VectorXd::Zero(sys.layout.n_u);
    const Vec q0 =
        sys.layout.pack(config.x_p0, e_p0, config.eta_p0, config.x_c0, e_u0, config.eta_c0);

    RunOutput out;
    out.config = config;
    out.arc = simulate(def, q0, config.solver);
    out.trajectory = make_trajectory_table(out.arc, sys.layout, ev);
    out.events = make_event_table(out.arc);

    DwellCheckConfig dwell;
    dwell.tau_p = config.tau_p;
    dwell.tau_c = config.tau_c;
    dwell.tau_pi = config.tau_pi;
    dwell.tau_kappa = config.tau_kappa;
    dwell.layout = sys.layout;
    out.dwell = verify_dwell(out.arc, dwell);

    out.storage = monitor_storage(out.arc, ev.v_p, ev.v_c);
    out.summary =
        summarize_tables(config.name, out.trajectory, out.events, to_string(out.arc.status));

    if (!config.out_dir.empty()) {
        std::filesystem::create_directories(config.out_dir);
        const std::string base = config.out_dir + "/";
        write_file(base + "trajectory.csv", to_csv(out.trajectory));
        write_file(base + "events.csv", to_csv(out.events));
        write_file(base + "summary.json", to_json(out.summary) + "\n");
        write_file(base + "dwell.json", to_json(out.dwell) + "\n");
        write_file(base + "storage.csv", to_csv(storage_table(out.storage)));
        write_file(base + "arc.json", arc_to_json(out.arc, config) + "\n");
    }
    return out;
}

namespace {

void apply_sweep_param(ScenarioConfig& cfg, const std::string& param, double value) {
    if (param == "k_p") cfg.k_p = value;
    else if (param == "tau_p") cfg.tau_p = value;
    else if (param == "tau_c") cfg.tau_c = value;
    else if (param == "t_end") cfg.solver.t_end = value;
    else if (param == "max_step") cfg.solver.max_step = value;
    else
        throw ConfigError("unknown sweep parameter '" + param +
                          "' (expected k_p | tau_p | tau_c | t_end | max_step)");
}

}  // namespace

std::vector<SweepResult> sweep_scenario(const ScenarioConfig& base, const std::string& param,
                                        const std::vector<double>& values) {
    if (values.empty()) throw ConfigError("sweep: no values given");
    {
        // Validate every configuration up front; workers then cannot throw.
        for (double v : values) {
            ScenarioConfig probe = base;
            apply_sweep_param(probe, param, v);
            probe.validate();
        }
    }

    std::vector<SweepResult> results(values.size());
    std::vector<ScenarioConfig> configs(values.size());
    for (size_t k = 0; k < values.size(); ++k) {
        configs[k] = base;
        apply_sweep_param(configs[k], param, values[k]);
        if (!base.out_dir.empty())
            configs[k].out_dir = base.out_dir + "/" + param + "=" + format_double(values[k]);
    }

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (long k = 0; k < static_cast<long>(values.size()); ++k) {
        auto run = run_scenario(configs[static_cast<size_t>(k)]);
        results[static_cast<size_t>(k)] =
            SweepResult{values[static_cast<size_t>(k)], run.summary,
                        configs[static_cast<size_t>(k)].out_dir};
    }

    std::stable_sort(results.begin(), results.end(),
                     [](const SweepResult& a, const SweepResult& b) { return a.value < b.value; });

    if (!base.out_dir.empty()) {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& r : results) {
            j.push_back({{"param", param},
                         {"value", r.value},
                         {"dir", r.dir},
                         {"summary", nlohmann::json::parse(to_json(r.summary))}});
        }
        std::filesystem::create_directories(base.out_dir);
        write_file(base.out_dir + "/sweep_summary.json", j.dump(2) + "\n");
    }
    return results;
}

ScenarioConfig scenario_from_config(const ConfigMap& map) {
    ScenarioConfig cfg;
    cfg.name = map.get_string("scenario.name", "scenario");

    const std::string plant = map.get_string("plant.type", "single-integrator");
    if (plant == "single-integrator") {
        cfg.plant_kind = PlantKind::SingleIntegrator;
    } else if (plant == "linear") {
        cfg.plant_kind = PlantKind::Linear;
        cfg.plant_a = matrix_from_rows(map, "plant.A");
        cfg.plant_b = matrix_from_rows(map, "plant.B");
    } else {
        throw ConfigError("unknown plant type '" + plant + "'", map.line_of("plant.type"),
                          "plant.type");
    }

    const std::string ctrl = map.get_string("controller.type", "proportional");
    if (ctrl == "proportional") {
        cfg.controller_kind = ControllerKind::Proportional;
        cfg.k_p = map.get_double("controller.k_p", 0.5);
    } else if (ctrl == "linear") {
        cfg.controller_kind = ControllerKind::Linear;
        cfg.ctrl_a = matrix_from_rows(map, "controller.A");
        cfg.ctrl_b = matrix_from_rows(map, "controller.B");
        cfg.ctrl_c = matrix_from_rows(map, "controller.C");
        cfg.ctrl_d = matrix_from_rows(map, "controller.D");
    } else {
        throw ConfigError("unknown controller type '" + ctrl + "'",
                          map.line_of("controller.type"), "controller.type");
    }

    auto read_hold = [&](const std::string& section) {
        HoldConfig hold;
        hold.kind = hold_kind_from(map.get_string(section + ".hold", "zoh"),
                                   map.line_of(section + ".hold"));
        hold.a_held = map.get_double(section + ".a_held", 0.0);
        hold.a_signal = map.get_double(section + ".a_signal", 0.0);
        hold.b_held = map.get_double(section + ".b_held", 0.0);
        hold.b_signal = map.get_double(section + ".b_signal", 1.0);
        return hold;
    };
    cfg.plant_hold = read_hold("sampler.plant");
    cfg.controller_hold = read_hold("sampler.controller");
    cfg.tau_p = map.get_double("sampler.plant.tau_min", 1.0);
    cfg.tau_pi = map.get_double("sampler.plant.tau_max", 60.0);
    cfg.tau_c = map.get_double("sampler.controller.tau_min", 2.0);
    cfg.tau_kappa = map.get_double("sampler.controller.tau_max", 120.0);

    cfg.beta_p = map.get_double("storage.beta_p", 1e-5);
    cfg.beta_c = map.get_double("storage.beta_c", 1e-5);

    auto read_vec = [&](const std::string& key, double fallback) {
        auto values = map.get_doubles(key);
        if (values.empty()) values.push_back(fallback);
        return vector_from_list(values);
    };
    cfg.x_p0 = read_vec("initial.x_p", 10.0);
    cfg.x_c0 = read_vec("initial.x_c", 10.0);
    cfg.e_p0 = map.has("initial.e_p") ? vector_from_list(map.get_doubles("initial.e_p"))
                                      : Eigen::VectorXd::Zero(cfg.x_p0.size()).eval();
    cfg.e_u0 = map.has("initial.e_u") ? vector_from_list(map.get_doubles("initial.e_u"))
                                      : Eigen::VectorXd::Zero(
                                            cfg.controller_kind == ControllerKind::Proportional
                                                ? cfg.x_c0.size()
                                                : cfg.ctrl_c.rows())
                                            .eval();
    cfg.eta_p0 = map.get_double("initial.eta_p", 0.0);
    cfg.eta_c0 = map.get_double("initial.eta_c", 0.0);

    cfg.solver.t_end = map.get_double("solver.t_end", 60.0);
    cfg.solver.max_step = map.get_double("solver.max_step", 1e-2);
    cfg.solver.event_tolerance = map.get_double("solver.event_tolerance", 1e-6);
    cfg.solver.j_max = map.get_long("solver.j_max", 100000);
    cfg.solver.record_stride = map.get_double("solver.record_stride", cfg.solver.max_step);
    cfg.solver.zeno_window.seconds = map.get_double("solver.zeno_window_seconds", 1.0);
    cfg.solver.zeno_window.max_jumps =
        static_cast<int>(map.get_long("solver.zeno_window_jumps", 1000));
    const std::string order = map.get_string("solver.jump_order", "plant-first");
    if (order == "plant-first") {
        cfg.solver.jump_order = JumpOrder::PlantFirst;
    } else if (order == "controller-first") {
        cfg.solver.jump_order = JumpOrder::ControllerFirst;
    } else {
        throw ConfigError("unknown jump_order '" + order + "'", map.line_of("solver.jump_order"),
                          "solver.jump_order");
    }

    cfg.out_dir = map.get_string("output.dir", "");
    cfg.seed = static_cast<unsigned>(map.get_long("output.seed", 1));

    cfg.validate();
    return cfg;
}

namespace {

ScalarFn scalar_fn_from_spec(const std::string& spec, const std::string& key, int line) {
    if (spec == "zero") return [](double) { return 0.0; };
    if (spec == "identity") return [](double s) { return s; };
    // power:c,k  ->  c * s^k ;  linear:c  ->  c * s
    const size_t colon = spec.find(':');
    if (colon != std::string::npos) {
        const std::string kind = spec.substr(0, colon);
        const std::string args = spec.substr(colon + 1);
        std::vector<double> values;
        std::stringstream ss(args);
        std::string cell;
        while (std::getline(ss, cell, ',')) values.push_back(std::strtod(cell.c_str(), nullptr));
        if (kind == "linear" && values.size() == 1) {
            const double c = values[0];
            return [c](double s) { return c * s; };
        }
        if (kind == "power" && values.size() == 2) {
            const double c = values[0], k = values[1];
            return [c, k](double s) { return c * std::pow(s, k); };
        }
    }
    throw ConfigError("bad function spec '" + spec +
                          "' (expected zero | identity | linear:c | power:c,k)",
                      line, key);
}

ScalarFn optional_fn(const ConfigMap& map, const std::string& key) {
    auto spec = map.get(key);
    if (!spec) return {};
    return scalar_fn_from_spec(*spec, key, map.line_of(key));
}

GridAxis axis_from_spec(const std::string& spec, const std::string& key, int line) {
    // lo:hi:points, or a single number for a pinned coordinate.
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string cell;
    while (std::getline(ss, cell, ':')) parts.push_back(cell);
    if (parts.size() == 1) {
        const double v = std::strtod(parts[0].c_str(), nullptr);
        return {v, v, 1};
    }
    if (parts.size() == 3) {
        GridAxis axis;
        axis.lo = std::strtod(parts[0].c_str(), nullptr);
        axis.hi = std::strtod(parts[1].c_str(), nullptr);
        axis.points = std::atoi(parts[2].c_str());
        if (axis.points < 1)
            throw ConfigError("grid axis needs at least one point", line, key);
        return axis;
    }
    throw ConfigError("bad grid axis '" + spec + "' (expected value or lo:hi:points)", line, key);
}

}  // namespace

std::pair<SmallGainProblem, GridSpec> small_gain_from_config(const ConfigMap& map,
                                                             const ScenarioConfig& scenario) {
    SmallGainProblem problem;
    problem.system = build_etc_system(scenario);
    problem.fns.v_p = problem.system.trigger_p.storage;
    problem.fns.v_c = problem.system.trigger_c.storage;

    problem.fns.chi_p = optional_fn(map, "small_gain.chi_p");
    problem.fns.chi_c = optional_fn(map, "small_gain.chi_c");
    problem.fns.alpha_p = optional_fn(map, "small_gain.alpha_p");
    problem.fns.alpha_c = optional_fn(map, "small_gain.alpha_c");
    problem.fns.rho = optional_fn(map, "small_gain.rho");

    // Sandwich envelopes for the built-in quadratic storages; override in
    // the config for custom storage choices.
    const double bp = scenario.beta_p, bc = scenario.beta_c;
    problem.fns.alpha_p_lower = optional_fn(map, "small_gain.alpha_p_lower");
    if (!problem.fns.alpha_p_lower)
        problem.fns.alpha_p_lower = [bp](double r) { return 0.5 * bp * r * r; };
    problem.fns.alpha_p_upper = optional_fn(map, "small_gain.alpha_p_upper");
    if (!problem.fns.alpha_p_upper)
        problem.fns.alpha_p_upper = [](double r) { return 0.5 * r * r; };
    problem.fns.alpha_c_lower = optional_fn(map, "small_gain.alpha_c_lower");
    if (!problem.fns.alpha_c_lower)
        problem.fns.alpha_c_lower = [bc](double r) { return 0.5 * bc * r * r; };
    problem.fns.alpha_c_upper = optional_fn(map, "small_gain.alpha_c_upper");
    if (!problem.fns.alpha_c_upper)
        problem.fns.alpha_c_upper = [bc](double r) { return std::max(0.1, 0.5 * bc) * r * r; };

    problem.margin = map.get_double("small_gain.margin", 1e-6);
    problem.scalar_grid = map.get_doubles("small_gain.scalar_grid");
    problem.clarke.n_samples = static_cast<int>(map.get_long("small_gain.clarke_samples", 200));
    problem.clarke.y_radius = map.get_double("small_gain.clarke_radius", 1e-4);
    problem.clarke.seed = scenario.seed;
    if (map.has("small_gain.clarke_h")) problem.clarke.h_grid = map.get_doubles("small_gain.clarke_h");

    const auto& layout = problem.system.layout;
    GridSpec grid;
    auto axis_for = [&](const std::string& name, double pinned) {
        const std::string key = "small_gain.grid." + name;
        auto spec = map.get(key);
        if (!spec) return GridAxis{pinned, pinned, 1};
        return axis_from_spec(*spec, key, map.line_of(key));
    };
    // Pinned defaults come from the scenario's initial state.
    for (int k = 0; k < layout.n_p; ++k)
        grid.axes.push_back(axis_for(layout.n_p == 1 ? "x_p" : "x_p" + std::to_string(k),
                                     scenario.x_p0(k)));
    for (int k = 0; k < layout.n_p; ++k)
        grid.axes.push_back(axis_for(layout.n_p == 1 ? "e_p" : "e_p" + std::to_string(k), 0.0));
    grid.axes.push_back(axis_for("eta_p", 0.5 * scenario.tau_p));
    for (int k = 0; k < layout.n_c; ++k)
        grid.axes.push_back(axis_for(layout.n_c == 1 ? "x_c" : "x_c" + std::to_string(k),
                                     scenario.x_c0(k)));
    for (int k = 0; k < layout.n_u; ++k)
        grid.axes.push_back(axis_for(layout.n_u == 1 ? "e_u" : "e_u" + std::to_string(k), 0.0));
    grid.axes.push_back(axis_for("eta_c", 0.5 * scenario.tau_c));

    return {problem, grid};
}

}  // namespace etcsim
