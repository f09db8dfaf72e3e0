#pragma once

#include "etcsim/solver.hpp"
#include "etcsim/triggers.hpp"

#include <Eigen/Core>

#include <functional>
#include <optional>

namespace etcsim {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Nonlinear plant: x_p' = f_p(x_p, u_hat) with measured output
/// x_m = g_p(x_p). Observability of (f_p, g_p) is asserted by the scenario
/// author, not verified here.
struct PlantModel {
    int n_p = 0;  // plant state dimension
    int n_m = 0;  // measured state dimension, n_m <= n_p
    int n_u = 0;  // input dimension
    std::function<Vec(const Vec& x_p, const Vec& u_hat)> f_p;
    std::function<Vec(const Vec& x_p)> g_p;
};

/// Hold dynamics of one sampler. The held value flows with phi between
/// sampling events and is replaced by h at events. `aux` is an optional
/// extra input channel (the live plant input for the plant sampler);
/// zero-order holds ignore it, the model-based hold consumes it.
struct SamplerModel {
    std::function<Vec(const Vec& held, const Vec& signal, const Vec& aux)> flow_hold;  // phi
    std::function<Vec(const Vec& held, const Vec& signal, const Vec& aux)> jump_hold;  // h
};

/// phi == 0, h(held, s) = s.
[[nodiscard]] SamplerModel zero_order_hold();

/// Plant-side predictive hold: the estimate flows with the plant model,
/// phi(held, x_m, u_hat) = f_p(held, u_hat); the jump re-reads the signal.
[[nodiscard]] SamplerModel model_based_hold(const PlantModel& plant);

/// Linear hold with user coefficients:
///   phi = a_held * held + a_signal * signal,
///   h   = b_held * held + b_signal * signal.
/// (0, 0, 0, 1) reproduces the zero-order hold.
[[nodiscard]] SamplerModel coefficient_hold(double a_held, double a_signal, double b_held,
                                            double b_signal);

/// Dynamic controller x_c' = f_c(x_c, xhat_p), u = g_c(x_c, xhat_p).
/// The output Jacobians feed the chain rule for d(g_c)/dt during flow;
/// when absent, central finite differences with relative step fd_step are
/// used instead.
struct ControllerModel {
    int n_c = 0;
    std::function<Vec(const Vec& x_c, const Vec& xhat_p)> f_c;
    std::function<Vec(const Vec& x_c, const Vec& xhat_p)> g_c;
    std::optional<std::function<Mat(const Vec&, const Vec&)>> jac_xc;    // n_u x n_c
    std::optional<std::function<Mat(const Vec&, const Vec&)>> jac_xhat;  // n_u x n_p
    double fd_step = 1e-6;
};

/// Packed coordinates of the closed-loop state
///   q = (x_p, e_p, eta_p, x_c, e_u, eta_c)
/// with e_p = xhat_p - x_p and e_u = u_hat - u.
struct StateLayout {
    int n_p = 0;
    int n_c = 0;
    int n_u = 0;

    [[nodiscard]] int dim() const { return 2 * n_p + n_c + n_u + 2; }

    [[nodiscard]] auto x_p(const Vec& q) const { return q.segment(0, n_p); }
    [[nodiscard]] auto e_p(const Vec& q) const { return q.segment(n_p, n_p); }
    [[nodiscard]] double eta_p(const Vec& q) const { return q(2 * n_p); }
    [[nodiscard]] auto x_c(const Vec& q) const { return q.segment(2 * n_p + 1, n_c); }
    [[nodiscard]] auto e_u(const Vec& q) const { return q.segment(2 * n_p + 1 + n_c, n_u); }
    [[nodiscard]] double eta_c(const Vec& q) const { return q(dim() - 1); }

    [[nodiscard]] auto x_p(Vec& q) const { return q.segment(0, n_p); }
    [[nodiscard]] auto e_p(Vec& q) const { return q.segment(n_p, n_p); }
    [[nodiscard]] auto x_c(Vec& q) const { return q.segment(2 * n_p + 1, n_c); }
    [[nodiscard]] auto e_u(Vec& q) const { return q.segment(2 * n_p + 1 + n_c, n_u); }
    [[nodiscard]] double& eta_p(Vec& q) const { return q(2 * n_p); }
    [[nodiscard]] double& eta_c(Vec& q) const { return q(dim() - 1); }

    [[nodiscard]] LocalState plant_local(const Vec& q) const;
    [[nodiscard]] LocalState controller_local(const Vec& q) const;

    [[nodiscard]] Vec pack(const Vec& x_p, const Vec& e_p, double eta_p, const Vec& x_c,
                           const Vec& e_u, double eta_c) const;
};

/// The four subsystems plus the two trigger specs.
struct EtcSystem {
    PlantModel plant;
    SamplerModel plant_sampler;
    ControllerModel controller;
    SamplerModel controller_sampler;
    TriggerSpec trigger_p;
    TriggerSpec trigger_c;
    StateLayout layout;
};

/// Stacked closed-loop flow:
///   x_p'  = f_p(x_p, u_hat)
///   e_p'  = phi_p(xhat_p, x_m) - f_p(x_p, u_hat)
///   eta_p' = 1
///   x_c'  = f_c(x_c, xhat_p)
///   e_u'  = phi_u(u_hat, u) - d(g_c)/dt
///   eta_c' = 1
/// with x_m = g_p(x_p), xhat_p = x_p + e_p, u = g_c(x_c, xhat_p) and
/// u_hat = u + e_u; d(g_c)/dt comes from the output Jacobians applied to
/// (x_c', xhat_p') where xhat_p' = phi_p during flow.
[[nodiscard]] Vec closed_loop_flow(const EtcSystem& sys, const Vec& q);

/// Labeled post-jump alternatives. Plant-only: e_p <- h_p(xhat_p, x_m) - x_p,
/// eta_p <- 0, controller side untouched. Controller-only: dual. Both fired:
/// the two single-sampler alternatives are returned for successive
/// application by the engine.
[[nodiscard]] std::vector<JumpSuccessor> closed_loop_jump(const EtcSystem& sys, const Vec& q,
                                                          bool plant_fired,
                                                          bool controller_fired);

/// Assembles the hybrid system: flow set = plant flow set AND controller
/// flow set; jump set = plant jump set OR controller jump set; maps from
/// closed_loop_flow / closed_loop_jump. Throws std::invalid_argument on
/// inconsistent dimensions.
[[nodiscard]] HybridSystemDef build_closed_loop(const EtcSystem& sys);

}  // namespace etcsim
