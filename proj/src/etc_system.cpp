#include "etcsim/etc_system.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace etcsim {

SamplerModel zero_order_hold() {
    SamplerModel m;
    m.flow_hold = [](const Vec& held, const Vec&, const Vec&) {
        return Vec::Zero(held.size()).eval();
    };
    m.jump_hold = [](const Vec&, const Vec& signal, const Vec&) { return signal; };
    return m;
}

SamplerModel model_based_hold(const PlantModel& plant) {
    SamplerModel m;
    auto f_p = plant.f_p;
    m.flow_hold = [f_p](const Vec& held, const Vec&, const Vec& aux) { return f_p(held, aux); };
    m.jump_hold = [](const Vec&, const Vec& signal, const Vec&) { return signal; };
    return m;
}

SamplerModel coefficient_hold(double a_held, double a_signal, double b_held, double b_signal) {
    SamplerModel m;
    m.flow_hold = [a_held, a_signal](const Vec& held, const Vec& signal, const Vec&) {
        return (a_held * held + a_signal * signal).eval();
    };
    m.jump_hold = [b_held, b_signal](const Vec& held, const Vec& signal, const Vec&) {
        return (b_held * held + b_signal * signal).eval();
    };
    return m;
}

LocalState StateLayout::plant_local(const Vec& q) const {
    LocalState s;
    s.x = x_p(q);
    s.e = e_p(q);
    s.eta = eta_p(q);
    return s;
}

LocalState StateLayout::controller_local(const Vec& q) const {
    LocalState s;
    s.x = x_c(q);
    s.e = e_u(q);
    s.eta = eta_c(q);
    return s;
}

Vec StateLayout::pack(const Vec& xp, const Vec& ep, double etap, const Vec& xc, const Vec& eu,
                      double etac) const {
    Vec q(dim());
    q.segment(0, n_p) = xp;
    q.segment(n_p, n_p) = ep;
    q(2 * n_p) = etap;
    q.segment(2 * n_p + 1, n_c) = xc;
    q.segment(2 * n_p + 1 + n_c, n_u) = eu;
    q(dim() - 1) = etac;
    return q;
}

namespace {

/// d(g_c)/dt along (x_c', xhat_p') by the exact Jacobians when supplied,
/// otherwise by a central directional difference with relative step.
Vec controller_output_rate(const ControllerModel& ctrl, const Vec& x_c, const Vec& xhat,
                           const Vec& dx_c, const Vec& dxhat) {
    if (ctrl.jac_xc && ctrl.jac_xhat) {
        return ((*ctrl.jac_xc)(x_c, xhat) * dx_c + (*ctrl.jac_xhat)(x_c, xhat) * dxhat).eval();
    }
    const double dir_norm = std::sqrt(dx_c.squaredNorm() + dxhat.squaredNorm());
    if (dir_norm == 0.0) return Vec::Zero(ctrl.g_c(x_c, xhat).size());
    const double point_norm = std::sqrt(x_c.squaredNorm() + xhat.squaredNorm());
    const double h = ctrl.fd_step * std::max(1.0, point_norm) / dir_norm;
    const Vec plus = ctrl.g_c(x_c + h * dx_c, xhat + h * dxhat);
    const Vec minus = ctrl.g_c(x_c - h * dx_c, xhat - h * dxhat);
    return ((plus - minus) / (2.0 * h)).eval();
}

void check_dimensions(const EtcSystem& sys) {
    const auto& L = sys.layout;
    if (L.n_p <= 0 || L.n_c <= 0 || L.n_u <= 0)
        throw std::invalid_argument("closed loop: dimensions must be positive");
    if (L.n_p != sys.plant.n_p || L.n_c != sys.controller.n_c || L.n_u != sys.plant.n_u)
        throw std::invalid_argument("closed loop: layout does not match the models");
    if (sys.plant.n_m > sys.plant.n_p)
        throw std::invalid_argument("closed loop: n_m must not exceed n_p");
    if (!sys.plant.f_p || !sys.plant.g_p || !sys.controller.f_c || !sys.controller.g_c)
        throw std::invalid_argument("closed loop: plant and controller maps required");

    // Spot-check output dimensions at the origin.
    const Vec xp0 = Vec::Zero(L.n_p);
    const Vec xc0 = Vec::Zero(L.n_c);
    const Vec u0 = Vec::Zero(L.n_u);
    if (sys.plant.g_p(xp0).size() != sys.plant.n_m)
        throw std::invalid_argument("closed loop: g_p output dimension != n_m");
    if (sys.plant.f_p(xp0, u0).size() != L.n_p)
        throw std::invalid_argument("closed loop: f_p output dimension != n_p");
    if (sys.controller.g_c(xc0, xp0).size() != L.n_u)
        throw std::invalid_argument("closed loop: g_c output dimension != n_u");
    if (sys.controller.f_c(xc0, xp0).size() != L.n_c)
        throw std::invalid_argument("closed loop: f_c output dimension != n_c");

    // The plant hold must reconstruct a full-dimensional estimate; the
    // built-in holds require n_m == n_p for that.
    if (sys.plant_sampler.jump_hold &&
        sys.plant_sampler.jump_hold(xp0, sys.plant.g_p(xp0), u0).size() != L.n_p)
        throw std::invalid_argument(
            "closed loop: plant jump hold must produce an n_p-dimensional estimate");
}

}  // namespace

Vec closed_loop_flow(const EtcSystem& sys, const Vec& q) {
    const auto& L = sys.layout;
    const Vec xp = L.x_p(q);
    const Vec ep = L.e_p(q);
    const Vec xc = L.x_c(q);
    const Vec eu = L.e_u(q);

    const Vec xhat = xp + ep;
    const Vec xm = sys.plant.g_p(xp);
    const Vec u = sys.controller.g_c(xc, xhat);
    const Vec u_hat = u + eu;

    const Vec dxp = sys.plant.f_p(xp, u_hat);
    const Vec phi_p = sys.plant_sampler.flow_hold(xhat, xm, u_hat);
    const Vec dxc = sys.controller.f_c(xc, xhat);
    const Vec du = controller_output_rate(sys.controller, xc, xhat, dxc, phi_p);
    const Vec phi_u = sys.controller_sampler.flow_hold(u_hat, u, Vec());

    Vec dq(L.dim());
    dq.segment(0, L.n_p) = dxp;
    dq.segment(L.n_p, L.n_p) = phi_p - dxp;
    dq(2 * L.n_p) = 1.0;
    dq.segment(2 * L.n_p + 1, L.n_c) = dxc;
    dq.segment(2 * L.n_p + 1 + L.n_c, L.n_u) = phi_u - du;
    dq(L.dim() - 1) = 1.0;

    if (!dq.allFinite()) throw StepFailure("closed loop: non-finite flow evaluation");
    return dq;
}

std::vector<JumpSuccessor> closed_loop_jump(const EtcSystem& sys, const Vec& q, bool plant_fired,
                                            bool controller_fired) {
    const auto& L = sys.layout;
    std::vector<JumpSuccessor> out;

    if (plant_fired) {
        const Vec xp = L.x_p(q);
        const Vec xhat = xp + L.e_p(q);
        const Vec xm = sys.plant.g_p(xp);
        const Vec u_hat = sys.controller.g_c(L.x_c(q), xhat) + L.e_u(q);
        Vec s = q;
        L.e_p(s) = sys.plant_sampler.jump_hold(xhat, xm, u_hat) - xp;
        L.eta_p(s) = 0.0;
        out.push_back({std::move(s), SamplerId::Plant, TriggerCause::Threshold});
    }
    if (controller_fired) {
        const Vec xhat = L.x_p(q) + L.e_p(q);
        const Vec u = sys.controller.g_c(L.x_c(q), xhat);
        const Vec u_hat = u + L.e_u(q);
        Vec s = q;
        L.e_u(s) = sys.controller_sampler.jump_hold(u_hat, u, Vec()) - u;
        L.eta_c(s) = 0.0;
        out.push_back({std::move(s), SamplerId::Controller, TriggerCause::Threshold});
    }
    return out;
}

HybridSystemDef build_closed_loop(const EtcSystem& sys) {
    check_dimensions(sys);
    sys.trigger_p.validate();
    sys.trigger_c.validate();

    auto shared = std::make_shared<const EtcSystem>(sys);

    HybridSystemDef def;
    def.dim = shared->layout.dim();
    def.flow_map = [shared](const StateVec& q) { return closed_loop_flow(*shared, q); };
    def.flow_set = [shared](const StateVec& q) {
        return flow_allowed(shared->layout.plant_local(q), shared->trigger_p) &&
               flow_allowed(shared->layout.controller_local(q), shared->trigger_c);
    };
    def.jump_set = [shared](const StateVec& q) {
        return trigger_fired(shared->layout.plant_local(q), shared->trigger_p).fired ||
               trigger_fired(shared->layout.controller_local(q), shared->trigger_c).fired;
    };
    def.jump_map = [shared](const StateVec& q) {
        const auto dp = trigger_fired(shared->layout.plant_local(q), shared->trigger_p);
        const auto dc = trigger_fired(shared->layout.controller_local(q), shared->trigger_c);
        auto successors = closed_loop_jump(*shared, q, dp.fired, dc.fired);
        for (auto& s : successors)
            s.cause = s.sampler == SamplerId::Plant ? dp.cause : dc.cause;
        return successors;
    };
    return def;
}

}  // namespace etcsim
