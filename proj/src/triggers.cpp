#include "etcsim/triggers.hpp"

#include <stdexcept>

namespace etcsim {

void TriggerSpec::validate() const {
    if (!(tau_min > 0.0)) throw std::invalid_argument("trigger: tau_min must be > 0");
    if (!(tau_min < tau_max))
        throw std::invalid_argument("trigger: tau_min must be < tau_max");
    if (timer_slack < 0.0) throw std::invalid_argument("trigger: timer_slack must be >= 0");
    if (!storage || !threshold)
        throw std::invalid_argument("trigger: storage and threshold functions required");
}

TriggerDecision trigger_fired(const LocalState& q, const TriggerSpec& spec) {
    const bool timeout = q.eta >= spec.tau_max - spec.timer_slack;
    if (timeout) return {true, TriggerCause::Timeout};
    const bool released = q.eta >= spec.tau_min - spec.timer_slack;
    if (released && spec.storage(q) <= spec.threshold(q.e)) {
        return {true, TriggerCause::Threshold};
    }
    return {false, TriggerCause::Threshold};
}

bool flow_allowed(const LocalState& q, const TriggerSpec& spec) {
    if (q.eta < spec.tau_min) return true;
    return q.eta < spec.tau_max && spec.storage(q) > spec.threshold(q.e);
}

double QuadraticStorage::operator()(const LocalState& q) const {
    // x' Q x without a heap temporary; this sits inside sampling loops.
    double state_term = 0.0;
    for (Eigen::Index i = 0; i < q.x.size(); ++i) {
        double row = 0.0;
        for (Eigen::Index j = 0; j < q.x.size(); ++j) row += state_weight(i, j) * q.x(j);
        state_term += q.x(i) * row;
    }
    return 0.5 * state_term + 0.5 * error_weight * q.e.squaredNorm();
}

TriggerSpecPair builtin_quadratic_specs(const QuadraticSpecParams& params) {
    TriggerSpecPair pair;

    QuadraticStorage v_p{Eigen::MatrixXd::Identity(params.n_p, params.n_p), params.beta_p};
    QuadraticThreshold w_p{(1.0 + params.beta_p) / 2.0};
    pair.plant.storage = v_p;
    pair.plant.threshold = w_p;
    pair.plant.tau_min = params.tau_p;
    pair.plant.tau_max = params.tau_pi;

    // V_c = |x_c|^2 / 10 corresponds to a state weight of 1/5.
    QuadraticStorage v_c{Eigen::MatrixXd::Identity(params.n_c, params.n_c) * 0.2, params.beta_c};
    QuadraticThreshold w_u{(1.0 + params.beta_c) / 2.0};
    pair.controller.storage = v_c;
    pair.controller.threshold = w_u;
    pair.controller.tau_min = params.tau_c;
    pair.controller.tau_max = params.tau_kappa;

    return pair;
}

}  // namespace etcsim
