#pragma once

#include "etcsim/hybrid_arc.hpp"

#include <Eigen/Core>

#include <functional>

namespace etcsim {

/// Aggregate state of one sampler side: the subsystem state x, the local
/// sampling error e (held value minus live value), and the timer eta
/// counting seconds since the last local sampling event.
struct LocalState {
    Eigen::VectorXd x;
    Eigen::VectorXd e;
    double eta = 0.0;
};

using StorageFn = std::function<double(const LocalState&)>;
using ThresholdFn = std::function<double(const Eigen::VectorXd&)>;

/// Storage function V, error threshold W, and the timer window defining
/// one sampler's local flow/jump sets. A sample is forced no later than
/// tau_max and permitted no earlier than tau_min.
///
/// timer_slack relaxes the timer comparisons (eta >= tau - slack) so that
/// event states localized within the solver's bisection tolerance are
/// classified consistently; predicates used standalone keep slack = 0.
struct TriggerSpec {
    StorageFn storage;      // V: local state -> R>=0, locally Lipschitz
    ThresholdFn threshold;  // W: error -> R>=0, continuously differentiable
    double tau_min = 0.0;
    double tau_max = 0.0;
    double timer_slack = 0.0;

    void validate() const;  // throws std::invalid_argument on bad windows
};

struct TriggerDecision {
    bool fired = false;
    TriggerCause cause = TriggerCause::Threshold;
};

/// Jump-set membership for one sampler:
///   fired  <=>  (V(q) <= W(e) and eta >= tau_min)  or  eta >= tau_max.
/// Timeout wins when both disjuncts hold.
[[nodiscard]] TriggerDecision trigger_fired(const LocalState& q, const TriggerSpec& spec);

/// Flow-set membership for one sampler:
///   allowed  <=>  (V(q) > W(e) and eta < tau_max)  or  eta < tau_min.
/// On boundary regions both this and trigger_fired may hold; the engine
/// jumps whenever trigger_fired is true.
[[nodiscard]] bool flow_allowed(const LocalState& q, const TriggerSpec& spec);

/// V(q) = x' Q x / 2 + beta |e|^2 / 2 with Q symmetric PSD.
struct QuadraticStorage {
    Eigen::MatrixXd state_weight;
    double error_weight = 0.0;

    [[nodiscard]] double operator()(const LocalState& q) const;
};

/// W(e) = coeff |e|^2.
struct QuadraticThreshold {
    double coeff = 0.0;

    [[nodiscard]] double operator()(const Eigen::VectorXd& e) const { return coeff * e.squaredNorm(); }
};

struct QuadraticSpecParams {
    double beta_p = 1e-5;
    double beta_c = 1e-5;
    double tau_p = 1.0;   // plant tau_min
    double tau_pi = 60.0; // plant tau_max
    double tau_c = 2.0;   // controller tau_min
    double tau_kappa = 120.0;
    int n_p = 1;
    int n_c = 1;
};

struct TriggerSpecPair {
    TriggerSpec plant;
    TriggerSpec controller;
};

/// The built-in quadratic storage/threshold pair:
///   V_p = x_p^2/2 + beta_p e_p^2/2,   W_p = (1+beta_p)/2 e_p^2,
///   V_c = x_c^2/10 + beta_c e_u^2/2,  W_u = (1+beta_c)/2 e_u^2,
/// generalized to |.|^2 norms for vector states.
[[nodiscard]] TriggerSpecPair builtin_quadratic_specs(const QuadraticSpecParams& params);

}  // namespace etcsim
