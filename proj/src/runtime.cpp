#include <handsoff/runtime.hpp>

#include <chrono>
#include <ostream>

namespace handsoff {

MonitorSets build_monitors(const PlantModel& model, const DerivedSets& derived, const InvariantSets& sets,
                           const ToleranceProfile& tol) {
    MonitorSets out;
    out.S_monitor = derived.S_monitor;
    const SupportFunction minus_V = -1.0 * derived.V;
    if (auto printed = sets.inner_explicit_hpolytope()) {
        out.inner_monitor = pontryagin_difference(*printed, minus_V);
        out.inner_from_explicit = true;
    } else {
        const InnerSet inner = build_inner_set(sets.lifted_inner, derived, model.n());
        out.inner_monitor = pontryagin_difference(inner.to_hpolytope(tol), minus_V);
    }
    if (is_empty(out.S_monitor, tol)) throw SetError(SetError::Kind::Empty, "S - (-V) is empty");
    if (is_empty(out.inner_monitor, tol)) throw SetError(SetError::Kind::Empty, "Omega_I - (-V) is empty");
    return out;
}

std::string_view to_string(Phase p) {
    switch (p) {
        case Phase::Init: return "init";
        case Phase::Monitoring: return "monitoring";
        case Phase::Control: return "control";
    }
    return "?";
}

std::string_view to_string(SwitchEvent e) {
    switch (e) {
        case SwitchEvent::None: return "none";
        case SwitchEvent::Activated: return "activated";
        case SwitchEvent::Deactivated: return "deactivated";
    }
    return "?";
}

int event_code(SwitchEvent e) {
    return e == SwitchEvent::Activated ? 1 : e == SwitchEvent::Deactivated ? -1 : 0;
}

namespace {

double worst_slack(const HPolytope& P, const Vector& y) { return (P.H() * y - P.b()).maxCoeff(); }

void check_measurement(const RuntimeState& st, const Vector& y) {
    if (!st.monitors) throw std::logic_error("runtime: step before init");
    if (y.size() != st.monitors->S_monitor.dim())
        throw std::invalid_argument("runtime: measurement has size " + std::to_string(y.size()) + ", expected " +
                                    std::to_string(st.monitors->S_monitor.dim()));
    if (!y.allFinite()) throw std::invalid_argument("runtime: non-finite measurement at k = " + std::to_string(st.k));
}

// u[k] = C_K x_K + D_K y, x_K[k+1] = A_K x_K + B_K y
Vector control(RuntimeState& st, const Vector& y) {
    const auto& K = st.K;
    Vector u = K.D_K * y;
    if (K.order() > 0) {
        u.noalias() += K.C_K * st.x_K;
        st.x_K = (K.A_K * st.x_K + K.B_K * y).eval();
    }
    return u;
}

// Branches of the monitoring step, shared by init (where sigma_prev is taken as 0).
void decide(RuntimeState& st, const Vector& y, StepDecision& d) {
    const Membership& mb = d.membership;
    const bool stay_active = mb.in_S && st.sigma_prev == 1 && !mb.in_inner;
    if (mb.in_S && !stay_active) {
        d.sigma = 0;
        d.u = Vector::Zero(st.K.D_K.rows());
        st.phase = Phase::Monitoring;
    } else {
        if (st.sigma_prev == 0) st.x_K = Vector::Zero(st.K.order());
        d.sigma = 1;
        st.phase = Phase::Control;
        d.u = control(st, y);
    }
    if (d.sigma == 1 && st.sigma_prev == 0) d.event = SwitchEvent::Activated;
    if (d.sigma == 0 && st.sigma_prev == 1) d.event = SwitchEvent::Deactivated;
    st.sigma_prev = d.sigma;
    st.last = mb;
    ++st.k;
}

}  // namespace

Membership classify_measurement(const MonitorSets& mon, const Vector& y) {
    Membership mb;
    mb.S_slack = worst_slack(mon.S_monitor, y);
    mb.inner_slack = worst_slack(mon.inner_monitor, y);
    mb.in_S = mb.S_slack <= 0.0;
    mb.in_inner = mb.inner_slack <= 0.0;
    return mb;
}

std::pair<RuntimeState, StepDecision> init(const ControllerRealization& K, std::shared_ptr<const MonitorSets> monitors,
                                           const Vector& y0, long k0) {
    if (!monitors) throw std::invalid_argument("runtime: monitors required");
    if (K.D_K.cols() != monitors->S_monitor.dim())
        throw std::invalid_argument("runtime: controller input size does not match the monitors");
    RuntimeState st;
    st.K = K;
    st.monitors = std::move(monitors);
    st.x_K = Vector::Zero(K.order());
    st.k = k0;
    st.sigma_prev = 0;
    check_measurement(st, y0);
    const auto t0 = std::chrono::steady_clock::now();
    StepDecision d;
    d.k = st.k;
    d.membership = classify_measurement(*st.monitors, y0);
    decide(st, y0, d);
    d.step_time_us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(st), std::move(d)};
}

StepDecision step(RuntimeState& state, const Vector& y) {
    check_measurement(state, y);
    if (state.phase == Phase::Init) throw std::logic_error("runtime: step before init");
    const auto t0 = std::chrono::steady_clock::now();
    StepDecision d;
    d.k = state.k;
    d.membership = classify_measurement(*state.monitors, y);
    decide(state, y, d);
    d.step_time_us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
    return d;
}

Membership membership_mode(const RuntimeState& state) { return state.last; }

void write_runtime_header(std::ostream& os, int n, int m) {
    os << "k";
    for (int i = 0; i < n; ++i) os << ",y" << i;
    os << ",sigma";
    for (int i = 0; i < m; ++i) os << ",u" << i;
    os << ",event,S_slack,inner_slack,step_time_us\n";
}

void write_runtime_row(std::ostream& os, const StepDecision& d, const Vector& y) {
    os << d.k;
    for (Eigen::Index i = 0; i < y.size(); ++i) os << ',' << y(i);
    os << ',' << d.sigma;
    for (Eigen::Index i = 0; i < d.u.size(); ++i) os << ',' << d.u(i);
    os << ',' << event_code(d.event) << ',' << d.membership.S_slack << ',' << d.membership.inner_slack << ','
       << d.step_time_us << '\n';
}

}  // namespace handsoff
