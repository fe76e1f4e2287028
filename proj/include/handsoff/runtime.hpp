#pragma once

// Online switching between open loop (sigma = 0, u = 0) and the dynamic
// controller (sigma = 1), driven only by the measurement y.

#include <handsoff/conditions.hpp>

#include <iosfwd>
#include <memory>
#include <string>

namespace handsoff {

// Both monitors in halfspace form so each step is a matrix-vector product.
struct MonitorSets {
    HPolytope S_monitor;      // S - (-V): y inside guarantees x in S
    HPolytope inner_monitor;  // Omega_I - (-V)
    bool inner_from_explicit = false;
};

// Uses the explicit H_I when the sets carry one, otherwise the halfspace form
// of [I O] lifted + N. Throws SetError(Empty) when a monitor is empty.
MonitorSets build_monitors(const PlantModel& model, const DerivedSets& derived, const InvariantSets& sets,
                           const ToleranceProfile& tol = {});

enum class Phase { Init, Monitoring, Control };
enum class SwitchEvent { None, Activated, Deactivated };

std::string_view to_string(Phase p);
std::string_view to_string(SwitchEvent e);
int event_code(SwitchEvent e);  // 1 activated, -1 deactivated, 0 otherwise

struct Membership {
    bool in_S = false;
    bool in_inner = false;
    double S_slack = 0.0;      // max_i H_i y - b_i, <= 0 inside
    double inner_slack = 0.0;
};

Membership classify_measurement(const MonitorSets& mon, const Vector& y);

struct StepDecision {
    long k = 0;
    int sigma = 0;
    Vector u;
    SwitchEvent event = SwitchEvent::None;
    Membership membership;
    double step_time_us = 0.0;
};

struct RuntimeState {
    Phase phase = Phase::Init;  // branch taken by the last step

    int sigma_prev = 0;
    Vector x_K;
    long k = 0;
    ControllerRealization K;
    std::shared_ptr<const MonitorSets> monitors;
    Membership last;
};

// First measurement. Inside the S monitor: sigma = 0. Otherwise the controller
// starts from x_K = 0 and acts in this same step.
std::pair<RuntimeState, StepDecision> init(const ControllerRealization& K, std::shared_ptr<const MonitorSets> monitors,
                                           const Vector& y0, long k0 = 0);

// One sample. Throws std::invalid_argument on a non-finite or mis-sized y and
// std::logic_error before init.
StepDecision step(RuntimeState& state, const Vector& y);

// Monitor membership of the last measurement.
Membership membership_mode(const RuntimeState& state);

// CSV rows k, y..., sigma, u..., event, S_slack, inner_slack, step_time_us
void write_runtime_header(std::ostream& os, int n, int m);
void write_runtime_row(std::ostream& os, const StepDecision& d, const Vector& y);

}  // namespace handsoff
