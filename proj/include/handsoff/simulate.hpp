#pragma once

// Closed-loop episodes of x+ = A x + sigma B u + (1 - sigma) d + w, y = x + v
// under the switching runtime, with trace capture and timing statistics.

#include <handsoff/runtime.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace handsoff {

struct Source {
    enum class Kind { Zero, Uniform, Scripted };
    Kind kind = Kind::Zero;
    std::vector<Vector> script;  // indexed by step k

    static Source zero() { return {}; }
    static Source uniform() { return {Kind::Uniform, {}}; }
    static Source scripted(std::vector<Vector> values) { return {Kind::Scripted, std::move(values)}; }
};

struct Scenario {
    int horizon = 300;
    Vector x0;
    Source w = Source::uniform();
    Source v = Source::uniform();
    // Read only on open-loop steps; a scripted d is indexed by k, a uniform d
    // draws from its own stream only when sigma = 0.
    Source d = Source::uniform();
    std::uint64_t seed = 0;
};

struct TraceRow {
    long k = 0;
    Vector x, y, u, d, w, v;
    int sigma = 0;
    SwitchEvent event = SwitchEvent::None;
    Membership membership;
    double step_time_us = 0.0;
};

struct Violations {
    int state_outside_X = 0;
    int input_outside_U = 0;
    int episode_too_long = 0;   // sigma = 1 runs longer than T_max
    int off_outside_S = 0;      // sigma = 0 with x outside S
    int off_nonzero_input = 0;  // sigma = 0 with u != 0

    int total() const;
};

struct Trace {
    std::vector<TraceRow> rows;
    std::vector<int> episodes;  // lengths of the sigma = 1 runs, in order
    bool last_episode_open = false;
    int d_draws = 0;            // open-loop steps that consumed d
    Violations violations;
    bool aborted = false;
    long abort_step = -1;
    std::string abort_message;
};

struct SimulatorOptions {
    bool allow_uncertified = false;
    CheckSettings checks;  // used for the certification gate
    ToleranceProfile tol;
};

struct ScenarioError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct UncertifiedConfiguration : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Certifies the configuration once (unless allow_uncertified), builds the
// monitors and T_max. run() is const and can be called from several threads.
class Simulator {
public:
    Simulator(PlantModel model, DerivedSets derived, ControllerRealization K, InvariantSets sets,
              SimulatorOptions opts = {});

    // Throws ScenarioError when x0 is outside S_c or a script is short or
    // leaves its set.
    Trace run(const Scenario& scenario) const;
    std::vector<Trace> run_batch(const std::vector<Scenario>& scenarios, int threads = 0) const;

    const GuaranteeReport& report() const { return report_; }
    bool certified() const { return certified_; }
    int T_max() const { return T_max_; }
    const MonitorSets& monitors() const { return *monitors_; }
    const PlantModel& model() const { return model_; }

private:
    void check_scenario(const Scenario& sc) const;

    PlantModel model_;
    DerivedSets derived_;
    ControllerRealization K_;
    InvariantSets sets_;
    SimulatorOptions opts_;
    GuaranteeReport report_;
    bool certified_ = false;
    int T_max_ = 0;
    std::shared_ptr<const MonitorSets> monitors_;
};

Trace run(const PlantModel& model, const DerivedSets& derived, const ControllerRealization& K,
          const InvariantSets& sets, const Scenario& scenario, const SimulatorOptions& opts = {});

// Uniform w, v, d; x0 uniform in S_c. Scenario i uses seed + i.
std::vector<Scenario> random_scenarios(const DerivedSets& derived, int count, int horizon, std::uint64_t seed,
                                       const ToleranceProfile& tol = {});

// Step-time statistics in milliseconds; mode over 1 microsecond bins (the
// mean of the samples in the fullest bin, ties to the lower bin).
struct TimingTable {
    double min = 0.0, max = 0.0, mean = 0.0, median = 0.0, mode = 0.0;
    std::size_t samples = 0;
};

// Throws std::invalid_argument when there are no step times.
TimingTable timing_stats(const std::vector<Trace>& traces);
TimingTable timing_stats(const std::vector<double>& step_times_us);
std::string format_timing_table(const TimingTable& t);

// Piecewise-constant profiles. A segment holds value on [from, to); the map
// turns profile coordinates (for example a driver acceleration) into the
// state-space vector, identity when empty.
struct ProfileSegment {
    int from = 0, to = 0;
    Vector value;
};
struct Profile {
    Matrix map;
    std::vector<ProfileSegment> segments;
    bool random_elsewhere = false;  // unscripted steps sample uniformly instead of zero
};
struct ScriptSpec {
    int horizon = 300;
    Vector x0;
    std::optional<Profile> w, v, d;  // missing: uniform
    std::uint64_t seed = 0;
};

// Throws ScenarioError naming the source and step of any value outside its set.
Scenario scripted_scenario(const PlantModel& model, const ScriptSpec& spec, const ToleranceProfile& tol = {});

// CSV: k, x, y, sigma, u, d, w, v, event, S_slack, inner_slack, step_time_us
void write_trace_csv(std::ostream& os, const Trace& trace, int n, int m);

}  // namespace handsoff
