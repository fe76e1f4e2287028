// handsoff: validate, sets, synthesize, verify, analyze, simulate.
// Exit codes: 0 ok, 1 a requested check failed, 2 bad input, 3 numerical failure.
// Errors are written to stderr as one JSON object.

#include <handsoff/io.hpp>
#include <handsoff/simulate.hpp>
#include <handsoff/synthesis.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#ifndef HANDSOFF_DATA_DIR
#define HANDSOFF_DATA_DIR "data"
#endif

using namespace handsoff;
namespace fs = std::filesystem;

namespace {

enum Exit { Ok = 0, ChecksFailed = 1, BadInput = 2, Numerical = 3 };

struct Failure {
    Exit code;
    std::string kind;
    std::string message;
};

[[noreturn]] void fail(Exit code, std::string kind, std::string message) {
    throw Failure{code, std::move(kind), std::move(message)};
}

struct Inputs {
    std::string model = std::string(HANDSOFF_DATA_DIR) + "/paper_model.json";
    std::string controller = std::string(HANDSOFF_DATA_DIR) + "/paper_controller.json";
    std::string sets = std::string(HANDSOFF_DATA_DIR) + "/paper_sets.json";
    std::string out;
    double allowance = 5e-3;
    double strict = 1e-8;
    double eta = 0.99;
    std::uint64_t seed = 0;
};

Json load(const std::string& path) {
    if (!fs::exists(path)) fail(BadInput, "missing_file", "no such file: " + path);
    try {
        return read_json_file(path);
    } catch (const ParseError& e) {
        fail(BadInput, "parse", e.what());
    }
}

PlantModel load_model(const Inputs& in) {
    try {
        PlantModel m = model_from_json(load(in.model));
        m.check_dimensions();
        return with_defaults(m);
    } catch (const ParseError& e) {
        fail(BadInput, "parse", in.model + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        fail(BadInput, "model", in.model + ": " + e.what());
    }
}

ControllerRealization load_controller(const Inputs& in) {
    try {
        return controller_from_json(load(in.controller));
    } catch (const ParseError& e) {
        fail(BadInput, "parse", in.controller + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        fail(BadInput, "controller", in.controller + ": " + e.what());
    }
}

InvariantSets load_sets(const Inputs& in) {
    try {
        return sets_from_json(load(in.sets));
    } catch (const ParseError& e) {
        fail(BadInput, "parse", in.sets + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        fail(BadInput, "sets", in.sets + ": " + e.what());
    }
}

CheckSettings checks_from(const Inputs& in) {
    CheckSettings s;
    s.eta = in.eta;
    s.strict = in.strict;
    s.allowance = std::max(in.allowance, in.strict);
    return s;
}

// Writes to <out>/<name>, or to stdout without --out.
void emit(const Inputs& in, const std::string& name, const std::string& text) {
    if (in.out.empty()) {
        std::cout << text;
        return;
    }
    fs::create_directories(in.out);
    std::ofstream f(fs::path(in.out) / name);
    if (!f) fail(BadInput, "output", "cannot write " + (fs::path(in.out) / name).string());
    f << text;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

int cmd_validate(const Inputs& in) {
    const auto rep = validate(load_model(in));
    emit(in, "validation.json", dump(validation_to_json(rep)));
    return rep.passed() ? Ok : ChecksFailed;
}

int cmd_sets(const Inputs& in) {
    const auto m = load_model(in);
    emit(in, "derived.json", dump(derived_to_json(derive_sets(m), outer_box_Z(m))));
    return Ok;
}

int cmd_verify(const Inputs& in) {
    const auto m = load_model(in);
    const auto rep = certify(m, derive_sets(m), load_controller(in), load_sets(in), checks_from(in));
    emit(in, "report.json", dump(report_to_json(rep)));
    return rep.all_pass() ? Ok : ChecksFailed;
}

int cmd_analyze(const Inputs& in) {
    const auto m = load_model(in);
    const auto rep = certify(m, derive_sets(m), load_controller(in), load_sets(in), checks_from(in));
    const bool ok = rep.spectral_radius < 1.0 && rep.T_max > 0;
    Json j = {{"spectral_radius", rep.spectral_radius},
              {"alpha", rep.alpha},
              {"beta", rep.beta},
              {"mu", rep.mu},
              {"T_max", rep.T_max},
              {"schur", rep.spectral_radius < 1.0}};
    emit(in, "analysis.json", dump(j));
    return ok ? Ok : ChecksFailed;
}

struct SynthOptions {
    std::string config;
    std::optional<int> n_K;
    std::optional<double> eta, eps_s, eps_c;
    std::optional<int> max_iterations;
};

SynthesisParams params_from(const SynthOptions& o) {
    SynthesisParams p;
    if (!o.config.empty()) {
        const Json j = load(o.config);
        try {
            p.n_K = j.value("n_K", p.n_K);
            p.eta = j.value("eta", p.eta);
            if (j.contains("eps_s")) p.eps_s = j.at("eps_s").get<double>();
            p.eps_c = j.value("eps_c", p.eps_c);
            p.max_iterations = j.value("max_iterations", p.max_iterations);
            p.psd_margin = j.value("psd_margin", p.psd_margin);
            p.certified_cost = j.value("certified_cost", p.certified_cost);
            p.variable_bound = j.value("variable_bound", p.variable_bound);
            p.slack_floor = j.value("slack_floor", p.slack_floor);
            if (j.contains("init_grid")) p.init_grid = j.at("init_grid").get<std::vector<double>>();
        } catch (const Json::exception& e) {
            fail(BadInput, "parse", o.config + ": " + e.what());
        }
    }
    if (o.n_K) p.n_K = *o.n_K;
    if (o.eta) p.eta = *o.eta;
    if (o.eps_s) p.eps_s = *o.eps_s;
    if (o.eps_c) p.eps_c = *o.eps_c;
    if (o.max_iterations) p.max_iterations = *o.max_iterations;
    return p;
}

Json log_to_json(const std::vector<IterationLog>& log) {
    Json a = Json::array();
    for (const auto& l : log) {
        a.push_back({{"k", l.k},
                     {"cost", l.cost},
                     {"gap", l.gap},
                     {"status", l.status},
                     {"wall_ms", l.wall_ms},
                     {"min_singular_value", l.min_singular_value},
                     {"solver_iterations", l.solver_iterations}});
    }
    return a;
}

int cmd_synthesize(const Inputs& in, const SynthOptions& so) {
    const auto m = load_model(in);
    const SynthesisParams p = params_from(so);
    try {
        p.check(m.eps_p, m.eps_m);
    } catch (const std::invalid_argument& e) {
        fail(BadInput, "params", e.what());
    }
    const auto derived = derive_sets(m);
    SynthesisResult r;
    try {
        r = iterate(initialize(m, derived, p));
    } catch (const InitializationFailed& e) {
        fail(Numerical, "initialization", e.what());
    } catch (const RecursiveFeasibilityBroken& e) {
        fail(Numerical, "recursive_feasibility", e.what());
    }
    for (const auto& l : r.log) {
        std::cerr << "k " << l.k << "  J " << l.cost << "  gap " << l.gap << "  " << l.status << "  " << l.wall_ms
                  << " ms\n";
    }
    Json summary = {{"verdict", std::string(to_string(r.verdict))},
                    {"gap", r.final.gap},
                    {"iterations", static_cast<int>(r.history.size()) - 1},
                    {"largest_increase", r.largest_increase},
                    {"smallest_singular_value", r.smallest_singular_value},
                    {"log", log_to_json(r.log)}};
    Inputs out = in;
    if (out.out.empty()) out.out = ".";
    if (r.verdict != Convergence::Certified) {
        emit(out, "synthesis.json", dump(summary));
        return ChecksFailed;
    }
    try {
        const auto design = extract(r, m, derived);
        summary["report"] = report_to_json(design.report);
        emit(out, "controller.json", dump(controller_to_json(design.K)));
        emit(out, "sets.json", dump(sets_to_json(design.sets)));
        emit(out, "synthesis.json", dump(summary));
    } catch (const ExtractionRejected& e) {
        summary["rejected"] = {{"condition", e.condition}, {"message", e.what()}};
        emit(out, "synthesis.json", dump(summary));
        return ChecksFailed;
    }
    return Ok;
}

struct SimOptions {
    int steps = 300;
    int runs = 1;
    std::vector<double> x0;
    bool allow_uncertified = false;
};

int cmd_simulate(const Inputs& in, const SimOptions& so) {
    const auto m = load_model(in);
    const auto derived = derive_sets(m);
    if (so.steps < 1 || so.runs < 1) fail(BadInput, "usage", "--steps and --runs must be positive");
    SimulatorOptions opts;
    opts.checks = checks_from(in);
    opts.allow_uncertified = so.allow_uncertified;
    std::optional<Simulator> sim;
    try {
        sim.emplace(m, derived, load_controller(in), load_sets(in), opts);
    } catch (const UncertifiedConfiguration& e) {
        fail(ChecksFailed, "uncertified", e.what());
    }
    auto scenarios = random_scenarios(derived, so.runs, so.steps, in.seed);
    if (!so.x0.empty()) {
        if (static_cast<int>(so.x0.size()) != m.n()) fail(BadInput, "usage", "--x0 needs " + std::to_string(m.n()) + " values");
        for (auto& sc : scenarios) sc.x0 = Eigen::Map<const Vector>(so.x0.data(), m.n());
    }
    std::vector<Trace> traces;
    try {
        traces = sim->run_batch(scenarios);
    } catch (const ScenarioError& e) {
        fail(BadInput, "scenario", e.what());
    }
    int violations = 0;
    Json runs = Json::array();
    for (std::size_t i = 0; i < traces.size(); ++i) {
        const auto& t = traces[i];
        violations += t.violations.total() + (t.aborted ? 1 : 0);
        runs.push_back({{"seed", scenarios[i].seed},
                        {"episodes", t.episodes},
                        {"open_loop_steps", t.d_draws},
                        {"violations",
                         {{"state_outside_X", t.violations.state_outside_X},
                          {"input_outside_U", t.violations.input_outside_U},
                          {"episode_too_long", t.violations.episode_too_long},
                          {"off_outside_S", t.violations.off_outside_S},
                          {"off_nonzero_input", t.violations.off_nonzero_input}}},
                        {"aborted", t.aborted}});
    }
    const TimingTable tt = timing_stats(traces);
    std::ostringstream csv;
    write_trace_csv(csv, traces.front(), m.n(), m.m());
    if (in.out.empty()) {
        std::cout << csv.str();
    } else {
        emit(in, "trace.csv", csv.str());
        Json summary = {{"T_max", sim->T_max()},
                        {"certified", sim->certified()},
                        {"runs", runs},
                        {"timing_ms",
                         {{"min", tt.min}, {"max", tt.max}, {"mean", tt.mean}, {"median", tt.median}, {"mode", tt.mode}}}};
        emit(in, "summary.json", dump(summary));
        std::cout << format_timing_table(tt);
    }
    return violations == 0 ? Ok : ChecksFailed;
}

void check_solver_env() {
    const char* s = std::getenv("HANDSOFF_SOLVER");
    if (s == nullptr || std::string(s).empty() || std::string(s) == "ipm") return;
    fail(BadInput, "solver", std::string("unknown HANDSOFF_SOLVER '") + s + "' (available: ipm)");
}

void print_error(const Failure& f) {
    std::cerr << Json{{"error", f.kind}, {"message", f.message}, {"exit_code", static_cast<int>(f.code)}}.dump()
              << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Set-based hands-off control: set checks, synthesis and simulation"};
    app.require_subcommand(1);
    Inputs in;
    SynthOptions so;
    SimOptions sim;

    auto add_model = [&](CLI::App* c) { c->add_option("--model", in.model, "plant model JSON")->capture_default_str(); };
    auto add_design = [&](CLI::App* c) {
        c->add_option("--controller", in.controller, "controller JSON")->capture_default_str();
        c->add_option("--sets", in.sets, "invariant sets JSON")->capture_default_str();
        c->add_option("--eta", in.eta, "contraction factor of the inner set")->capture_default_str();
        c->add_option("--allowance", in.allowance, "facet slack reported as marginal instead of failed")
            ->capture_default_str();
        c->add_option("--strict", in.strict, "facet slack counted as a clean pass")->capture_default_str();
    };
    auto add_out = [&](CLI::App* c) { c->add_option("--out", in.out, "output directory (default: stdout)"); };

    auto* validate_cmd = app.add_subcommand("validate", "check the model's sets and parameters");
    add_model(validate_cmd);
    add_out(validate_cmd);

    auto* sets_cmd = app.add_subcommand("sets", "dump the derived sets");
    add_model(sets_cmd);
    add_out(sets_cmd);

    auto* synth_cmd = app.add_subcommand("synthesize", "design a controller with its inner/outer sets");
    add_model(synth_cmd);
    synth_cmd->add_option("--out", in.out, "output directory (default: .)");
    synth_cmd->add_option("--config", so.config, "synthesis parameters JSON");
    synth_cmd->add_option("--nk", so.n_K, "controller order");
    synth_cmd->add_option("--eta", so.eta, "contraction factor");
    synth_cmd->add_option("--eps-s", so.eps_s, "inner set scaling inside S");
    synth_cmd->add_option("--eps-c", so.eps_c, "stop when the gap improves by less than this");
    synth_cmd->add_option("--max-iter", so.max_iterations, "iteration budget");

    auto* verify_cmd = app.add_subcommand("verify", "run the full guarantee report");
    add_model(verify_cmd);
    add_design(verify_cmd);
    add_out(verify_cmd);

    auto* analyze_cmd = app.add_subcommand("analyze", "alpha, beta, mu and T_max");
    add_model(analyze_cmd);
    add_design(analyze_cmd);
    add_out(analyze_cmd);

    auto* sim_cmd = app.add_subcommand("simulate", "closed-loop episodes under the switching rule");
    add_model(sim_cmd);
    add_design(sim_cmd);
    sim_cmd->add_option("--out", in.out, "output directory for trace.csv and summary.json (default: CSV on stdout)");
    sim_cmd->add_option("--steps", sim.steps, "horizon")->capture_default_str();
    sim_cmd->add_option("--runs", sim.runs, "number of scenarios (trace.csv holds the first)")->capture_default_str();
    sim_cmd->add_option("--seed", in.seed, "scenario seed")->capture_default_str();
    sim_cmd->add_option("--x0", sim.x0, "initial state (default: uniform in S_c)")->expected(-1);
    sim_cmd->add_flag("--allow-uncertified", sim.allow_uncertified, "simulate even if the report fails");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error({BadInput, "usage", e.what()});
        return BadInput;
    }

    try {
        check_solver_env();
        if (*validate_cmd) return cmd_validate(in);
        if (*sets_cmd) return cmd_sets(in);
        if (*synth_cmd) return cmd_synthesize(in, so);
        if (*verify_cmd) return cmd_verify(in);
        if (*analyze_cmd) return cmd_analyze(in);
        if (*sim_cmd) return cmd_simulate(in, sim);
    } catch (const Failure& f) {
        print_error(f);
        return f.code;
    } catch (const ParseError& e) {
        print_error({BadInput, "parse", e.what()});
        return BadInput;
    } catch (const std::invalid_argument& e) {
        print_error({BadInput, "invalid_argument", e.what()});
        return BadInput;
    } catch (const std::exception& e) {
        print_error({Numerical, "numerical", e.what()});
        return Numerical;
    }
    return Ok;
}
