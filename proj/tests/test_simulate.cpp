#include <doctest.h>

#include <handsoff/simulate.hpp>

#include <sstream>

#include "fixtures.hpp"

using namespace handsoff;

namespace {

struct Printed {
    PlantModel m = fixture::paper_model();
    DerivedSets d = derive_sets(m);
    ControllerRealization K = fixture::paper_controller();
    InvariantSets sets = fixture::paper_sets();
    Simulator sim{m, d, K, sets, options()};

    static SimulatorOptions options() {
        SimulatorOptions o;
        o.checks = fixture::printed_settings();
        return o;
    }
};

const Printed& printed() {
    static const Printed p;
    return p;
}

Scenario quiet(const Vector& x0, int horizon) {
    Scenario sc;
    sc.horizon = horizon;
    sc.x0 = x0;
    sc.w = sc.v = sc.d = Source::zero();
    return sc;
}

std::vector<Vector> repeat(const Vector& v, int n) { return std::vector<Vector>(static_cast<std::size_t>(n), v); }

bool same_signals(const Trace& a, const Trace& b) {
    if (a.rows.size() != b.rows.size()) return false;
    for (std::size_t k = 0; k < a.rows.size(); ++k) {
        const auto& r = a.rows[k];
        const auto& s = b.rows[k];
        if (r.x != s.x || r.y != s.y || r.u != s.u || r.d != s.d || r.w != s.w || r.v != s.v || r.sigma != s.sigma)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("construction certifies the configuration") {
    const auto& p = printed();
    CHECK(p.sim.certified());
    CHECK(p.sim.T_max() > 0);
    SUBCASE("an uncertified controller is refused unless allowed") {
        ControllerRealization K0 = p.K;
        K0.D_K.setZero();  // leaves the double integrator unstabilized
        CHECK_THROWS_AS(Simulator(p.m, p.d, K0, p.sets, Printed::options()), UncertifiedConfiguration);
        SimulatorOptions o = Printed::options();
        o.allow_uncertified = true;
        const Simulator loose(p.m, p.d, K0, p.sets, o);
        CHECK_FALSE(loose.certified());
    }
}

TEST_CASE("equilibrium stays put") {
    const auto tr = printed().sim.run(quiet(Vector::Zero(2), 50));
    REQUIRE(tr.rows.size() == 50);
    for (const auto& r : tr.rows) {
        CHECK(r.sigma == 0);
        CHECK(r.x.isZero(0.0));
    }
    CHECK(tr.episodes.empty());
    CHECK(tr.violations.total() == 0);
}

TEST_CASE("plant update follows x+ = A x + sigma B u + (1 - sigma) d + w") {
    const auto& p = printed();
    Scenario sc;
    sc.horizon = 120;
    sc.x0 = Vector{{0.8, 0.5}};
    sc.seed = 5;
    const auto tr = p.sim.run(sc);
    for (std::size_t k = 0; k + 1 < tr.rows.size(); ++k) {
        const auto& r = tr.rows[k];
        Vector expect = p.m.A * r.x + r.w;
        expect += r.sigma ? Vector(p.m.B * r.u) : r.d;
        CHECK((tr.rows[k + 1].x - expect).norm() <= 1e-14);
        CHECK((r.y - r.x - r.v).norm() <= 1e-15);
    }
}

TEST_CASE("start outside S") {
    const auto& p = printed();
    // S_c is the hexagon with x_1 <= 1.2325; this point is in it but not in S
    const Vector x0{{1.1, 2.0}};
    REQUIRE(contains_point(p.d.S_c, x0));
    REQUIRE_FALSE(contains_point(p.m.S, x0));
    Scenario sc;
    sc.horizon = 300;
    sc.x0 = x0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        sc.seed = seed;
        const auto tr = p.sim.run(sc);
        CHECK(tr.rows[0].sigma == 1);
        REQUIRE_FALSE(tr.episodes.empty());
        CHECK(tr.episodes[0] <= p.sim.T_max());
        const auto& off = tr.rows[static_cast<std::size_t>(tr.episodes[0])];
        CHECK(off.event == SwitchEvent::Deactivated);
        CHECK(contains_point(p.m.S, off.x));
        CHECK(tr.violations.total() == 0);
    }
}

TEST_CASE("randomized episodes respect the guarantees") {
    const auto& p = printed();
    const auto scenarios = random_scenarios(p.d, 24, 300, 100);
    const auto traces = p.sim.run_batch(scenarios);
    int switches = 0;
    for (const auto& tr : traces) {
        CHECK(tr.violations.state_outside_X == 0);
        CHECK(tr.violations.input_outside_U == 0);
        CHECK(tr.violations.episode_too_long == 0);
        CHECK(tr.violations.off_outside_S == 0);
        CHECK(tr.violations.off_nonzero_input == 0);
        CHECK_FALSE(tr.aborted);
        // independent recount from the rows
        int run = 0, longest = 0;
        for (const auto& r : tr.rows) {
            run = r.sigma ? run + 1 : 0;
            longest = std::max(longest, run);
            if (r.sigma == 0) CHECK(contains_point(p.m.S, r.x, 1e-8));
            switches += r.event != SwitchEvent::None;
        }
        CHECK(longest <= p.sim.T_max());
    }
    CHECK(switches > 0);
}

TEST_CASE("determinism and stream independence") {
    const auto& p = printed();
    auto sc = random_scenarios(p.d, 1, 200, 42)[0];
    const auto a = p.sim.run(sc);
    const auto b = p.sim.run(sc);
    CHECK(same_signals(a, b));
    SUBCASE("batch runs match serial runs") {
        const auto batch = p.sim.run_batch({sc, sc, sc}, 3);
        for (const auto& t : batch) CHECK(same_signals(a, t));
    }
    SUBCASE("another seed differs") {
        sc.seed += 1;
        CHECK_FALSE(same_signals(a, p.sim.run(sc)));
    }
    SUBCASE("d is consumed only in open loop, and w, v do not depend on it") {
        int off = 0;
        for (const auto& r : a.rows) {
            off += r.sigma == 0;
            if (r.sigma == 1) CHECK(r.d.isZero(0.0));
        }
        CHECK(a.d_draws == off);
        Scenario z = sc;
        z.d = Source::zero();
        const auto c = p.sim.run(z);
        for (std::size_t k = 0; k < a.rows.size(); ++k) {
            CHECK(a.rows[k].w == c.rows[k].w);
            CHECK(a.rows[k].v == c.rows[k].v);
        }
    }
}

TEST_CASE("scenario validation") {
    const auto& p = printed();
    CHECK_THROWS_AS(p.sim.run(quiet(Vector{{50.0, 0.0}}, 10)), ScenarioError);
    Scenario sc = quiet(Vector::Zero(2), 10);
    sc.d = Source::scripted(repeat(Vector::Zero(2), 5));
    CHECK_THROWS_AS(p.sim.run(sc), ScenarioError);
    auto script = repeat(Vector::Zero(2), 10);
    script[7] = Vector{{0.0, 3.0}};  // not a multiple of B
    sc.d = Source::scripted(script);
    try {
        p.sim.run(sc);
        FAIL("expected ScenarioError");
    } catch (const ScenarioError& e) {
        CHECK(std::string(e.what()).find("D[7]") != std::string::npos);
    }
}

TEST_CASE("timing_stats") {
    SUBCASE("constant samples: all five agree") {
        const auto t = timing_stats(std::vector<double>(30, 3.7));
        for (double v : {t.min, t.max, t.mean, t.median, t.mode}) CHECK(v == doctest::Approx(3.7e-3).epsilon(1e-12));
    }
    SUBCASE("hand-computed sample") {
        // bins [1,2): 1.2, 1.4, 1.9 is the fullest
        const auto t = timing_stats(std::vector<double>{5.0, 1.2, 1.4, 3.0, 1.9, 9.5});
        CHECK(t.min == doctest::Approx(1.2e-3));
        CHECK(t.max == doctest::Approx(9.5e-3));
        CHECK(t.mean == doctest::Approx(22.0 / 6.0 * 1e-3));
        CHECK(t.median == doctest::Approx(0.5 * (1.9 + 3.0) * 1e-3));
        CHECK(t.mode == doctest::Approx(1.5e-3));
    }
    SUBCASE("no samples is an error") {
        CHECK_THROWS_AS(timing_stats(std::vector<double>{}), std::invalid_argument);
        CHECK_THROWS_AS(timing_stats(std::vector<Trace>{}), std::invalid_argument);
    }
    SUBCASE("a 300-step run stays well below a millisecond") {
        const auto& p = printed();
        const auto tr = p.sim.run(random_scenarios(p.d, 1, 300, 7)[0]);
        const auto t = timing_stats(std::vector<Trace>{tr});
        CHECK(t.samples == 300);
        CHECK(t.median < 1.0);
        CHECK(format_timing_table(t).find("median") != std::string::npos);
    }
}

TEST_CASE("scripted scenarios") {
    const auto& p = printed();
    SUBCASE("all-zero script equals zero sources") {
        ScriptSpec spec;
        spec.horizon = 80;
        spec.x0 = Vector{{1.1, 2.0}};
        spec.w = spec.v = spec.d = Profile{};
        const auto a = p.sim.run(scripted_scenario(p.m, spec));
        const auto b = p.sim.run(quiet(spec.x0, 80));
        CHECK(same_signals(a, b));
    }
    SUBCASE("driver input beyond 25 is rejected with its step") {
        ScriptSpec spec;
        spec.horizon = 50;
        spec.x0 = Vector::Zero(2);
        Profile d;
        d.map = p.m.B;
        d.segments.push_back({10, 12, Vector{{30.0}}});
        spec.d = d;
        try {
            scripted_scenario(p.m, spec);
            FAIL("expected ScenarioError");
        } catch (const ScenarioError& e) {
            CHECK(std::string(e.what()).find("D[10]") != std::string::npos);
        }
    }
    SUBCASE("a burst at a deactivation step does not re-activate") {
        // run once without d to find the first switch-off, then script a
        // driver burst at exactly that step
        ScriptSpec spec;
        spec.horizon = 200;
        spec.x0 = Vector{{1.1, 2.0}};
        spec.seed = 3;
        Profile zero_d;
        zero_d.map = p.m.B;
        spec.d = zero_d;
        const Scenario base = scripted_scenario(p.m, spec);
        const auto tr = p.sim.run(base);
        REQUIRE_FALSE(tr.episodes.empty());
        const auto k_off = static_cast<std::size_t>(tr.episodes[0]);
        REQUIRE(tr.rows[k_off].event == SwitchEvent::Deactivated);
        const auto& r = tr.rows[k_off];
        const Vector v_next = tr.rows[k_off + 1].v;
        // largest burst that keeps the next measurement in the S monitor but
        // pushes it out of the inner monitor (the hysteresis band)
        double chosen = std::nan("");
        for (double c = 25.0; c >= -25.0; c -= 0.05) {
            const Vector y_next = p.m.A * r.x + r.w + p.m.B * c + v_next;
            const auto mb = classify_measurement(p.sim.monitors(), y_next);
            if (mb.in_S && !mb.in_inner) {
                chosen = c;
                break;
            }
        }
        REQUIRE(std::isfinite(chosen));
        Profile burst = zero_d;
        burst.segments.push_back({static_cast<int>(k_off), static_cast<int>(k_off) + 1, Vector{{chosen}}});
        spec.d = burst;
        const auto tr2 = p.sim.run(scripted_scenario(p.m, spec));
        CHECK(tr2.rows[k_off].sigma == 0);
        CHECK_FALSE(tr2.rows[k_off + 1].membership.in_inner);
        CHECK(tr2.rows[k_off + 1].sigma == 0);
    }
}

TEST_CASE("trace CSV") {
    const auto& p = printed();
    const auto tr = p.sim.run(random_scenarios(p.d, 1, 300, 7)[0]);
    std::ostringstream os;
    write_trace_csv(os, tr, 2, 1);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "k,x0,x1,y0,y1,sigma,u0,d0,d1,w0,w1,v0,v1,event,S_slack,inner_slack,step_time_us");
    int rows = 0;
    while (std::getline(is, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 16);
    }
    CHECK(rows == 300);
}
