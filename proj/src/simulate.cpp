#include <handsoff/simulate.hpp>

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

namespace handsoff {

int Violations::total() const {
    return state_outside_X + input_outside_U + episode_too_long + off_outside_S + off_nonzero_input;
}

namespace {

// Warms the lazily built vertex caches so concurrent runs only read them.
void warm(const HPolytope& P) {
    if (P.dim() > 3 || P.num_facets() == 0) return;
    try {
        (void)P.vertices();
    } catch (const SetError&) {
    }
}

void check_script(const Source& s, const HPolytope& set, int horizon, const std::string& name, double tol) {
    if (s.kind != Source::Kind::Scripted) return;
    if (static_cast<int>(s.script.size()) < horizon)
        throw ScenarioError("scripted " + name + " has " + std::to_string(s.script.size()) + " values, horizon is " +
                            std::to_string(horizon));
    for (std::size_t k = 0; k < s.script.size(); ++k) {
        if (s.script[k].size() != set.dim() || !contains_point(set, s.script[k], tol))
            throw ScenarioError("scripted " + name + "[" + std::to_string(k) + "] is outside " + name);
    }
}

// Independent stream per source so gating d does not shift w and v.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(id)};
    return std::mt19937_64(seq);
}

Vector draw(const Source& s, const HPolytope& set, std::mt19937_64& rng, long k, const std::string& name) {
    switch (s.kind) {
        case Source::Kind::Zero: return Vector::Zero(set.dim());
        case Source::Kind::Uniform: return sample_uniform(set, rng, name);
        case Source::Kind::Scripted: return s.script[static_cast<std::size_t>(k)];
    }
    return Vector::Zero(set.dim());
}

}  // namespace

Simulator::Simulator(PlantModel model, DerivedSets derived, ControllerRealization K, InvariantSets sets,
                     SimulatorOptions opts)
    : model_(std::move(model)),
      derived_(std::move(derived)),
      K_(std::move(K)),
      sets_(std::move(sets)),
      opts_(std::move(opts)) {
    report_ = certify(model_, derived_, K_, sets_, opts_.checks, opts_.tol);
    certified_ = report_.all_pass();
    if (!certified_ && !opts_.allow_uncertified) {
        std::string failed;
        for (const auto& c : report_.conditions) {
            if (c.required && !c.ok()) failed += (failed.empty() ? "" : ", ") + c.name;
        }
        throw UncertifiedConfiguration("configuration is not certified (" + failed + ")");
    }
    T_max_ = report_.T_max;
    monitors_ = std::make_shared<const MonitorSets>(build_monitors(model_, derived_, sets_, opts_.tol));
    for (const HPolytope* P : {&model_.S, &model_.X, &model_.U, &model_.D, &model_.W, &model_.V}) warm(*P);
}

void Simulator::check_scenario(const Scenario& sc) const {
    if (sc.horizon < 1) throw ScenarioError("horizon must be positive");
    if (sc.x0.size() != model_.n()) throw ScenarioError("x0 has the wrong size");
    if (!contains_point(derived_.S_c, sc.x0, opts_.tol)) throw ScenarioError("x0 is outside S_c");
    const double tol = opts_.tol.set;
    check_script(sc.w, model_.W, sc.horizon, "W", tol);
    check_script(sc.v, model_.V, sc.horizon, "V", tol);
    check_script(sc.d, model_.D, sc.horizon, "D", tol);
}

Trace Simulator::run(const Scenario& sc) const {
    check_scenario(sc);
    const double tol = opts_.tol.set;
    auto rng_w = stream(sc.seed, 1);
    auto rng_v = stream(sc.seed, 2);
    auto rng_d = stream(sc.seed, 3);

    Trace tr;
    tr.rows.reserve(static_cast<std::size_t>(sc.horizon));
    Vector x = sc.x0;
    RuntimeState state;
    int run_length = 0;
    for (long k = 0; k < sc.horizon; ++k) {
        TraceRow row;
        row.k = k;
        row.x = x;
        row.w = draw(sc.w, model_.W, rng_w, k, "W");
        row.v = draw(sc.v, model_.V, rng_v, k, "V");
        row.y = x + row.v;

        StepDecision dec;
        const auto t0 = std::chrono::steady_clock::now();
        if (k == 0) {
            auto [s, d0] = init(K_, monitors_, row.y, 0);
            state = std::move(s);
            dec = std::move(d0);
        } else {
            dec = step(state, row.y);
        }
        row.step_time_us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
        row.sigma = dec.sigma;
        row.u = dec.u;
        row.event = dec.event;
        row.membership = dec.membership;
        if (dec.sigma == 0) {
            row.d = draw(sc.d, model_.D, rng_d, k, "D");
            ++tr.d_draws;
        } else {
            row.d = Vector::Zero(model_.n());
        }

        // post-conditions on the true state
        if (!contains_point(model_.X, x, tol)) ++tr.violations.state_outside_X;
        if (!contains_point(model_.U, row.u, tol)) ++tr.violations.input_outside_U;
        if (dec.sigma == 0) {
            if (!contains_point(model_.S, x, tol)) ++tr.violations.off_outside_S;
            if (!row.u.isZero(0.0)) ++tr.violations.off_nonzero_input;
            if (run_length > 0) {
                tr.episodes.push_back(run_length);
                if (run_length > T_max_) ++tr.violations.episode_too_long;
            }
            run_length = 0;
        } else {
            ++run_length;
        }

        Vector next = model_.A * x + row.w;
        if (dec.sigma == 1) next.noalias() += model_.B * row.u;
        else next += row.d;
        tr.rows.push_back(std::move(row));
        if (!next.allFinite()) {
            tr.aborted = true;
            tr.abort_step = k;
            tr.abort_message = "non-finite state after step " + std::to_string(k);
            break;
        }
        x = std::move(next);
    }
    if (run_length > 0) {
        tr.episodes.push_back(run_length);
        tr.last_episode_open = true;
        if (run_length > T_max_) ++tr.violations.episode_too_long;
    }
    return tr;
}

std::vector<Trace> Simulator::run_batch(const std::vector<Scenario>& scenarios, int threads) const {
    std::vector<Trace> out(scenarios.size());
    if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    threads = std::min<int>(threads, static_cast<int>(scenarios.size()));
    std::vector<std::exception_ptr> errors(scenarios.size());
    auto work = [&](int t) {
        for (std::size_t i = static_cast<std::size_t>(t); i < scenarios.size(); i += static_cast<std::size_t>(threads)) {
            try {
                out[i] = run(scenarios[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(work, t);
    if (threads > 0) work(0);
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

Trace run(const PlantModel& model, const DerivedSets& derived, const ControllerRealization& K,
          const InvariantSets& sets, const Scenario& scenario, const SimulatorOptions& opts) {
    return Simulator(model, derived, K, sets, opts).run(scenario);
}

std::vector<Scenario> random_scenarios(const DerivedSets& derived, int count, int horizon, std::uint64_t seed,
                                       const ToleranceProfile& tol) {
    const HPolytope Sc = to_hpolytope(derived.S_c, tol);
    std::vector<Scenario> out;
    for (int i = 0; i < count; ++i) {
        Scenario sc;
        sc.horizon = horizon;
        sc.seed = seed + static_cast<std::uint64_t>(i);
        auto rng = stream(sc.seed, 0);
        sc.x0 = sample_uniform(Sc, rng, "S_c");
        out.push_back(std::move(sc));
    }
    return out;
}

TimingTable timing_stats(const std::vector<double>& us) {
    if (us.empty()) throw std::invalid_argument("timing_stats: no step times");
    TimingTable t;
    t.samples = us.size();
    std::vector<double> s = us;
    std::sort(s.begin(), s.end());
    t.min = s.front();
    t.max = s.back();
    double sum = 0.0;
    for (double v : s) sum += v;
    t.mean = sum / static_cast<double>(s.size());
    const std::size_t h = s.size() / 2;
    t.median = s.size() % 2 ? s[h] : 0.5 * (s[h - 1] + s[h]);
    std::map<long long, std::pair<int, double>> bins;  // floor(us) -> count, sum
    for (double v : s) {
        auto& b = bins[static_cast<long long>(std::floor(v))];
        ++b.first;
        b.second += v;
    }
    auto best = bins.begin();
    for (auto it = bins.begin(); it != bins.end(); ++it) {
        if (it->second.first > best->second.first) best = it;
    }
    t.mode = best->second.second / best->second.first;
    for (double* f : {&t.min, &t.max, &t.mean, &t.median, &t.mode}) *f *= 1e-3;
    return t;
}

TimingTable timing_stats(const std::vector<Trace>& traces) {
    std::vector<double> us;
    for (const auto& tr : traces) {
        for (const auto& r : tr.rows) us.push_back(r.step_time_us);
    }
    return timing_stats(us);
}

std::string format_timing_table(const TimingTable& t) {
    std::ostringstream os;
    os << "Duration (milliseconds), " << t.samples << " steps\n";
    os << std::left << std::setw(12) << "min" << std::setw(12) << "max" << std::setw(12) << "mean" << std::setw(12)
       << "median" << "mode\n";
    os << std::scientific << std::setprecision(3);
    os << std::setw(12) << t.min << std::setw(12) << t.max << std::setw(12) << t.mean << std::setw(12) << t.median
       << t.mode << '\n';
    return os.str();
}

Scenario scripted_scenario(const PlantModel& model, const ScriptSpec& spec, const ToleranceProfile& tol) {
    if (spec.horizon < 1) throw ScenarioError("horizon must be positive");
    Scenario sc;
    sc.horizon = spec.horizon;
    sc.x0 = spec.x0;
    sc.seed = spec.seed;
    auto build = [&](const std::optional<Profile>& p, const HPolytope& set, const std::string& name,
                     std::uint64_t id) -> Source {
        if (!p) return Source::uniform();
        const int n = set.dim();
        const Matrix map = p->map.size() > 0 ? p->map : Matrix(Matrix::Identity(n, n));
        if (map.rows() != n) throw ScenarioError(name + " profile map has " + std::to_string(map.rows()) + " rows");
        auto rng = stream(spec.seed, 16 + id);
        std::vector<Vector> values(static_cast<std::size_t>(spec.horizon));
        std::vector<bool> set_by_script(values.size(), false);
        for (const auto& seg : p->segments) {
            if (seg.from < 0 || seg.to < seg.from || seg.value.size() != map.cols())
                throw ScenarioError(name + " profile segment [" + std::to_string(seg.from) + ", " +
                                    std::to_string(seg.to) + ") is malformed");
            const Vector v = map * seg.value;
            for (int k = seg.from; k < std::min(seg.to, spec.horizon); ++k) {
                values[static_cast<std::size_t>(k)] = v;
                set_by_script[static_cast<std::size_t>(k)] = true;
            }
        }
        for (std::size_t k = 0; k < values.size(); ++k) {
            if (set_by_script[k]) {
                if (!contains_point(set, values[k], tol.set))
                    throw ScenarioError("scripted " + name + "[" + std::to_string(k) + "] is outside " + name);
            } else {
                values[k] = p->random_elsewhere ? sample_uniform(set, rng, name) : Vector(Vector::Zero(n));
            }
        }
        return Source::scripted(std::move(values));
    };
    sc.w = build(spec.w, model.W, "W", 1);
    sc.v = build(spec.v, model.V, "V", 2);
    sc.d = build(spec.d, model.D, "D", 3);
    return sc;
}

void write_trace_csv(std::ostream& os, const Trace& trace, int n, int m) {
    os << "k";
    for (const char* p : {"x", "y"})
        for (int i = 0; i < n; ++i) os << ',' << p << i;
    os << ",sigma";
    for (int i = 0; i < m; ++i) os << ",u" << i;
    for (const char* p : {"d", "w", "v"})
        for (int i = 0; i < n; ++i) os << ',' << p << i;
    os << ",event,S_slack,inner_slack,step_time_us\n";
    os << std::setprecision(10);
    for (const auto& r : trace.rows) {
        os << r.k;
        for (const Vector* v : {&r.x, &r.y})
            for (Eigen::Index i = 0; i < v->size(); ++i) os << ',' << (*v)(i);
        os << ',' << r.sigma;
        for (Eigen::Index i = 0; i < r.u.size(); ++i) os << ',' << r.u(i);
        for (const Vector* v : {&r.d, &r.w, &r.v})
            for (Eigen::Index i = 0; i < v->size(); ++i) os << ',' << (*v)(i);
        os << ',' << event_code(r.event) << ',' << r.membership.S_slack << ',' << r.membership.inner_slack << ','
           << r.step_time_us << '\n';
    }
}

}  // namespace handsoff
