#include <handsoff/model.hpp>

#include <cmath>
#include <sstream>

namespace handsoff {

namespace {

SupportFunction exact_support(const HPolytope& P, const ToleranceProfile& tol) {
    if (P.dim() <= 3) return SupportFunction(P.vertices());
    return SupportFunction(P, tol);
}

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("PlantModel: " + what);
}

struct FactorBox {
    Matrix G;
    Vector radius;
    bool symmetrized = false;
    std::string note;
};

FactorBox factor_box(const HPolytope& P, const std::string& name, const ToleranceProfile& tol) {
    const int n = P.dim();
    FactorBox out;
    std::vector<Vector> dirs;
    std::vector<double> radii;
    auto push = [&](const Vector& u, double hi, double lo) {
        const double scale = std::max({1.0, std::abs(hi), std::abs(lo)});
        if (std::abs(hi) <= tol.redundancy * scale && std::abs(lo) <= tol.redundancy * scale) return;
        if (std::abs(hi + lo) > tol.redundancy * scale) out.symmetrized = true;
        dirs.push_back(u);
        radii.push_back(std::max(hi, -lo));
    };
    if (auto box = axis_aligned_bounds(P)) {
        for (int i = 0; i < n; ++i) push(Vector::Unit(n, i), box->second(i), box->first(i));
        out.note = name + ": axis box";
    } else {
        const VPolytope& VP = P.vertices();
        const AffineHull hull = affine_hull(VP, tol);
        if (hull.rank < n) {
            if ((hull.complement.transpose() * hull.center).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, hull.center.norm())) {
                throw std::invalid_argument(name + ": affine hull does not pass through the origin");
            }
            for (int i = 0; i < hull.rank; ++i) {
                const RowVector p = hull.basis.col(i).transpose() * VP.V;
                push(hull.basis.col(i), p.maxCoeff(), p.minCoeff());
            }
            out.note = name + ": flat, " + std::to_string(hull.rank) + " direction(s)";
        } else {
            for (int i = 0; i < n; ++i) {
                push(Vector::Unit(n, i), support(VP, Vector::Unit(n, i)), -support(VP, -Vector::Unit(n, i)));
            }
            out.note = name + ": axis bounding box";
        }
    }
    out.G.resize(n, dirs.size());
    out.radius.resize(dirs.size());
    for (std::size_t i = 0; i < dirs.size(); ++i) {
        out.G.col(i) = dirs[i];
        out.radius(i) = radii[i];
    }
    if (out.symmetrized) out.note += " (symmetrized)";
    return out;
}

}  // namespace

void PlantModel::check_dimensions() const {
    const auto N = A.rows();
    require(N > 0 && A.cols() == N, "A must be square and nonempty");
    require(B.rows() == N, "B must have as many rows as A");
    require(B.cols() > 0, "B must have at least one column");
    require(A.allFinite() && B.allFinite(), "A and B must be finite");
    require(S.dim() == N, "S dimension");
    require(X.dim() == N, "X dimension");
    require(D.dim() == N, "D dimension");
    require(W.dim() == N, "W dimension");
    require(V.dim() == N, "V dimension");
    require(U.dim() == B.cols(), "U dimension");
}

PlantModel with_defaults(PlantModel model, const ToleranceProfile& tol) {
    model.check_dimensions();
    const SupportFunction Vf = exact_support(model.V, tol);
    if (std::isnan(model.eps_p)) model.eps_p = minimal_scaling(Vf, model.S) + 1e-6;
    if (std::isnan(model.eps_m)) model.eps_m = minimal_scaling(-1.0 * Vf, model.S) + 1e-6;
    if (std::isnan(model.delta)) model.delta = chebyshev_radius(model.S);
    return model;
}

double relative_interior_margin(const HPolytope& P, const ToleranceProfile& tol) {
    double margin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < P.num_facets(); ++i) {
        const Vector h = P.H().row(i).transpose();
        const double norm = h.norm();
        const double b = P.b()(i);
        const double lowest = -support(P, -h, tol);
        const bool implicit = lowest >= b - tol.set * std::max(1.0, std::abs(b));
        if (implicit) {
            if (std::abs(b) > tol.set * norm) margin = std::min(margin, -std::abs(b) / norm);
            continue;
        }
        margin = std::min(margin, b / norm);
    }
    return margin;
}

bool ValidationReport::passed() const {
    for (const auto& c : checks) {
        if (!c.passed) return false;
    }
    return true;
}

const CheckResult* ValidationReport::find(const std::string& name) const {
    for (const auto& c : checks) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

ValidationReport validate(const PlantModel& input, const ToleranceProfile& tol) {
    const PlantModel m = with_defaults(input, tol);
    ValidationReport report;
    auto add = [&](std::string name, double margin, double allowance, std::string detail = {}) {
        report.checks.push_back({std::move(name), margin >= -allowance, margin, std::move(detail)});
    };
    auto strictly = [&](std::string name, double margin, std::string detail = {}) {
        report.checks.push_back({std::move(name), margin > 0.0, margin, std::move(detail)});
    };

    const std::pair<const char*, const HPolytope*> sets[] = {{"S", &m.S}, {"X", &m.X}, {"U", &m.U},
                                                             {"D", &m.D}, {"W", &m.W}, {"V", &m.V}};

    // a check that cannot be evaluated (e.g. origin outside S) is a failed check, not an exception
    auto guarded = [&](const std::string& name, const std::string& detail, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            report.checks.push_back({name, false, -std::numeric_limits<double>::infinity(), detail + ": " + e.what()});
        }
    };
    for (const auto& [name, P] : sets) {
        const std::string check = std::string("origin_interior:") + name;
        guarded(check, "origin in the (relative) interior", [&] {
            strictly(check, relative_interior_margin(*P, tol), "origin in the (relative) interior");
        });
    }
    guarded("S_inside_X", "S strictly inside X", [&] {
        strictly("S_inside_X", -contains_polytope(m.S, m.X, tol).worst_slack, "S strictly inside X");
    });

    strictly("eps_range", std::min({m.eps_p, m.eps_m, 1.0 - m.eps_p, 1.0 - m.eps_m}), "0 < eps_p, eps_m < 1");
    strictly("eps_s_range", std::min(m.eps_s - m.eps_p - m.eps_m, 1.0 - m.eps_s), "eps_p + eps_m < eps_s < 1");
    strictly("delta_positive", m.delta, "delta > 0");

    guarded("noise_plus", "V inside eps_p S", [&] {
        add("noise_plus", m.eps_p - minimal_scaling(exact_support(m.V, tol), m.S), tol.set, "V inside eps_p S");
    });
    guarded("noise_minus", "-V inside eps_m S", [&] {
        add("noise_minus", m.eps_m - minimal_scaling(-1.0 * exact_support(m.V, tol), m.S), tol.set,
            "-V inside eps_m S");
    });
    guarded("ball_in_S", "origin ball of radius delta inside S", [&] {
        add("ball_in_S", chebyshev_radius(m.S) - m.delta, tol.set, "origin ball of radius delta inside S");
    });
    guarded("successor_in_X", "A S + W + D inside X", [&] {
        const SupportFunction succ =
            m.A * exact_support(m.S, tol) + exact_support(m.W, tol) + exact_support(m.D, tol);
        add("successor_in_X", -contains_polytope(succ, m.X, tol).worst_slack, tol.set, "A S + W + D inside X");
    });
    return report;
}

DerivedSets derive_sets(const PlantModel& m, const ToleranceProfile& tol) {
    m.check_dimensions();
    DerivedSets d;
    const VPolytope& VS = m.S.vertices();
    const VPolytope disturbances = minkowski_sum(m.W.vertices(), m.D.vertices(), tol);
    d.S_plus = minkowski_sum(affine_image(VS, m.A), disturbances, tol);
    d.S_c = convex_hull_union(VS, d.S_plus, tol);
    const VPolytope& VV = m.V.vertices();
    d.N = minkowski_sum(VPolytope(-VV.V), VV, tol);
    d.N_h = to_hpolytope(d.N, tol);
    d.W = SupportFunction(m.W.vertices());
    d.V = SupportFunction(VV);
    d.Z = cartesian_product(d.W, d.V);
    d.S_monitor = pontryagin_difference(m.S, -1.0 * d.V);
    return d;
}

HZOuterBox outer_box_Z(const PlantModel& m, const ToleranceProfile& tol) {
    m.check_dimensions();
    const int n = m.n();
    const FactorBox w = factor_box(m.W, "W", tol);
    const FactorBox v = factor_box(m.V, "V", tol);
    HZOuterBox out;
    const auto kw = w.G.cols(), kv = v.G.cols();
    out.G = Matrix::Zero(2 * n, kw + kv);
    out.G.topLeftCorner(n, kw) = w.G;
    out.G.bottomRightCorner(n, kv) = v.G;
    out.radius.resize(kw + kv);
    out.radius << w.radius, v.radius;
    out.H_Z = out.radius.cwiseInverse().asDiagonal() * out.G.transpose();
    out.symmetrized = w.symmetrized || v.symmetrized;
    out.note = w.note + "; " + v.note;

    // containment re-check through the exact support of W x V
    const SupportFunction Z = cartesian_product(SupportFunction(m.W.vertices()), SupportFunction(m.V.vertices()));
    for (int i = 0; i < out.H_Z.rows(); ++i) {
        const Vector h = out.H_Z.row(i).transpose();
        if (Z(h) > 1.0 + tol.set || Z(-h) > 1.0 + tol.set) {
            throw SetError(SetError::Kind::Numerical, "outer_box_Z: row " + std::to_string(i) + " does not contain Z");
        }
    }
    return out;
}

Vector sample_disturbance(const PlantModel& m, std::mt19937_64& rng) {
    Vector z(2 * m.n());
    z << sample_uniform(m.W, rng, "W"), sample_uniform(m.V, rng, "V");
    return z;
}

}  // namespace handsoff
