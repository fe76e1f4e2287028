#include <handsoff/optim.hpp>

#include "interior_point.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace handsoff {

std::string_view to_string(SolveCode code) {
    switch (code) {
        case SolveCode::Optimal: return "Optimal";
        case SolveCode::Infeasible: return "Infeasible";
        case SolveCode::Unbounded: return "Unbounded";
        case SolveCode::NumericalFailure: return "NumericalFailure";
    }
    return "Unknown";
}

void LinearProgram::validate() const {
    const auto n = objective.size();
    auto fail = [](const std::string& what) { throw std::invalid_argument("LinearProgram: " + what); };
    if (!objective.allFinite()) fail("objective has non-finite entries");
    if (A_ineq.rows() != b_ineq.size()) fail("A_ineq rows != b_ineq size");
    if (A_ineq.rows() > 0 && A_ineq.cols() != n) fail("A_ineq columns != number of variables");
    if (A_eq.rows() != b_eq.size()) fail("A_eq rows != b_eq size");
    if (A_eq.rows() > 0 && A_eq.cols() != n) fail("A_eq columns != number of variables");
    if (!A_ineq.allFinite() || !b_ineq.allFinite() || !A_eq.allFinite() || !b_eq.allFinite()) {
        fail("constraint data has non-finite entries");
    }
    if (lower.size() != 0 && lower.size() != n) fail("lower bound size mismatch");
    if (upper.size() != 0 && upper.size() != n) fail("upper bound size mismatch");
    for (Eigen::Index i = 0; i < lower.size(); ++i) {
        if (std::isnan(lower(i)) || lower(i) == std::numeric_limits<double>::infinity()) fail("invalid lower bound");
    }
    for (Eigen::Index i = 0; i < upper.size(); ++i) {
        if (std::isnan(upper(i)) || upper(i) == -std::numeric_limits<double>::infinity()) fail("invalid upper bound");
    }
}

LmiBlock::LmiBlock(std::string block_name, int size, bool is_strict)
    : name(std::move(block_name)), constant(Matrix::Zero(size, size)), strict(is_strict) {}

void LmiBlock::add(int var, int row, int col, double value) {
    if (value == 0.0) return;
    if (row < col) std::swap(row, col);
    terms.push_back({var, row, col, value});
}

void LmiBlock::add_constant(int row, int col, double value) {
    constant(row, col) += value;
    if (row != col) constant(col, row) += value;
}

Matrix LmiBlock::evaluate(const Vector& z) const {
    Matrix F = constant;
    for (const auto& t : terms) {
        F(t.row, t.col) += t.value * z(t.var);
        if (t.row != t.col) F(t.col, t.row) += t.value * z(t.var);
    }
    return F;
}

double AffineRow::evaluate(const Vector& z) const {
    double v = constant;
    for (const auto& [var, c] : coeffs) v += c * z(var);
    return v;
}

int SemidefiniteProgram::add_variable() {
    objective.conservativeResize(num_vars + 1);
    objective(num_vars) = 0.0;
    return num_vars++;
}

int SemidefiniteProgram::add_variables(int count) {
    const int first = num_vars;
    objective.conservativeResize(num_vars + count);
    objective.tail(count).setZero();
    num_vars += count;
    return first;
}

void SemidefiniteProgram::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("SemidefiniteProgram: " + what); };
    if (objective.size() != num_vars) fail("objective size != num_vars");
    if (!objective.allFinite()) fail("objective has non-finite entries");
    if (!(margin >= 0.0)) fail("margin must be >= 0");
    for (const auto& blk : blocks) {
        if (blk.constant.rows() != blk.constant.cols()) fail("block '" + blk.name + "' constant not square");
        if (!blk.constant.allFinite()) fail("block '" + blk.name + "' has non-finite constant");
        if ((blk.constant - blk.constant.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + blk.constant.cwiseAbs().maxCoeff())) {
            fail("block '" + blk.name + "' constant not symmetric");
        }
        for (const auto& t : blk.terms) {
            if (t.var < 0 || t.var >= num_vars || t.row < 0 || t.row >= blk.size() || t.col < 0 || t.col > t.row ||
                !std::isfinite(t.value)) {
                fail("block '" + blk.name + "' has an invalid term");
            }
        }
    }
    for (const auto* rows : {&inequalities, &equalities}) {
        for (const auto& r : *rows) {
            if (!std::isfinite(r.constant)) fail("row '" + r.name + "' has non-finite constant");
            for (const auto& [var, c] : r.coeffs) {
                if (var < 0 || var >= num_vars || !std::isfinite(c)) fail("row '" + r.name + "' has an invalid term");
            }
        }
    }
}

Vector sdp_slacks(const SemidefiniteProgram& problem, const Vector& z) {
    Vector out(problem.blocks.size() + problem.inequalities.size());
    Eigen::Index idx = 0;
    for (const auto& blk : problem.blocks) {
        const double lmin = min_eigenvalue_symmetric(blk.evaluate(z));
        out(idx++) = lmin - (blk.strict ? problem.margin : 0.0);
    }
    for (const auto& r : problem.inequalities) out(idx++) = r.evaluate(z);
    return out;
}

namespace {

// z = offset + sum_j map[i] (w_j * coef)
struct VariableMap {
    Vector offset;
    std::vector<std::vector<std::pair<int, double>>> map;
    int reduced = 0;
};

struct Reduction {
    VariableMap vars;
    bool infeasible = false;
    std::string message;
};

Reduction eliminate_equalities(const SemidefiniteProgram& P, double tol) {
    Reduction red;
    const int n = P.num_vars;
    std::vector<bool> fixed(n, false);
    Vector value = Vector::Zero(n);

    std::vector<const AffineRow*> general;
    for (const auto& row : P.equalities) {
        std::map<int, double> merged;
        for (const auto& [v, c] : row.coeffs) merged[v] += c;
        std::erase_if(merged, [](const auto& kv) { return kv.second == 0.0; });
        if (merged.size() == 1) {
            const auto [v, c] = *merged.begin();
            const double val = -row.constant / c;
            if (fixed[v] && std::abs(value(v) - val) > tol * (1.0 + std::abs(val))) {
                red.infeasible = true;
                red.message = "conflicting equality '" + row.name + "'";
                return red;
            }
            fixed[v] = true;
            value(v) = val;
        } else if (merged.empty()) {
            if (std::abs(row.constant) > tol) {
                red.infeasible = true;
                red.message = "inconsistent constant equality '" + row.name + "'";
                return red;
            }
        } else {
            general.push_back(&row);
        }
    }

    std::vector<int> free_index(n, -1);
    int nfree = 0;
    for (int i = 0; i < n; ++i) {
        if (!fixed[i]) free_index[i] = nfree++;
    }

    red.vars.offset = value;
    red.vars.map.assign(n, {});

    // Rows that still couple several free variables: dense elimination.
    Matrix E = Matrix::Zero(static_cast<Eigen::Index>(general.size()), nfree);
    Vector f = Vector::Zero(static_cast<Eigen::Index>(general.size()));
    for (std::size_t r = 0; r < general.size(); ++r) {
        double rhs = -general[r]->constant;
        for (const auto& [v, c] : general[r]->coeffs) {
            if (fixed[v]) rhs -= c * value(v);
            else E(static_cast<Eigen::Index>(r), free_index[v]) += c;
        }
        f(static_cast<Eigen::Index>(r)) = rhs;
    }
    // Drop rows that became empty.
    std::vector<Eigen::Index> keep;
    for (Eigen::Index r = 0; r < E.rows(); ++r) {
        if (E.row(r).cwiseAbs().maxCoeff() > 0.0) keep.push_back(r);
        else if (std::abs(f(r)) > tol) {
            red.infeasible = true;
            red.message = "inconsistent equality '" + general[static_cast<std::size_t>(r)]->name + "'";
            return red;
        }
    }

    if (keep.empty()) {
        for (int i = 0; i < n; ++i) {
            if (!fixed[i]) red.vars.map[i].push_back({free_index[i], 1.0});
        }
        red.vars.reduced = nfree;
        return red;
    }

    Matrix Er(static_cast<Eigen::Index>(keep.size()), nfree);
    Vector fr(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t r = 0; r < keep.size(); ++r) {
        Er.row(static_cast<Eigen::Index>(r)) = E.row(keep[r]);
        fr(static_cast<Eigen::Index>(r)) = f(keep[r]);
    }
    Eigen::JacobiSVD<Matrix> svd(Er, Eigen::ComputeFullU | Eigen::ComputeFullV);
    svd.setThreshold(1e-12);
    const Vector particular = svd.solve(fr);
    if ((Er * particular - fr).norm() > tol * (1.0 + fr.norm())) {
        red.infeasible = true;
        red.message = "inconsistent linear equalities";
        return red;
    }
    const auto rank = svd.rank();
    const Matrix null = svd.matrixV().rightCols(nfree - rank);
    red.vars.reduced = static_cast<int>(null.cols());
    for (int i = 0; i < n; ++i) {
        if (fixed[i]) continue;
        const int fi = free_index[i];
        red.vars.offset(i) = particular(fi);
        for (Eigen::Index j = 0; j < null.cols(); ++j) {
            if (std::abs(null(fi, j)) > 1e-15) red.vars.map[i].push_back({static_cast<int>(j), null(fi, j)});
        }
    }
    return red;
}

struct Prepared {
    ipm::ConeProblem cone;
    VariableMap vars;
    std::vector<int> reduced_to_cone;  // -1 when a reduced variable is unused
    double objective_offset = 0.0;
    bool infeasible = false;
    bool unbounded = false;
    int offending_block = -1;
    std::string message;
};

Prepared prepare(const SemidefiniteProgram& P, const ToleranceProfile& tol) {
    Prepared out;
    Reduction red = eliminate_equalities(P, tol.equality);
    if (red.infeasible) {
        out.infeasible = true;
        out.message = red.message;
        return out;
    }
    out.vars = std::move(red.vars);
    const int nr = out.vars.reduced;
    const Vector& z0 = out.vars.offset;

    // Reduced objective: minimize c.z  ->  maximize b.w with b = -T^T c.
    Vector b_red = Vector::Zero(nr);
    for (int i = 0; i < P.num_vars; ++i) {
        for (const auto& [j, coef] : out.vars.map[i]) b_red(j) -= P.objective(i) * coef;
    }
    out.objective_offset = P.objective.dot(z0);

    std::vector<bool> used(nr, false);

    struct RawBlock {
        Matrix C;
        std::map<int, std::map<std::pair<int, int>, double>> coeff;  // reduced var -> (r,c) -> value
    };
    std::vector<RawBlock> raw;
    for (std::size_t k = 0; k < P.blocks.size(); ++k) {
        const auto& blk = P.blocks[k];
        RawBlock rb;
        rb.C = blk.constant;
        for (const auto& t : blk.terms) {
            const double zt = z0(t.var);
            if (zt != 0.0) {
                rb.C(t.row, t.col) += t.value * zt;
                if (t.row != t.col) rb.C(t.col, t.row) += t.value * zt;
            }
            for (const auto& [j, coef] : out.vars.map[t.var]) {
                // S = C - sum y A, so A carries the negated coefficient.
                auto& m = rb.coeff[j];
                m[{t.row, t.col}] -= t.value * coef;
                if (t.row != t.col) m[{t.col, t.row}] -= t.value * coef;
            }
        }
        if (blk.strict) rb.C.diagonal().array() -= P.margin;
        for (auto it = rb.coeff.begin(); it != rb.coeff.end();) {
            std::erase_if(it->second, [](const auto& kv) { return kv.second == 0.0; });
            it = it->second.empty() ? rb.coeff.erase(it) : std::next(it);
        }
        if (rb.coeff.empty()) {
            if (min_eigenvalue_symmetric(rb.C) < -tol.psd) {
                out.infeasible = true;
                out.offending_block = static_cast<int>(k);
                out.message = "constant block '" + blk.name + "' is not positive semidefinite";
                return out;
            }
            raw.push_back({});
            continue;
        }
        for (const auto& [j, _] : rb.coeff) used[j] = true;
        raw.push_back(std::move(rb));
    }

    struct RawRow {
        double c = 0.0;
        std::map<int, double> a;
    };
    std::vector<RawRow> rows;
    for (std::size_t r = 0; r < P.inequalities.size(); ++r) {
        const auto& row = P.inequalities[r];
        RawRow rr;
        rr.c = row.constant;
        for (const auto& [v, coef] : row.coeffs) {
            rr.c += coef * z0(v);
            for (const auto& [j, tc] : out.vars.map[v]) rr.a[j] -= coef * tc;
        }
        std::erase_if(rr.a, [](const auto& kv) { return kv.second == 0.0; });
        if (rr.a.empty()) {
            if (rr.c < -tol.lp_feasibility * (1.0 + std::abs(row.constant))) {
                out.infeasible = true;
                out.offending_block = static_cast<int>(P.blocks.size() + r);
                out.message = "constant inequality '" + row.name + "' is violated";
                return out;
            }
            continue;
        }
        for (const auto& [j, _] : rr.a) used[j] = true;
        rows.push_back(std::move(rr));
    }

    out.reduced_to_cone.assign(nr, -1);
    int m = 0;
    for (int j = 0; j < nr; ++j) {
        if (used[j]) out.reduced_to_cone[j] = m++;
        else if (b_red(j) != 0.0) {
            out.unbounded = true;
            out.message = "objective depends on an unconstrained variable";
            return out;
        }
    }

    auto& cone = out.cone;
    cone.m = m;
    cone.b = Vector::Zero(m);
    for (int j = 0; j < nr; ++j) {
        if (out.reduced_to_cone[j] >= 0) cone.b(out.reduced_to_cone[j]) = b_red(j);
    }
    for (auto& rb : raw) {
        if (rb.coeff.empty()) continue;
        // Diagonal congruence (a few Ruiz passes) balances rows whose entries
        // differ by orders of magnitude; it keeps the cone.
        const Eigen::Index sz = rb.C.rows();
        Vector eq = Vector::Ones(sz);
        for (int pass = 0; pass < 4; ++pass) {
            Vector rmax = rb.C.cwiseAbs().rowwise().maxCoeff();
            for (const auto& [j, entries] : rb.coeff) {
                for (const auto& [rc, v] : entries) {
                    rmax(rc.first) = std::max(rmax(rc.first), std::abs(v));
                    rmax(rc.second) = std::max(rmax(rc.second), std::abs(v));
                }
            }
            bool changed = false;
            for (Eigen::Index i = 0; i < sz; ++i) {
                const double f = rmax(i) > 0.0 ? 1.0 / std::sqrt(rmax(i)) : 1.0;
                rmax(i) = f;
                changed = changed || std::abs(f - 1.0) > 0.1;
                eq(i) *= f;
            }
            if (!changed) break;
            rb.C = rmax.asDiagonal() * rb.C * rmax.asDiagonal();
            for (auto& [j, entries] : rb.coeff) {
                for (auto& [rc, v] : entries) v *= rmax(rc.first) * rmax(rc.second);
            }
        }
        // Positive rescaling keeps the cone and improves conditioning.
        double scale = rb.C.cwiseAbs().maxCoeff();
        for (const auto& [j, entries] : rb.coeff) {
            for (const auto& [rc, v] : entries) scale = std::max(scale, std::abs(v));
        }
        scale = scale > 0.0 ? 1.0 / scale : 1.0;
        ipm::PsdCone pc;
        pc.size = static_cast<int>(rb.C.rows());
        pc.C = scale * rb.C;
        for (const auto& [j, entries] : rb.coeff) {
            pc.vars.push_back(out.reduced_to_cone[j]);
            std::vector<ipm::Entry> list;
            for (const auto& [rc, v] : entries) list.push_back({rc.first, rc.second, scale * v});
            pc.coeff.push_back(std::move(list));
        }
        cone.psd.push_back(std::move(pc));
    }
    cone.c_lp.resize(static_cast<Eigen::Index>(rows.size()));
    std::vector<Eigen::Triplet<double>> trip;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        double nrm = 0.0;
        for (const auto& [j, v] : rows[r].a) nrm += v * v;
        nrm = std::sqrt(nrm);
        cone.c_lp(static_cast<Eigen::Index>(r)) = rows[r].c / nrm;
        for (const auto& [j, v] : rows[r].a) trip.emplace_back(static_cast<int>(r), out.reduced_to_cone[j], v / nrm);
    }
    cone.A_lp.resize(static_cast<Eigen::Index>(rows.size()), m);
    cone.A_lp.setFromTriplets(trip.begin(), trip.end());
    return out;
}

Vector recover(const Prepared& prep, const Vector& y) {
    Vector z = prep.vars.offset;
    for (std::size_t i = 0; i < prep.vars.map.size(); ++i) {
        for (const auto& [j, coef] : prep.vars.map[i]) {
            const int c = prep.reduced_to_cone[j];
            if (c >= 0) z(static_cast<Eigen::Index>(i)) += coef * y(c);
        }
    }
    return z;
}

ipm::Settings settings_from(const ToleranceProfile& tol) {
    ipm::Settings s;
    s.target = tol.ipm_gap;
    s.acceptable = tol.ipm_acceptable;
    s.max_iterations = tol.ipm_max_iterations;
    return s;
}

// Runs the cone solve, falling back to a phase-I classification when the
// main run neither converges nor produces a certificate.
SolveStatus run(const SemidefiniteProgram& P, const ToleranceProfile& tol) {
    SolveStatus status;
    Prepared prep = prepare(P, tol);
    if (prep.infeasible) {
        status.code = SolveCode::Infeasible;
        status.offending_block = prep.offending_block;
        status.message = prep.message;
        return status;
    }
    if (prep.unbounded) {
        status.code = SolveCode::Unbounded;
        status.message = prep.message;
        return status;
    }
    const ipm::Settings settings = settings_from(tol);
    const ipm::Result res = ipm::solve(prep.cone, settings);
    status.iterations = res.iterations;
    ipm::Outcome outcome = res.outcome;
    // A stalled run whose point passes every constraint check is still usable;
    // the checks below reject it otherwise.
    if (outcome == ipm::Outcome::Stalled && res.residual <= tol.ipm_inaccurate) outcome = ipm::Outcome::Converged;
    switch (outcome) {
        case ipm::Outcome::Converged: {
            Vector z = recover(prep, res.y);
            status.slack = sdp_slacks(P, z);
            status.objective = P.objective.dot(z);
            for (Eigen::Index i = 0; i < status.slack.size(); ++i) {
                const bool is_block = i < static_cast<Eigen::Index>(P.blocks.size());
                const double allowance = is_block ? tol.psd : tol.lp_feasibility;
                if (status.slack(i) < -allowance) {
                    status.code = SolveCode::NumericalFailure;
                    status.offending_block = static_cast<int>(i);
                    status.message = "solution violates constraint " + std::to_string(i) + " by " +
                                     std::to_string(-status.slack(i));
                    return status;
                }
            }
            for (const auto& row : P.equalities) {
                if (std::abs(row.evaluate(z)) > tol.equality) {
                    status.code = SolveCode::NumericalFailure;
                    status.message = "equality '" + row.name + "' residual too large";
                    return status;
                }
            }
            status.code = SolveCode::Optimal;
            status.solution = std::move(z);
            return status;
        }
        case ipm::Outcome::Unbounded:
            status.code = SolveCode::Unbounded;
            status.message = res.message;
            return status;
        case ipm::Outcome::Infeasible:
        case ipm::Outcome::Stalled: {
            const ipm::Result p1 = ipm::solve(ipm::phase_one(prep.cone), settings);
            if (p1.outcome == ipm::Outcome::Converged) {
                const double t = p1.y(prep.cone.m);
                if (t < -std::max(tol.psd, 1e-8)) {
                    status.code = SolveCode::Infeasible;
                    status.message = "phase-I optimum " + std::to_string(t) + " < 0";
                    return status;
                }
            }
            status.code = res.outcome == ipm::Outcome::Infeasible ? SolveCode::Infeasible : SolveCode::NumericalFailure;
            status.message = res.message;
            return status;
        }
    }
    return status;
}

}  // namespace

SolveStatus solve_sdp(const SemidefiniteProgram& problem, const ToleranceProfile& tol) {
    problem.validate();
    return run(problem, tol);
}

SolveStatus solve_lp(const LinearProgram& lp, const ToleranceProfile& tol) {
    lp.validate();
    const int n = lp.num_vars();
    SemidefiniteProgram P;
    P.add_variables(n);
    P.objective = lp.sense == Sense::Minimize ? lp.objective : Vector(-lp.objective);
    P.margin = 0.0;
    auto row_from = [&](const RowVector& a, double c, std::string name) {
        AffineRow r;
        r.name = std::move(name);
        r.constant = c;
        for (int j = 0; j < n; ++j) {
            if (a(j) != 0.0) r.coeffs.push_back({j, a(j)});
        }
        return r;
    };
    for (Eigen::Index i = 0; i < lp.A_ineq.rows(); ++i) {
        P.inequalities.push_back(row_from(-lp.A_ineq.row(i), lp.b_ineq(i), "ineq" + std::to_string(i)));
    }
    const Eigen::Index n_ineq = lp.A_ineq.rows();
    for (int j = 0; j < n; ++j) {
        if (lp.lower.size() > 0 && std::isfinite(lp.lower(j))) {
            P.inequalities.push_back({"lower" + std::to_string(j), {{j, 1.0}}, -lp.lower(j)});
        }
        if (lp.upper.size() > 0 && std::isfinite(lp.upper(j))) {
            P.inequalities.push_back({"upper" + std::to_string(j), {{j, -1.0}}, lp.upper(j)});
        }
    }
    for (Eigen::Index i = 0; i < lp.A_eq.rows(); ++i) {
        P.equalities.push_back(row_from(lp.A_eq.row(i), -lp.b_eq(i), "eq" + std::to_string(i)));
    }
    SolveStatus st = run(P, tol);
    if (st.optimal()) {
        const Vector& x = *st.solution;
        st.objective = lp.objective.dot(x);
        st.slack = n_ineq > 0 ? Vector(lp.b_ineq - lp.A_ineq * x) : Vector();
    } else if (st.slack.size() > 0) {
        st.slack = st.slack.head(n_ineq).eval();
    }
    return st;
}

}  // namespace handsoff
