#include <handsoff/synthesis.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <tuple>

namespace handsoff {

namespace {

// Affine matrix expression: constant + sum_t value_t * z_{var_t} E_{row_t, col_t}.
struct Expr {
    struct Term {
        int var;
        int row;
        int col;
        double value;
    };
    Matrix c;
    std::vector<Term> terms;

    Expr() = default;
    Expr(Eigen::Index r, Eigen::Index k) : c(Matrix::Zero(r, k)) {}
    explicit Expr(const Matrix& constant) : c(constant) {}

    Eigen::Index rows() const { return c.rows(); }
    Eigen::Index cols() const { return c.cols(); }
};

Expr general(const std::vector<int>& idx, int r, int k) {
    Expr e(r, k);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < k; ++j) e.terms.push_back({idx[i * k + j], i, j, 1.0});
    return e;
}

Expr symmetric(const std::vector<int>& idx, int r) {
    Expr e(r, r);
    int t = 0;
    for (int i = 0; i < r; ++i)
        for (int j = 0; j <= i; ++j) {
            e.terms.push_back({idx[t], i, j, 1.0});
            if (i != j) e.terms.push_back({idx[t], j, i, 1.0});
            ++t;
        }
    return e;
}

Expr diagonal(const std::vector<int>& idx) {
    const int r = static_cast<int>(idx.size());
    Expr e(r, r);
    for (int i = 0; i < r; ++i) e.terms.push_back({idx[i], i, i, 1.0});
    return e;
}

Expr operator*(const Matrix& M, const Expr& X) {
    Expr e(M * X.c);
    for (const auto& t : X.terms)
        for (Eigen::Index i = 0; i < M.rows(); ++i)
            if (M(i, t.row) != 0.0) e.terms.push_back({t.var, static_cast<int>(i), t.col, M(i, t.row) * t.value});
    return e;
}

Expr operator*(const Expr& X, const Matrix& M) {
    Expr e(X.c * M);
    for (const auto& t : X.terms)
        for (Eigen::Index j = 0; j < M.cols(); ++j)
            if (M(t.col, j) != 0.0) e.terms.push_back({t.var, t.row, static_cast<int>(j), M(t.col, j) * t.value});
    return e;
}

Expr operator+(Expr a, const Expr& b) {
    a.c += b.c;
    a.terms.insert(a.terms.end(), b.terms.begin(), b.terms.end());
    return a;
}

Expr operator-(const Expr& a) {
    Expr e(-a.c);
    e.terms = a.terms;
    for (auto& t : e.terms) t.value = -t.value;
    return e;
}

Expr operator-(const Expr& a, const Expr& b) { return a + (-b); }

Expr transpose(const Expr& a) {
    Expr e(Matrix(a.c.transpose()));
    e.terms = a.terms;
    for (auto& t : e.terms) std::swap(t.row, t.col);
    return e;
}

void place(Expr& dst, int r0, int c0, const Expr& src) {
    dst.c.block(r0, c0, src.rows(), src.cols()) += src.c;
    for (const auto& t : src.terms) dst.terms.push_back({t.var, r0 + t.row, c0 + t.col, t.value});
}

// Merge repeated (var, row, col) entries and drop exact zeros.
std::vector<Expr::Term> compact(std::vector<Expr::Term> terms) {
    std::sort(terms.begin(), terms.end(), [](const auto& a, const auto& b) {
        return std::tie(a.var, a.row, a.col) < std::tie(b.var, b.row, b.col);
    });
    std::vector<Expr::Term> out;
    for (const auto& t : terms) {
        if (!out.empty() && out.back().var == t.var && out.back().row == t.row && out.back().col == t.col) {
            out.back().value += t.value;
        } else {
            out.push_back(t);
        }
    }
    out.erase(std::remove_if(out.begin(), out.end(), [](const auto& t) { return t.value == 0.0; }), out.end());
    return out;
}

// Symmetric block layout: diagonal pieces must be symmetric expressions,
// off-diagonal pieces go below the diagonal.
class BlockBuilder {
public:
    BlockBuilder(std::string name, int size, bool strict) : block_(std::move(name), size, strict) {}

    void diag(int r0, const Expr& e) { put(r0, r0, e, true); }
    void lower(int r0, int c0, const Expr& e) { put(r0, c0, e, false); }

    LmiBlock done() { return std::move(block_); }

private:
    void put(int r0, int c0, const Expr& e, bool on_diagonal) {
        for (Eigen::Index i = 0; i < e.rows(); ++i)
            for (Eigen::Index j = 0; j < e.cols(); ++j) {
                if (on_diagonal && j > i) continue;
                if (e.c(i, j) != 0.0) block_.add_constant(r0 + i, c0 + j, e.c(i, j));
            }
        for (const auto& t : compact(e.terms)) {
            if (on_diagonal && t.col > t.row) continue;
            block_.add(t.var, r0 + t.row, c0 + t.col, t.value);
        }
    }
    LmiBlock block_;
};

Matrix reshape(const Vector& z, const std::vector<int>& idx, int r, int k) {
    Matrix M(r, k);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < k; ++j) M(i, j) = z(idx[i * k + j]);
    return M;
}

Matrix reshape_symmetric(const Vector& z, const std::vector<int>& idx, int r) {
    Matrix M(r, r);
    int t = 0;
    for (int i = 0; i < r; ++i)
        for (int j = 0; j <= i; ++j) {
            M(i, j) = M(j, i) = z(idx[t]);
            ++t;
        }
    return M;
}

Vector gather(const Vector& z, const std::vector<int>& idx) {
    Vector v(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) v(i) = z(idx[i]);
    return v;
}

double gap_of(const Matrix& H_I, const Matrix& H_Ii, const Matrix& H_O, const Matrix& H_Oi) {
    const Matrix I = Matrix::Identity(H_I.rows(), H_I.cols());
    return (H_I * H_Ii - I).squaredNorm() + (H_O * H_Oi - I).squaredNorm();
}

void require_points(const std::vector<Matrix>& Y, int count, int d, const char* name) {
    if (static_cast<int>(Y.size()) != count) {
        throw std::invalid_argument(std::string("build_problem: ") + name + " needs " + std::to_string(count) +
                                    " matrices, got " + std::to_string(Y.size()));
    }
    for (const auto& M : Y) {
        if (M.rows() != d || M.cols() != d) {
            throw std::invalid_argument(std::string("build_problem: ") + name + " must be " + std::to_string(d) +
                                        "x" + std::to_string(d));
        }
    }
}

std::vector<double> default_grid() {
    std::vector<double> g{1.0};
    for (int e = 1; e <= 6; ++e) {
        g.push_back(std::pow(10.0, -0.5 * e));
        g.push_back(std::pow(10.0, 0.5 * e));
    }
    return g;
}

}  // namespace

void SynthesisParams::check(double eps_p, double eps_m) const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("synthesis params: " + msg); };
    if (n_K < 0) fail("n_K must be >= 0");
    if (!(eta > 0.0 && eta < 1.0)) fail("eta must lie in (0, 1)");
    if (!(eps_s > eps_p + eps_m && eps_s < 1.0)) fail("eps_s must lie in (eps_p + eps_m, 1)");
    if (!(eps_c > 0.0)) fail("eps_c must be > 0");
    if (max_iterations < 1) fail("max_iterations must be >= 1");
    if (!(psd_margin >= 0.0)) fail("psd_margin must be >= 0");
    if (!(variable_bound > 0.0)) fail("variable_bound must be > 0");
    if (!(slack_floor >= 0.0)) fail("slack_floor must be >= 0");
    for (double c : init_grid)
        if (!(c > 0.0)) fail("init_grid entries must be > 0");
}

FrozenPoints FrozenPoints::scaled_identity(int d, int n_U, double c) {
    const Matrix Y = c * Matrix::Identity(d, d);
    FrozenPoints p;
    p.Y_I1.assign(d, Y);
    p.Y_I2.assign(d, Y);
    p.Y_O1.assign(d, Y);
    p.Y_O2.assign(d, Y);
    p.Y_U.assign(n_U, Y);
    return p;
}

Lock lock_for_iteration(int k) {
    if (k <= 0) return Lock::None;
    return k % 2 > 0 ? Lock::Factors : Lock::Inverses;
}

std::string_view to_string(Lock lock) {
    switch (lock) {
        case Lock::None: return "none";
        case Lock::Factors: return "factors";
        case Lock::Inverses: return "inverses";
    }
    return "?";
}

std::string_view to_string(Convergence c) {
    switch (c) {
        case Convergence::Certified: return "Certified";
        case Convergence::Stalled: return "Stalled";
        case Convergence::Budget: return "Budget";
    }
    return "?";
}

SynthesisData synthesis_data(const PlantModel& input, const DerivedSets& derived, const SynthesisParams& params,
                             const ToleranceProfile& tol) {
    PlantModel model = with_defaults(input, tol);
    if (!std::isnan(params.eps_s)) model.eps_s = params.eps_s;
    params.check(model.eps_p, model.eps_m);
    SynthesisData s;
    s.n = model.n();
    s.m = model.m();
    s.n_K = params.n_K;
    s.A = model.A;
    s.B = model.B;
    try {
        s.H_S = model.S.normalized().H();
        s.H_X = model.X.normalized().H();
        s.H_U = model.U.normalized().H();
    } catch (const std::exception& e) {
        throw std::invalid_argument(std::string("synthesis data: S, X and U need the origin inside: ") + e.what());
    }
    const HZOuterBox hz = outer_box_Z(model, tol);
    // unit box coordinates; a radius-scaled box puts 1/r^2 entries next to O(1) ones
    s.G = hz.G * hz.radius.asDiagonal();
    s.H_Z = Matrix::Identity(hz.n_Z(), hz.n_Z());
    s.omega = derived.omega();
    if (s.omega.rows() != s.n) throw std::invalid_argument("synthesis data: S_c vertices have the wrong dimension");
    s.eta = params.eta;
    s.eps_s = model.eps_s;
    s.inner_scale = model.eps_s - model.eps_m - model.eps_p;
    return s;
}

double SynthesisIterate::min_factor_singular_value() const {
    return std::min({min_singular_value(H_I), min_singular_value(H_Ii), min_singular_value(H_O),
                     min_singular_value(H_Oi)});
}

FrozenPoints SynthesisIterate::next_points() const {
    FrozenPoints p;
    auto solve = [](const Matrix& X, const Matrix& R) -> Matrix { return X.llt().solve(R); };
    for (std::size_t j = 0; j < X_I1.size(); ++j) {
        p.Y_I1.push_back(solve(X_I1[j], H_Ii));
        p.Y_I2.push_back(solve(X_I2[j], H_I.transpose()));
        p.Y_O1.push_back(solve(X_O1[j], H_Oi));
        p.Y_O2.push_back(solve(X_O2[j], H_O.transpose()));
    }
    for (const auto& X : X_U) p.Y_U.push_back(solve(X, H_O.transpose()));
    return p;
}

SynthesisProblem build_problem(const SynthesisData& data, const SynthesisParams& params, const FrozenPoints& Y,
                               int k, const SynthesisIterate* previous) {
    const int n = data.n, m = data.m, nK = data.n_K, d = data.d(), nZ = data.n_Z();
    const int nS = data.n_S(), nX = data.n_X(), nU = data.n_U();
    if (data.A.rows() != n || data.A.cols() != n || data.B.rows() != n || data.B.cols() != m) {
        throw std::invalid_argument("build_problem: A/B dimensions");
    }
    if (data.G.rows() != 2 * n || data.G.cols() != nZ) throw std::invalid_argument("build_problem: H_Z basis");
    if (nS == 0 || data.H_S.cols() != n) throw std::invalid_argument("build_problem: inner_in_S needs H_S");
    if (nX == 0 || data.H_X.cols() != n) throw std::invalid_argument("build_problem: outer_in_X needs H_X");
    if (nU == 0 || data.H_U.cols() != m) throw std::invalid_argument("build_problem: input_in_U needs H_U");
    if (data.n_c() == 0) throw std::invalid_argument("build_problem: Sc_in_outer needs S_c vertices");
    require_points(Y.Y_I1, d, d, "Y_I1");
    require_points(Y.Y_I2, d, d, "Y_I2");
    require_points(Y.Y_O1, d, d, "Y_O1");
    require_points(Y.Y_O2, d, d, "Y_O2");
    require_points(Y.Y_U, nU, d, "Y_U");
    const Lock lock = lock_for_iteration(k);
    if (lock != Lock::None && previous == nullptr) throw std::invalid_argument("build_problem: lock without a previous iterate");

    SynthesisProblem P;
    P.k = k;
    P.lock = lock;
    P.d = d;
    P.n = n;
    P.m = m;
    P.n_K = nK;
    P.eta = data.eta;
    P.Y = Y;
    auto& prog = P.program;
    prog.margin = params.psd_margin;
    auto vars = [&](int count) {
        std::vector<int> v(count);
        const int first = prog.add_variables(count);
        for (int i = 0; i < count; ++i) v[i] = first + i;
        return v;
    };
    // fixed ordering: controller, factors, slacks, multipliers, cost
    P.A_K = vars(nK * nK);
    P.B_K = vars(nK * n);
    P.C_K = vars(m * nK);
    P.D_K = vars(m * n);
    P.H_I = vars(d * d);
    P.H_Ii = vars(d * d);
    P.H_O = vars(d * d);
    P.H_Oi = vars(d * d);
    const int tri = d * (d + 1) / 2;
    for (auto* X : {&P.X_I1, &P.X_I2, &P.X_O1, &P.X_O2})
        for (int j = 0; j < d; ++j) X->push_back(vars(tri));
    for (int l = 0; l < nU; ++l) P.X_U.push_back(vars(tri));
    for (int j = 0; j < d; ++j) {
        P.D_I1.push_back(vars(d));
        P.D_I2.push_back(vars(nZ));
        P.D_O1.push_back(vars(d));
        P.D_O2.push_back(vars(nZ));
    }
    for (int q = 0; q < nS; ++q) P.D_S.push_back(vars(d));
    for (int p = 0; p < nX; ++p) P.D_X.push_back(vars(d));
    for (int l = 0; l < nU; ++l) {
        P.D_U1.push_back(vars(d));
        P.D_U2.push_back(vars(nZ));
    }
    const int bounded = prog.num_vars;
    P.t = prog.add_variable();
    prog.objective(P.t) = 1.0;

    auto& census = P.census;
    auto count = [&](const std::string& family) { ++census.blocks[family]; };

    // closed loop, affine in the controller
    const Expr AK = general(P.A_K, nK, nK), BK = general(P.B_K, nK, n), CK = general(P.C_K, m, nK),
               DK = general(P.D_K, m, n);
    Expr A_CL(d, d), B_CL(d, 2 * n), C_CL(m, d), D_CL(m, 2 * n);
    A_CL.c.topLeftCorner(n, n) = data.A;
    place(A_CL, 0, 0, data.B * DK);
    place(A_CL, 0, n, data.B * CK);
    place(A_CL, n, 0, BK);
    place(A_CL, n, n, AK);
    B_CL.c.topLeftCorner(n, n).setIdentity();
    place(B_CL, 0, n, data.B * DK);
    place(B_CL, n, n, BK);
    place(C_CL, 0, 0, DK);
    place(C_CL, 0, n, CK);
    place(D_CL, 0, n, DK);
    const Expr B_red = B_CL * data.G;  // disturbance enters through t = G^T z
    const Expr D_red = D_CL * data.G;
    const Expr A_CLt = transpose(A_CL);

    const Expr H_I = general(P.H_I, d, d), H_Ii = general(P.H_Ii, d, d), H_O = general(P.H_O, d, d),
               H_Oi = general(P.H_Oi, d, d);
    const Matrix I_d = Matrix::Identity(d, d);
    const Matrix& HZ = data.H_Z;

    auto sum_of = [&](const std::vector<int>& idx) {
        Expr e(1, 1);
        for (int v : idx) e.terms.push_back({v, 0, 0, 1.0});
        return e;
    };
    auto unit = [](int size, int i) {
        Matrix e = Matrix::Zero(size, 1);
        e(i, 0) = 1.0;
        return e;
    };

    // one-step image of the lifted sets under the closed loop
    auto step_block = [&](const std::string& name, const std::vector<int>& X2, const std::vector<int>& D2,
                          const std::vector<int>& X1) {
        BlockBuilder b(name, 2 * d + nZ, true);
        b.diag(0, symmetric(X2, d));
        b.diag(d, HZ.transpose() * diagonal(D2) * HZ);
        b.lower(d + nZ, 0, A_CL);
        b.lower(d + nZ, d, B_red);
        b.diag(d + nZ, symmetric(X1, d));
        return b.done();
    };
    // [D, I; I, F Y + (F Y)^T - Y^T X Y]
    auto lift_block = [&](const std::string& name, const std::vector<int>& D1, const Expr& F, const Matrix& Yj,
                          const std::vector<int>& X) {
        BlockBuilder b(name, 2 * d, true);
        b.diag(0, diagonal(D1));
        b.lower(d, 0, Expr(I_d));
        const Expr FY = F * Yj;
        b.diag(d, FY + transpose(FY) - Yj.transpose() * symmetric(X, d) * Yj);
        return b.done();
    };
    // [Y^T F + F^T Y - Y^T X Y, e_j; *, r]
    auto row_block = [&](const std::string& name, const Expr& F, const Matrix& Yj, const std::vector<int>& X, int j,
                         const Expr& r) {
        BlockBuilder b(name, d + 1, true);
        const Expr YF = Yj.transpose() * F;
        b.diag(0, YF + transpose(YF) - Yj.transpose() * symmetric(X, d) * Yj);
        b.lower(d, 0, Expr(Matrix(unit(d, j).transpose())));
        b.diag(d, r);
        return b.done();
    };

    for (int j = 0; j < d; ++j) {
        const std::string s = "[" + std::to_string(j) + "]";
        prog.blocks.push_back(step_block("step_I" + s, P.X_I2[j], P.D_I2[j], P.X_I1[j]));
        count("step_I");
        prog.blocks.push_back(step_block("step_O" + s, P.X_O2[j], P.D_O2[j], P.X_O1[j]));
        count("step_O");
    }
    for (int j = 0; j < d; ++j) {
        prog.blocks.push_back(lift_block("lift_I[" + std::to_string(j) + "]", P.D_I1[j], H_I, Y.Y_I2[j], P.X_I2[j]));
        count("lift_I");
    }
    for (int j = 0; j < d; ++j) {
        prog.blocks.push_back(lift_block("lift_O[" + std::to_string(j) + "]", P.D_O1[j], H_O, Y.Y_O2[j], P.X_O2[j]));
        count("lift_O");
    }
    for (int j = 0; j < d; ++j) {
        Expr r(Matrix::Constant(1, 1, 2.0 * data.eta));
        r = r - sum_of(P.D_I1[j]) - sum_of(P.D_I2[j]);
        prog.blocks.push_back(row_block("row_I[" + std::to_string(j) + "]", H_Ii, Y.Y_I1[j], P.X_I1[j], j, r));
        count("row_I");
    }
    for (int j = 0; j < d; ++j) {
        Expr r(Matrix::Constant(1, 1, 2.0));
        r = r - sum_of(P.D_O1[j]) - sum_of(P.D_O2[j]);
        prog.blocks.push_back(row_block("row_O[" + std::to_string(j) + "]", H_Oi, Y.Y_O1[j], P.X_O1[j], j, r));
        count("row_O");
    }
    // projected lifted inner set inside the shrunk S, lifted outer set inside X
    auto facet_block = [&](const std::string& name, const std::vector<int>& D, const Matrix& Hrow, const Expr& Finv,
                           double level) {
        BlockBuilder b(name, d + 1, true);
        b.diag(0, diagonal(D));
        Matrix lifted = Matrix::Zero(1, d);
        lifted.leftCols(n) = Hrow;
        b.lower(d, 0, lifted * Finv);
        Expr r(Matrix::Constant(1, 1, 2.0 * level));
        b.diag(d, r - sum_of(D));
        return b.done();
    };
    for (int q = 0; q < nS; ++q) {
        prog.blocks.push_back(
            facet_block("inner_in_S[" + std::to_string(q) + "]", P.D_S[q], data.H_S.row(q), H_Ii, data.inner_scale));
        count("inner_in_S");
    }
    for (int p = 0; p < nX; ++p) {
        prog.blocks.push_back(facet_block("outer_in_X[" + std::to_string(p) + "]", P.D_X[p], data.H_X.row(p), H_Oi, 1.0));
        count("outer_in_X");
    }
    // inputs over the outer set stay in U
    for (int l = 0; l < nU; ++l) {
        const std::string s = "[" + std::to_string(l) + "]";
        BlockBuilder b("input_in_U" + s, d + nZ + 1, true);
        b.diag(0, symmetric(P.X_U[l], d));
        b.diag(d, HZ.transpose() * diagonal(P.D_U2[l]) * HZ);
        const Matrix hu = data.H_U.row(l);
        b.lower(d + nZ, 0, hu * C_CL);
        b.lower(d + nZ, d, hu * D_red);
        Expr r(Matrix::Constant(1, 1, 2.0));
        b.diag(d + nZ, r - sum_of(P.D_U1[l]) - sum_of(P.D_U2[l]));
        prog.blocks.push_back(b.done());
        count("input_in_U");
        prog.blocks.push_back(lift_block("input_lift" + s, P.D_U1[l], H_O, Y.Y_U[l], P.X_U[l]));
        count("input_lift");
    }

    // the slack matrices stay away from singular so Y = X^{-1} F stays bounded;
    // X is carried over unchanged, so the previous optimizer still satisfies this
    if (params.slack_floor > 0.0) {
        int idx = 0;
        for (const auto* group : {&P.X_I1, &P.X_I2, &P.X_O1, &P.X_O2, &P.X_U})
            for (const auto& X : *group) {
                BlockBuilder b("slack_floor[" + std::to_string(idx++) + "]", d, false);
                b.diag(0, symmetric(X, d) - Expr(Matrix(params.slack_floor * I_d)));
                prog.blocks.push_back(b.done());
                count("slack_floor");
            }
    }

    // diagonal multipliers are nonnegative
    auto nonneg = [&](const std::vector<std::vector<int>>& Ds, const std::string& name) {
        for (std::size_t a = 0; a < Ds.size(); ++a)
            for (std::size_t i = 0; i < Ds[a].size(); ++i) {
                prog.inequalities.push_back({name + "[" + std::to_string(a) + "][" + std::to_string(i) + "]",
                                             {{Ds[a][i], 1.0}}, 0.0});
                ++census.multiplier_rows;
            }
    };
    nonneg(P.D_I1, "D_I1");
    nonneg(P.D_I2, "D_I2");
    nonneg(P.D_O1, "D_O1");
    nonneg(P.D_O2, "D_O2");
    nonneg(P.D_S, "D_S");
    nonneg(P.D_X, "D_X");
    nonneg(P.D_U1, "D_U1");
    nonneg(P.D_U2, "D_U2");

    // S_c x {0} inside the outer set
    for (int i = 0; i < data.n_c(); ++i) {
        Matrix point = Matrix::Zero(d, 1);
        point.topRows(n) = data.omega.col(i);
        const Expr image = H_O * point;
        for (int side = 0; side < 2; ++side) {
            const double sign = side == 0 ? -1.0 : 1.0;  // 1 -/+ H_O w >= 0
            for (int r = 0; r < d; ++r) {
                AffineRow row;
                row.name = "Sc_in_outer[" + std::to_string(i) + "][" + (side == 0 ? "+" : "-") + "][" +
                           std::to_string(r) + "]";
                row.constant = 1.0 + sign * image.c(r, 0);
                for (const auto& t : compact(image.terms))
                    if (t.row == r) row.coeffs.push_back({t.var, sign * t.value});
                prog.inequalities.push_back(row);
                ++census.vertex_rows;
            }
            ++census.vertex_constraints;
        }
    }

    // freeze one factor pair
    const Matrix* fixed_I = nullptr;
    const Matrix* fixed_O = nullptr;
    if (lock != Lock::None) {
        const bool factors = lock == Lock::Factors;
        const auto& idx_I = factors ? P.H_I : P.H_Ii;
        const auto& idx_O = factors ? P.H_O : P.H_Oi;
        fixed_I = factors ? &previous->H_I : &previous->H_Ii;
        fixed_O = factors ? &previous->H_O : &previous->H_Oi;
        if (fixed_I->rows() != d || fixed_O->rows() != d) throw std::invalid_argument("build_problem: previous iterate size");
        const std::string nI = factors ? "H_I" : "H_Ii", nO = factors ? "H_O" : "H_Oi";
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                const std::string at = "[" + std::to_string(i) + "," + std::to_string(j) + "]";
                prog.equalities.push_back({"lock:" + nI + at, {{idx_I[i * d + j], 1.0}}, -(*fixed_I)(i, j)});
                prog.equalities.push_back({"lock:" + nO + at, {{idx_O[i * d + j], 1.0}}, -(*fixed_O)(i, j)});
                census.lock_equalities += 2;
            }
    }

    // cost epigraph [t, g^T; g, I] >= 0 with t >= |g|^2
    Expr g;
    if (lock == Lock::None) {
        g = Expr(4 * d * d, 1);
        int row = 0;
        for (const auto* idx : {&P.H_I, &P.H_Ii, &P.H_O, &P.H_Oi})
            for (int v : *idx) g.terms.push_back({v, row++, 0, 1.0});
    } else {
        // G = [F_I - I, F_O - I] with the frozen factor on its fixed side
        const bool factors = lock == Lock::Factors;
        const Expr GI = factors ? (*fixed_I) * H_Ii : H_I * (*fixed_I);
        const Expr GO = factors ? (*fixed_O) * H_Oi : H_O * (*fixed_O);
        g = Expr(2 * d * d, 1);
        auto stack = [&](const Expr& E, int offset) {
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) g.c(offset + i * d + j, 0) = E.c(i, j) - (i == j ? 1.0 : 0.0);
            for (const auto& t : E.terms) g.terms.push_back({t.var, offset + t.row * d + t.col, 0, t.value});
        };
        stack(GI, 0);
        stack(GO, d * d);
    }
    {
        const int size = static_cast<int>(g.rows()) + 1;
        BlockBuilder b("cost", size, false);
        Expr tt(1, 1);
        tt.terms.push_back({P.t, 0, 0, 1.0});
        b.diag(0, tt);
        b.lower(1, 0, g);
        b.diag(1, Expr(Matrix(Matrix::Identity(size - 1, size - 1))));
        prog.blocks.push_back(b.done());
        census.cost_block_size = size;
    }

    // bounded decision entries keep the feasible set compact
    for (int v = 0; std::isfinite(params.variable_bound) && v < bounded; ++v) {
        prog.inequalities.push_back({"bound+[" + std::to_string(v) + "]", {{v, -1.0}}, params.variable_bound});
        prog.inequalities.push_back({"bound-[" + std::to_string(v) + "]", {{v, 1.0}}, params.variable_bound});
        census.bound_rows += 2;
    }
    census.num_vars = prog.num_vars;
    return P;
}

SynthesisIterate SynthesisProblem::decode(const Vector& z) const {
    SynthesisIterate it;
    it.k = k;
    it.lock = lock;
    it.K.A_K = reshape(z, A_K, n_K, n_K);
    it.K.B_K = reshape(z, B_K, n_K, n);
    it.K.C_K = reshape(z, C_K, m, n_K);
    it.K.D_K = reshape(z, D_K, m, n);
    it.H_I = reshape(z, H_I, d, d);
    it.H_Ii = reshape(z, H_Ii, d, d);
    it.H_O = reshape(z, H_O, d, d);
    it.H_Oi = reshape(z, H_Oi, d, d);
    auto sym = [&](const std::vector<std::vector<int>>& src, std::vector<Matrix>& dst) {
        for (const auto& idx : src) dst.push_back(reshape_symmetric(z, idx, d));
    };
    sym(X_I1, it.X_I1);
    sym(X_I2, it.X_I2);
    sym(X_O1, it.X_O1);
    sym(X_O2, it.X_O2);
    sym(X_U, it.X_U);
    auto diag = [&](const std::vector<std::vector<int>>& src, std::vector<Vector>& dst) {
        for (const auto& idx : src) dst.push_back(gather(z, idx));
    };
    diag(D_I1, it.D_I1);
    diag(D_I2, it.D_I2);
    diag(D_O1, it.D_O1);
    diag(D_O2, it.D_O2);
    diag(D_S, it.D_S);
    diag(D_X, it.D_X);
    diag(D_U1, it.D_U1);
    diag(D_U2, it.D_U2);
    it.r_I.resize(d);
    it.r_O.resize(d);
    for (int j = 0; j < d; ++j) {
        it.r_I(j) = 2.0 * eta - (it.D_I1[j].sum() + it.D_I2[j].sum());
        it.r_O(j) = 2.0 - (it.D_O1[j].sum() + it.D_O2[j].sum());
    }
    it.Y = Y;
    it.gap = gap_of(it.H_I, it.H_Ii, it.H_O, it.H_Oi);
    it.cost = lock == Lock::None ? it.H_I.squaredNorm() + it.H_Ii.squaredNorm() + it.H_O.squaredNorm() +
                                       it.H_Oi.squaredNorm()
                                 : it.gap;
    return it;
}

namespace {

struct Solved {
    SolveStatus status;
    SynthesisIterate iterate;
    double wall_ms = 0.0;
};

Solved solve_step(const SynthesisData& data, const SynthesisParams& params, const FrozenPoints& Y, int k,
                  const SynthesisIterate* previous, const ToleranceProfile& tol) {
    const auto t0 = std::chrono::steady_clock::now();
    const SynthesisProblem P = build_problem(data, params, Y, k, previous);
    Solved out;
    out.status = solve_sdp(P.program, tol);
    if (out.status.optimal()) {
        out.iterate = P.decode(*out.status.solution);
    }
    out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

IterationLog log_entry(const Solved& s, int k) {
    IterationLog e;
    e.k = k;
    e.status = std::string(to_string(s.status.code));
    e.wall_ms = s.wall_ms;
    e.solver_iterations = s.status.iterations;
    if (s.status.optimal()) {
        e.cost = s.iterate.cost;
        e.gap = s.iterate.gap;
        e.min_singular_value = s.iterate.min_factor_singular_value();
    }
    return e;
}

}  // namespace

SynthesisState initialize(const PlantModel& model, const DerivedSets& derived, const SynthesisParams& params,
                          const FrozenPoints* warm, const ToleranceProfile& tol) {
    SynthesisState st;
    st.params = params;
    st.tol = tol;
    st.data = synthesis_data(model, derived, params, tol);
    const int d = st.data.d();
    std::vector<std::pair<double, FrozenPoints>> seeds;
    if (params.init == InitStrategy::Warm) {
        if (warm == nullptr) throw std::invalid_argument("initialize: warm strategy needs seeds");
        seeds.push_back({0.0, *warm});
    } else {
        for (double c : params.init_grid.empty() ? default_grid() : params.init_grid)
            seeds.push_back({c, FrozenPoints::scaled_identity(d, st.data.n_U(), c)});
    }
    std::string last;
    for (const auto& [c, Y] : seeds) {
        const Solved s = solve_step(st.data, params, Y, 0, nullptr, tol);
        st.log.push_back(log_entry(s, 0));
        if (s.status.optimal()) {
            st.current = s.iterate;
            st.init_scale = c;
            return st;
        }
        std::ostringstream msg;
        msg << "c = " << c << ": " << to_string(s.status.code);
        if (!s.status.message.empty()) msg << " (" << s.status.message << ")";
        last = msg.str();
    }
    throw InitializationFailed("no seed made the first problem feasible; last attempt " + last);
}

SynthesisResult iterate(SynthesisState st) {
    SynthesisResult res;
    res.data = st.data;
    res.log = st.log;
    res.history.push_back(st.current);
    res.smallest_singular_value = st.current.min_factor_singular_value();
    double prev_gap = st.current.gap;
    bool improving = true;
    int k = 0;
    while (k < st.params.max_iterations && st.current.gap > st.params.certified_cost) {
        ++k;
        const Solved s = solve_step(st.data, st.params, st.current.next_points(), k, &st.current, st.tol);
        res.log.push_back(log_entry(s, k));
        if (!s.status.optimal()) {
            throw RecursiveFeasibilityBroken(k, std::string(to_string(s.status.code)) + ": " + s.status.message);
        }
        st.current = s.iterate;
        res.history.push_back(st.current);
        res.largest_increase = std::max(res.largest_increase, st.current.gap - prev_gap);
        res.smallest_singular_value = std::min(res.smallest_singular_value, st.current.min_factor_singular_value());
        improving = prev_gap - st.current.gap >= st.params.eps_c;
        prev_gap = st.current.gap;
        if (!improving) break;
    }
    res.final = st.current;
    if (st.current.gap <= st.params.certified_cost) {
        res.verdict = Convergence::Certified;
    } else if (improving && k >= st.params.max_iterations) {
        res.verdict = Convergence::Budget;
    } else {
        res.verdict = Convergence::Stalled;
    }
    return res;
}

ExtractedDesign extract(const SynthesisResult& result, const PlantModel& input, const DerivedSets& derived,
                        const ToleranceProfile& tol) {
    if (result.verdict != Convergence::Certified) {
        throw ExtractionRejected("verdict", "extraction needs a Certified run, got " +
                                                std::string(to_string(result.verdict)));
    }
    ExtractedDesign out;
    out.K = result.final.K;
    try {
        out.sets.lifted_inner = SymmetricBoxImage(result.final.H_I);
        out.sets.outer = SymmetricBoxImage(result.final.H_O);
    } catch (const std::exception& e) {
        throw ExtractionRejected("invertibility", std::string("set matrices: ") + e.what());
    }
    PlantModel model = input;
    model.eps_s = result.data.eps_s;
    CheckSettings s;
    s.eta = result.data.eta;
    s.strict = tol.set;
    s.allowance = tol.set;
    out.report = certify(model, derived, out.K, out.sets, s, tol);
    for (const auto& c : out.report.conditions) {
        if (c.required && !c.ok()) {
            std::ostringstream msg;
            msg << c.name << " fails on the extracted design (worst slack " << c.worst_slack << ")";
            throw ExtractionRejected(c.name, msg.str());
        }
    }
    return out;
}

}  // namespace handsoff
