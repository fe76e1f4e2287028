#include <handsoff/polytope.hpp>
#include <handsoff/optim.hpp>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <optional>

namespace handsoff {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_dim(int a, int b, const char* what) {
    if (a != b) {
        throw SetError(SetError::Kind::DimensionMismatch,
                       std::string(what) + ": dimension mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
    }
}

double scale_of(const Matrix& V) {
    return V.size() == 0 ? 1.0 : std::max(1.0, V.cwiseAbs().maxCoeff());
}

AffineHull hull_of(const Matrix& V, double tol) {
    const int n = static_cast<int>(V.rows());
    AffineHull hull;
    hull.center = V.rowwise().mean();
    if (V.cols() <= 1 || n == 0) {
        hull.basis = Matrix::Zero(n, 0);
        hull.complement = Matrix::Identity(n, n);
        return hull;
    }
    const Matrix centred = V.colwise() - hull.center;
    Eigen::JacobiSVD<Matrix> svd(centred, Eigen::ComputeFullU);
    const double thr = tol * scale_of(V);
    const auto& s = svd.singularValues();
    while (hull.rank < s.size() && s(hull.rank) > thr) ++hull.rank;
    hull.basis = svd.matrixU().leftCols(hull.rank);
    hull.complement = svd.matrixU().rightCols(n - hull.rank);
    return hull;
}

bool lex_less(const Vector& a, const Vector& b) {
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (a(i) < b(i)) return true;
        if (a(i) > b(i)) return false;
    }
    return false;
}

Matrix sorted_columns(const Matrix& V) {
    std::vector<int> idx(V.cols());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int i, int j) { return lex_less(V.col(i), V.col(j)); });
    Matrix out(V.rows(), V.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) out.col(k) = V.col(idx[k]);
    return out;
}

Matrix dedupe(const Matrix& V, double thr) {
    const Matrix S = sorted_columns(V);
    std::vector<int> keep;
    for (int j = 0; j < S.cols(); ++j) {
        bool dup = false;
        for (int k : keep) {
            if ((S.col(j) - S.col(k)).cwiseAbs().maxCoeff() <= thr) {
                dup = true;
                break;
            }
        }
        if (!dup) keep.push_back(j);
    }
    Matrix out(V.rows(), keep.size());
    for (std::size_t k = 0; k < keep.size(); ++k) out.col(k) = S.col(keep[k]);
    return out;
}

double cross2(const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

// Counter-clockwise hull indices of 2D points (monotone chain). Collinear
// points are dropped.
std::vector<int> hull_2d(const Matrix& T, double thr) {
    std::vector<int> idx(T.cols());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int i, int j) {
        return T(0, i) < T(0, j) || (T(0, i) == T(0, j) && T(1, i) < T(1, j));
    });
    if (idx.size() < 3) return idx;
    std::vector<int> h(2 * idx.size());
    std::size_t k = 0;
    auto pt = [&](int i) { return Eigen::Vector2d(T(0, i), T(1, i)); };
    for (int i : idx) {
        while (k >= 2 && cross2(pt(h[k - 2]), pt(h[k - 1]), pt(i)) <= thr) --k;
        h[k++] = i;
    }
    for (std::size_t t = idx.size() - 1, lo = k + 1; t-- > 0;) {
        const int i = idx[t];
        while (k >= lo && cross2(pt(h[k - 2]), pt(h[k - 1]), pt(i)) <= thr) --k;
        h[k++] = i;
    }
    h.resize(k - 1);
    return h;
}

SolveStatus lp_max(const Matrix& A, const Vector& b, const Vector& c, const ToleranceProfile& tol) {
    LinearProgram lp;
    lp.sense = Sense::Maximize;
    lp.objective = c;
    lp.A_ineq = A;
    lp.b_ineq = b;
    return solve_lp(lp, tol);
}

// Is column j of V a convex combination of the other columns?
bool in_hull_of_others(const Matrix& V, int j, const ToleranceProfile& tol) {
    const int k = static_cast<int>(V.cols());
    Matrix others(V.rows(), k - 1);
    for (int i = 0, c = 0; i < k; ++i) {
        if (i != j) others.col(c++) = V.col(i);
    }
    LinearProgram lp;
    lp.objective = Vector::Zero(k - 1);
    lp.A_eq.resize(V.rows() + 1, k - 1);
    lp.A_eq << others, RowVector::Ones(k - 1);
    lp.b_eq.resize(V.rows() + 1);
    lp.b_eq << V.col(j), 1.0;
    lp.lower = Vector::Zero(k - 1);
    lp.upper = Vector::Constant(k - 1, kInf);
    const auto st = solve_lp(lp, tol);
    if (!st.optimal()) return false;
    const Vector& lam = *st.solution;
    return (others * lam - V.col(j)).cwiseAbs().maxCoeff() <= 1e3 * tol.redundancy * scale_of(V) &&
           lam.minCoeff() >= -1e-9;
}

VPolytope compute_vertices(const Matrix& H, const Vector& b) {
    const int n = static_cast<int>(H.cols());
    if (n > 3) {
        throw SetError(SetError::Kind::Unsupported,
                       "vertices: exact enumeration is limited to dimension <= 3 (got " + std::to_string(n) + ")");
    }
    const ToleranceProfile tol;
    for (int i = 0; i < n; ++i) {
        for (double sgn : {1.0, -1.0}) {
            const auto st = lp_max(H, b, sgn * Vector::Unit(n, i), tol);
            if (st.code == SolveCode::Unbounded) throw SetError(SetError::Kind::Unbounded, "vertices: polyhedron is unbounded");
            if (st.code == SolveCode::Infeasible) throw SetError(SetError::Kind::Empty, "vertices: polyhedron is empty");
        }
    }
    const Vector norms = H.rowwise().norm();
    const Matrix Hn = norms.cwiseInverse().asDiagonal() * H;
    const Vector bn = b.cwiseQuotient(norms);
    const int m = static_cast<int>(H.rows());
    const double feas = 1e-9 * std::max(1.0, bn.cwiseAbs().maxCoeff());

    std::vector<Vector> found;
    std::vector<int> pick(n);
    auto visit = [&](auto&& self, int depth, int start) -> void {
        if (depth == n) {
            Matrix M(n, n);
            Vector r(n);
            for (int i = 0; i < n; ++i) {
                M.row(i) = Hn.row(pick[i]);
                r(i) = bn(pick[i]);
            }
            Eigen::FullPivLU<Matrix> lu(M);
            lu.setThreshold(1e-10);
            if (lu.rank() < n) return;
            const Vector x = lu.solve(r);
            if (((Hn * x - bn).array() <= feas).all()) found.push_back(x);
            return;
        }
        for (int i = start; i < m; ++i) {
            pick[depth] = i;
            self(self, depth + 1, i + 1);
        }
    };
    visit(visit, 0, 0);
    if (found.empty()) throw SetError(SetError::Kind::Empty, "vertices: no feasible vertex found");
    Matrix V(n, found.size());
    for (std::size_t i = 0; i < found.size(); ++i) V.col(i) = found[i];
    return reduce(VPolytope(V));
}

}  // namespace

// ---------------------------------------------------------------- VPolytope

VPolytope::VPolytope(Matrix points) : V(std::move(points)) {
    if (V.cols() == 0) throw SetError(SetError::Kind::Empty, "VPolytope: needs at least one point");
    if (!V.allFinite()) throw std::invalid_argument("VPolytope: non-finite vertex");
}

// ---------------------------------------------------------------- HPolytope

struct HPolytope::Cache {
    std::once_flag once;
    std::optional<VPolytope> vertices;
};

HPolytope::HPolytope(Matrix H, Vector b) : H_(std::move(H)), b_(std::move(b)), cache_(std::make_shared<Cache>()) {
    if (H_.rows() != b_.size()) throw std::invalid_argument("HPolytope: H rows != b size");
    if (!H_.allFinite() || !b_.allFinite()) throw std::invalid_argument("HPolytope: non-finite data");
    for (Eigen::Index i = 0; i < H_.rows(); ++i) {
        if (H_.row(i).squaredNorm() == 0.0) {
            throw std::invalid_argument("HPolytope: row " + std::to_string(i) + " of H is zero");
        }
    }
}

HPolytope HPolytope::box(const Vector& lo, const Vector& hi) {
    if (lo.size() != hi.size()) throw std::invalid_argument("box: bound sizes differ");
    if (((hi - lo).array() < 0.0).any()) throw std::invalid_argument("box: lo > hi");
    const auto n = lo.size();
    Matrix H(2 * n, n);
    Vector b(2 * n);
    H << Matrix::Identity(n, n), -Matrix::Identity(n, n);
    b << hi, -lo;
    return {H, b};
}

HPolytope HPolytope::symmetric_box(const Vector& radius) { return box(-radius, radius); }

HPolytope HPolytope::normalized() const {
    if ((b_.array() <= 0.0).any()) throw std::invalid_argument("normalized: origin not in the interior");
    return {b_.cwiseInverse().asDiagonal() * H_, Vector::Ones(b_.size())};
}

HPolytope HPolytope::scaled(double c) const {
    if (!(c > 0.0)) throw std::invalid_argument("scaled: factor must be positive");
    return {H_, c * b_};
}

HPolytope HPolytope::negated() const { return {-H_, b_}; }

const VPolytope& HPolytope::vertices() const {
    if (!cache_) throw SetError(SetError::Kind::Empty, "vertices: default-constructed polytope");
    std::call_once(cache_->once, [this] { cache_->vertices = compute_vertices(H_, b_); });
    return *cache_->vertices;
}

// ---------------------------------------------------------------- SymmetricBoxImage

SymmetricBoxImage::SymmetricBoxImage(Matrix H) : H_(std::move(H)) {
    detail::require_square(H_, "SymmetricBoxImage");
    if (!H_.allFinite()) throw std::invalid_argument("SymmetricBoxImage: non-finite data");
    if (H_.rows() > 0 && !(min_singular_value(H_) > 0.0)) {
        throw std::invalid_argument("SymmetricBoxImage: H is singular");
    }
    Hinv_ = H_.rows() > 0 ? Matrix(H_.fullPivLu().inverse()) : Matrix();
}

HPolytope SymmetricBoxImage::to_hpolytope() const {
    const auto n = H_.rows();
    Matrix H(2 * n, n);
    H << H_, -H_;
    return {H, Vector::Ones(2 * n)};
}

VPolytope SymmetricBoxImage::vertices() const {
    const int n = dim();
    if (n > 20) throw SetError(SetError::Kind::Unsupported, "SymmetricBoxImage::vertices: dimension too large");
    const long count = 1L << n;
    Matrix corners(n, count);
    for (long c = 0; c < count; ++c) {
        for (int i = 0; i < n; ++i) corners(i, c) = (c >> i) & 1 ? 1.0 : -1.0;
    }
    return VPolytope(Hinv_ * corners);
}

bool SymmetricBoxImage::contains(const Vector& x, double tol) const {
    return (H_ * x).cwiseAbs().maxCoeff() <= 1.0 + tol;
}

SymmetricBoxImage SymmetricBoxImage::scaled(double c) const {
    if (!(c > 0.0)) throw std::invalid_argument("scaled: factor must be positive");
    return SymmetricBoxImage(H_ / c);
}

// ---------------------------------------------------------------- support functions

SupportFunction::SupportFunction(int dim, std::function<double(const Vector&)> f) : dim_(dim), f_(std::move(f)) {}

SupportFunction::SupportFunction(const HPolytope& P, const ToleranceProfile& tol)
    : dim_(P.dim()), f_([P, tol](const Vector& h) { return support(P, h, tol); }) {}

SupportFunction::SupportFunction(const VPolytope& P)
    : dim_(P.dim()), f_([P](const Vector& h) { return support(P, h); }) {}

SupportFunction::SupportFunction(const SymmetricBoxImage& P)
    : dim_(P.dim()), f_([P](const Vector& h) { return support(P, h); }) {}

double SupportFunction::operator()(const Vector& h) const {
    require_dim(static_cast<int>(h.size()), dim_, "support");
    return f_(h);
}

SupportFunction operator+(const SupportFunction& f, const SupportFunction& g) {
    require_dim(f.dim(), g.dim(), "minkowski sum");
    return {f.dim(), [f, g](const Vector& h) { return f(h) + g(h); }};
}

SupportFunction operator*(const Matrix& M, const SupportFunction& f) {
    require_dim(static_cast<int>(M.cols()), f.dim(), "linear image");
    const Matrix Mt = M.transpose();
    return {static_cast<int>(M.rows()), [Mt, f](const Vector& h) { return f(Mt * h); }};
}

SupportFunction operator*(double c, const SupportFunction& f) {
    if (c >= 0.0) return {f.dim(), [c, f](const Vector& h) { return c * f(h); }};
    return {f.dim(), [c, f](const Vector& h) { return -c * f(-h); }};
}

SupportFunction zero_set(int n) {
    return {n, [](const Vector&) { return 0.0; }};
}

SupportFunction cartesian_product(const SupportFunction& f, const SupportFunction& g) {
    const int nf = f.dim();
    return {nf + g.dim(), [f, g, nf](const Vector& h) { return f(h.head(nf)) + g(h.tail(h.size() - nf)); }};
}

double support(const HPolytope& P, const Vector& h, const ToleranceProfile& tol) {
    require_dim(static_cast<int>(h.size()), P.dim(), "support");
    const auto st = lp_max(P.H(), P.b(), h, tol);
    switch (st.code) {
        case SolveCode::Optimal: return st.objective;
        case SolveCode::Unbounded: throw SetError(SetError::Kind::Unbounded, "support: set unbounded in direction");
        case SolveCode::Infeasible: throw SetError(SetError::Kind::Empty, "support: set is empty");
        case SolveCode::NumericalFailure: break;
    }
    throw SetError(SetError::Kind::Numerical, "support: " + st.message);
}

double support(const VPolytope& P, const Vector& h) {
    require_dim(static_cast<int>(h.size()), P.dim(), "support");
    return (h.transpose() * P.V).maxCoeff();
}

double support(const SymmetricBoxImage& P, const Vector& h) {
    require_dim(static_cast<int>(h.size()), P.dim(), "support");
    return (P.H_inverse().transpose() * h).lpNorm<1>();
}

// ---------------------------------------------------------------- V-rep operations

VPolytope reduce(const VPolytope& P, const ToleranceProfile& tol) {
    const double thr = tol.redundancy * scale_of(P.V);
    Matrix V = dedupe(P.V, thr);
    const AffineHull hull = hull_of(V, tol.redundancy);
    VPolytope out;
    out.lower_dimensional = hull.rank < P.dim();
    if (hull.rank == 0) {
        out.V = V.leftCols(1);
        return out;
    }
    std::vector<int> keep;
    if (hull.rank <= 2) {
        const Matrix T = hull.basis.transpose() * (V.colwise() - hull.center);
        if (hull.rank == 1) {
            Eigen::Index lo, hi;
            T.row(0).minCoeff(&lo);
            T.row(0).maxCoeff(&hi);
            keep = {static_cast<int>(lo), static_cast<int>(hi)};
        } else {
            keep = hull_2d(T, thr * scale_of(T));
        }
    } else {
        for (int j = 0; j < V.cols(); ++j) {
            if (!in_hull_of_others(V, j, tol)) keep.push_back(j);
        }
    }
    Matrix K(V.rows(), keep.size());
    for (std::size_t k = 0; k < keep.size(); ++k) K.col(k) = V.col(keep[k]);
    out.V = sorted_columns(K);
    return out;
}

VPolytope affine_image(const VPolytope& P, const Matrix& M) {
    require_dim(static_cast<int>(M.cols()), P.dim(), "affine_image");
    return reduce(VPolytope(M * P.V));
}

VPolytope affine_image(const HPolytope& P, const Matrix& M) { return affine_image(P.vertices(), M); }

VPolytope affine_image(const SymmetricBoxImage& P, const Matrix& M) { return affine_image(P.vertices(), M); }

VPolytope minkowski_sum(const VPolytope& P, const VPolytope& Q, const ToleranceProfile& tol) {
    require_dim(P.dim(), Q.dim(), "minkowski_sum");
    Matrix S(P.dim(), P.size() * Q.size());
    for (int i = 0; i < P.size(); ++i) {
        for (int j = 0; j < Q.size(); ++j) S.col(i * Q.size() + j) = P.V.col(i) + Q.V.col(j);
    }
    return reduce(VPolytope(S), tol);
}

VPolytope convex_hull_union(const VPolytope& P, const VPolytope& Q, const ToleranceProfile& tol) {
    require_dim(P.dim(), Q.dim(), "convex_hull_union");
    Matrix S(P.dim(), P.size() + Q.size());
    S << P.V, Q.V;
    return reduce(VPolytope(S), tol);
}

// ---------------------------------------------------------------- H-rep operations

HPolytope pontryagin_difference(const HPolytope& P, const SupportFunction& Q) {
    require_dim(P.dim(), Q.dim(), "pontryagin_difference");
    Vector b = P.b();
    for (int i = 0; i < P.num_facets(); ++i) b(i) -= Q(P.H().row(i).transpose());
    return {P.H(), b};
}

bool contains_point(const HPolytope& P, const Vector& x, double tol) {
    require_dim(static_cast<int>(x.size()), P.dim(), "contains_point");
    if (P.num_facets() == 0) return true;
    return (P.H() * x - P.b()).maxCoeff() <= tol;
}

bool contains_point(const VPolytope& P, const Vector& x, const ToleranceProfile& tol) {
    require_dim(static_cast<int>(x.size()), P.dim(), "contains_point");
    Matrix V(P.dim(), P.size() + 1);
    V << P.V, x;
    return P.size() == 1 ? (P.V.col(0) - x).cwiseAbs().maxCoeff() <= tol.set
                         : in_hull_of_others(V, P.size(), tol);
}

Containment contains_polytope(const SupportFunction& inner, const HPolytope& outer, double allowance) {
    require_dim(inner.dim(), outer.dim(), "contains_polytope");
    Containment c;
    c.slacks.resize(outer.num_facets());
    c.worst_slack = -kInf;
    for (int i = 0; i < outer.num_facets(); ++i) {
        c.slacks(i) = inner(outer.H().row(i).transpose()) - outer.b()(i);
        if (c.slacks(i) > c.worst_slack) {
            c.worst_slack = c.slacks(i);
            c.worst_facet = i;
        }
    }
    c.contained = c.worst_slack <= allowance;
    return c;
}

Containment contains_polytope(const SupportFunction& inner, const HPolytope& outer, const ToleranceProfile& tol) {
    return contains_polytope(inner, outer, tol.set);
}

double minimal_scaling(const SupportFunction& P, const HPolytope& Q) {
    require_dim(P.dim(), Q.dim(), "minimal_scaling");
    if ((Q.b().array() <= 0.0).any()) throw std::invalid_argument("minimal_scaling: origin must be interior to Q");
    double lambda = 0.0;
    for (int i = 0; i < Q.num_facets(); ++i) lambda = std::max(lambda, P(Q.H().row(i).transpose()) / Q.b()(i));
    return lambda;
}

double chebyshev_radius(const HPolytope& P) {
    return P.b().cwiseQuotient(P.H().rowwise().norm()).minCoeff();
}

Ball chebyshev_ball(const HPolytope& P, const ToleranceProfile& tol) {
    const int n = P.dim();
    Matrix A(P.num_facets(), n + 1);
    A << P.H(), P.H().rowwise().norm();
    const auto st = lp_max(A, P.b(), Vector::Unit(n + 1, n), tol);
    if (st.code == SolveCode::Unbounded) throw SetError(SetError::Kind::Unbounded, "chebyshev_ball: unbounded set");
    if (!st.optimal()) throw SetError(SetError::Kind::Numerical, "chebyshev_ball: " + st.message);
    return {st.solution->head(n), st.objective};
}

bool is_empty(const HPolytope& P, const ToleranceProfile& tol) { return chebyshev_ball(P, tol).radius < -tol.set; }

VPolytope vertices(const HPolytope& P) { return P.vertices(); }

HPolytope to_hpolytope(const VPolytope& P, const ToleranceProfile& tol) {
    const int n = P.dim();
    if (n > 3) throw SetError(SetError::Kind::Unsupported, "to_hpolytope: limited to dimension <= 3");
    const VPolytope R = reduce(P, tol);
    const AffineHull hull = hull_of(R.V, tol.redundancy);
    std::vector<RowVector> rows;
    std::vector<double> rhs;
    auto add = [&](const Vector& a, double c) {
        rows.push_back(a.transpose());
        rhs.push_back(c);
    };
    for (int i = 0; i < hull.complement.cols(); ++i) {
        const Vector nrm = hull.complement.col(i);
        const double c = nrm.dot(hull.center);
        add(nrm, c);
        add(-nrm, -c);
    }
    const Matrix T = hull.basis.transpose() * (R.V.colwise() - hull.center);
    if (hull.rank == 1) {
        const Vector u = hull.basis.col(0);
        add(u, (u.transpose() * R.V).maxCoeff());
        add(-u, -(u.transpose() * R.V).minCoeff());
    } else if (hull.rank == 2) {
        const auto ring = hull_2d(T, tol.redundancy * scale_of(T));
        for (std::size_t k = 0; k < ring.size(); ++k) {
            const Eigen::Vector2d a = T.col(ring[k]);
            const Eigen::Vector2d b = T.col(ring[(k + 1) % ring.size()]);
            const Eigen::Vector2d edge = b - a;
            const Vector nrm = hull.basis * Eigen::Vector2d(edge.y(), -edge.x()).normalized();
            add(nrm, nrm.dot(R.V.col(ring[k])));
        }
    } else if (hull.rank == 3) {
        const int k = R.size();
        const double thr = tol.redundancy * scale_of(R.V);
        for (int i = 0; i < k; ++i) {
            for (int j = i + 1; j < k; ++j) {
                for (int l = j + 1; l < k; ++l) {
                    Eigen::Vector3d nrm = (R.V.col(j) - R.V.col(i)).head<3>().cross((R.V.col(l) - R.V.col(i)).head<3>());
                    if (nrm.norm() <= thr) continue;
                    nrm.normalize();
                    const double c = nrm.dot(R.V.col(i).head<3>());
                    const RowVector proj = nrm.transpose() * R.V;
                    double off = c;
                    if ((proj.array() <= c + thr).all()) {
                    } else if ((proj.array() >= c - thr).all()) {
                        nrm = -nrm;
                        off = -c;
                    } else {
                        continue;
                    }
                    bool dup = false;
                    for (std::size_t r = 0; r < rows.size(); ++r) {
                        if ((rows[r].transpose() - nrm).norm() <= 1e-9) dup = true;
                    }
                    if (!dup) add(nrm, off);
                }
            }
        }
    }
    Matrix H(rows.size(), n);
    Vector b(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        H.row(r) = rows[r];
        b(r) = rhs[r];
    }
    return {H, b};
}

HPolytope remove_redundant(const HPolytope& P, const ToleranceProfile& tol) {
    const Vector norms = P.H().rowwise().norm();
    const Matrix Hn = norms.cwiseInverse().asDiagonal() * P.H();
    const Vector bn = P.b().cwiseQuotient(norms);
    const int m = P.num_facets();
    std::vector<bool> alive(m, true);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < i && alive[i]; ++j) {
            if (alive[j] && (Hn.row(i) - Hn.row(j)).norm() <= tol.redundancy) {
                if (bn(i) < bn(j)) alive[j] = false;
                else alive[i] = false;
            }
        }
    }
    for (int i = 0; i < m; ++i) {
        if (!alive[i]) continue;
        std::vector<int> others;
        for (int j = 0; j < m; ++j) {
            if (j != i && alive[j]) others.push_back(j);
        }
        Matrix A(others.size(), P.dim());
        Vector c(others.size());
        for (std::size_t r = 0; r < others.size(); ++r) {
            A.row(r) = Hn.row(others[r]);
            c(r) = bn(others[r]);
        }
        const auto st = lp_max(A, c, Hn.row(i).transpose(), tol);
        if (st.optimal() && st.objective <= bn(i) + tol.redundancy * std::max(1.0, std::abs(bn(i)))) alive[i] = false;
    }
    std::vector<int> keep;
    for (int i = 0; i < m; ++i) {
        if (alive[i]) keep.push_back(i);
    }
    Matrix H(keep.size(), P.dim());
    Vector b(keep.size());
    for (std::size_t r = 0; r < keep.size(); ++r) {
        H.row(r) = P.H().row(keep[r]);
        b(r) = P.b()(keep[r]);
    }
    return {H, b};
}

AffineHull affine_hull(const VPolytope& P, const ToleranceProfile& tol) { return hull_of(P.V, tol.redundancy); }

std::optional<std::pair<Vector, Vector>> axis_aligned_bounds(const HPolytope& P) {
    const int n = P.dim();
    Vector lo = Vector::Constant(n, -kInf), hi = Vector::Constant(n, kInf);
    for (int i = 0; i < P.num_facets(); ++i) {
        Eigen::Index col;
        const double big = P.H().row(i).cwiseAbs().maxCoeff(&col);
        if ((P.H().row(i).array() != 0.0).count() != 1) return std::nullopt;
        const double a = P.H()(i, col);
        if (a > 0) hi(col) = std::min(hi(col), P.b()(i) / big);
        else lo(col) = std::max(lo(col), -P.b()(i) / big);
    }
    if (!lo.allFinite() || !hi.allFinite()) throw SetError(SetError::Kind::Unbounded, "sample_uniform: unbounded box");
    if (((hi - lo).array() < 0.0).any()) throw SetError(SetError::Kind::Empty, "sample_uniform: empty box");
    return std::make_pair(lo, hi);
}

// ---------------------------------------------------------------- sampling

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
    if (hi <= lo) return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vector rejection(const HPolytope& P, const Vector& lo, const Vector& hi, std::mt19937_64& rng,
                 const std::string& name, int budget) {
    Vector x(lo.size());
    for (int attempt = 0; attempt < budget; ++attempt) {
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = uniform(rng, lo(i), hi(i));
        if (contains_point(P, x)) return x;
    }
    throw SetError(SetError::Kind::SamplingBudget,
                   "sample_uniform: rejection budget of " + std::to_string(budget) + " exceeded for " + name);
}

}  // namespace

Vector sample_uniform(const HPolytope& P, std::mt19937_64& rng, const std::string& name, int budget) {
    const int n = P.dim();
    if (auto box = axis_aligned_bounds(P)) {
        Vector x(n);
        for (int i = 0; i < n; ++i) x(i) = uniform(rng, box->first(i), box->second(i));
        return x;
    }
    if (n > 3) {
        const ToleranceProfile tol;
        Vector lo(n), hi(n);
        for (int i = 0; i < n; ++i) {
            hi(i) = support(P, Vector::Unit(n, i), tol);
            lo(i) = -support(P, -Vector::Unit(n, i), tol);
        }
        return rejection(P, lo, hi, rng, name, budget);
    }
    const VPolytope& V = P.vertices();
    if (!V.lower_dimensional) {
        return rejection(P, V.V.rowwise().minCoeff(), V.V.rowwise().maxCoeff(), rng, name, budget);
    }
    const ToleranceProfile tol;
    const AffineHull hull = hull_of(V.V, tol.redundancy);
    if (hull.rank == 0) return V.V.col(0);
    const Matrix T = hull.basis.transpose() * (V.V.colwise() - hull.center);
    const HPolytope flat = to_hpolytope(VPolytope(T), tol);
    const Vector t = rejection(flat, T.rowwise().minCoeff(), T.rowwise().maxCoeff(), rng, name, budget);
    return hull.center + hull.basis * t;
}

}  // namespace handsoff
