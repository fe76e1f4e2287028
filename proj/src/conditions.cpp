#include <handsoff/conditions.hpp>
#include <handsoff/optim.hpp>

#include <cmath>
#include <sstream>

namespace handsoff {

namespace {

// Upper Cholesky factor L of P solving M^T P M - P = -I (so P = L^T L), or an
// empty matrix when the Kronecker system is singular or P is not positive.
Matrix lyapunov_factor(const Matrix& M) {
    const auto d = M.rows();
    Matrix K = Matrix::Identity(d * d, d * d);
    // vec(M^T P M) = (M^T kron M^T) vec(P)
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) K.block(i * d, j * d, d, d) -= M(j, i) * M.transpose();
    const Eigen::FullPivLU<Matrix> lu(K);
    if (!lu.isInvertible()) return {};
    const Vector vecI = Eigen::Map<const Vector>(Matrix::Identity(d, d).eval().data(), d * d);
    const Vector vecP = lu.solve(vecI);
    Matrix P = Eigen::Map<const Matrix>(vecP.data(), d, d);
    P = 0.5 * (P + P.transpose()).eval();
    const Eigen::LLT<Matrix> llt(P);
    if (llt.info() != Eigen::Success) return {};
    return llt.matrixU();
}

ConditionResult from_containment(std::string name, const Containment& c, const CheckSettings& s,
                                 std::string detail = {}) {
    ConditionResult r;
    r.name = std::move(name);
    r.worst_slack = c.worst_slack;
    r.worst_facet = c.worst_facet;
    r.verdict = classify(c.worst_slack, s.strict, s.allowance);
    r.detail = std::move(detail);
    return r;
}

// rows of [H; -H] with offsets c
HPolytope symmetric_rows(const Matrix& H, double c) {
    Matrix G(2 * H.rows(), H.cols());
    G << H, -H;
    return {G, Vector::Constant(2 * H.rows(), c)};
}

}  // namespace

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::Pass: return "pass";
        case Verdict::Marginal: return "rounding-marginal";
        case Verdict::Fail: return "fail";
        case Verdict::Inconclusive: return "inconclusive";
    }
    return "unknown";
}

Verdict classify(double worst, double strict, double allowance) {
    if (worst <= strict) return Verdict::Pass;
    if (worst <= std::max(strict, allowance)) return Verdict::Marginal;
    return Verdict::Fail;
}

// ---------------------------------------------------------------- inner set

InnerSet::InnerSet(SymmetricBoxImage lifted, VPolytope N, HPolytope N_h, int n)
    : lifted_(std::move(lifted)), N_(std::move(N)), N_h_(std::move(N_h)), n_(n) {
    if (lifted_.dim() < n_) throw std::invalid_argument("InnerSet: lifted set smaller than the plant state");
    if (N_.dim() != n_ || N_h_.dim() != n_) throw std::invalid_argument("InnerSet: N has the wrong dimension");
}

Matrix InnerSet::projector() const {
    Matrix P = Matrix::Zero(n_, lifted_.dim());
    P.leftCols(n_).setIdentity();
    return P;
}

SupportFunction InnerSet::support() const { return projector() * SupportFunction(lifted_) + SupportFunction(N_); }

bool InnerSet::contains(const Vector& x, const ToleranceProfile& tol) const {
    const int d = lifted_.dim();
    const int m = static_cast<int>(N_h_.num_facets());
    LinearProgram lp;
    lp.objective = Vector::Zero(d + n_);
    lp.A_ineq = Matrix::Zero(2 * d + m, d + n_);
    lp.A_ineq.topLeftCorner(d, d) = lifted_.H();
    lp.A_ineq.block(d, 0, d, d) = -lifted_.H();
    lp.A_ineq.bottomRightCorner(m, n_) = N_h_.H();
    lp.b_ineq.resize(2 * d + m);
    lp.b_ineq << Vector::Ones(2 * d), N_h_.b();
    lp.A_eq.resize(n_, d + n_);
    lp.A_eq << projector(), Matrix::Identity(n_, n_);
    lp.b_eq = x;
    const auto st = solve_lp(lp, tol);
    if (st.optimal()) return true;
    if (st.code == SolveCode::Infeasible) return false;
    throw SetError(SetError::Kind::Numerical, "InnerSet::contains: " + st.message);
}

HPolytope InnerSet::to_hpolytope(const ToleranceProfile& tol) const {
    const VPolytope proj = affine_image(lifted_, projector());
    return handsoff::to_hpolytope(minkowski_sum(proj, N_, tol), tol);
}

InnerSet build_inner_set(const SymmetricBoxImage& lifted, const DerivedSets& derived, int n) {
    return {lifted, derived.N, derived.N_h, n};
}

std::optional<HPolytope> InvariantSets::inner_explicit_hpolytope() const {
    if (!inner_explicit) return std::nullopt;
    return symmetric_rows(*inner_explicit, 1.0);
}

// ---------------------------------------------------------------- C1, C2

ConditionResult check_C1(const ClosedLoop& CL, const SymmetricBoxImage& lifted, const SupportFunction& Z,
                         double eta, const CheckSettings& s) {
    if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("check_C1: eta must lie in (0, 1)");
    const SupportFunction lhs = CL.A_CL * SupportFunction(lifted) + CL.B_CL * Z;
    return from_containment("C1", contains_polytope(lhs, symmetric_rows(lifted.H(), eta), s.allowance), s,
                            "A_CL lifted + B_CL Z inside eta lifted");
}

ConditionResult check_C2(const SymmetricBoxImage& lifted, const HPolytope& S, double eps_s, double eps_p,
                         double eps_m, const CheckSettings& s) {
    const double c = eps_s - eps_p - eps_m;
    if (!(c > 0.0)) throw std::invalid_argument("check_C2: requires eps_p + eps_m < eps_s");
    const int n = S.dim();
    Matrix P = Matrix::Zero(n, lifted.dim());
    P.leftCols(n).setIdentity();
    return from_containment("C2", contains_polytope(P * SupportFunction(lifted), S.scaled(c), s.allowance), s,
                            "[I O] lifted inside (eps_s - eps_p - eps_m) S");
}

// ---------------------------------------------------------------- I1-I3

IConditions check_I_conditions(const InnerSet& inner, const HPolytope& S, double eps_s, const ClosedLoop& CL,
                               const SupportFunction& Z, const Matrix& z_vertices, const ConditionResult& C1,
                               const CheckSettings& s) {
    IConditions out;
    const SupportFunction omega = inner.support();
    out.I1 = from_containment("I1", contains_polytope(omega, S.scaled(eps_s), s.allowance), s,
                              "Omega_I inside eps_s S");

    const HPolytope shrunk = pontryagin_difference(inner.to_hpolytope(), SupportFunction(inner.N()));
    out.alpha = 1.0 / induced_norm(inner.lifted().H());
    out.alpha_direct = chebyshev_radius(shrunk);
    out.I2.name = "I2";
    out.I2.worst_slack = out.alpha - out.alpha_direct;
    out.I2.verdict = out.alpha > 0.0 ? classify(out.I2.worst_slack, s.strict, s.allowance) : Verdict::Fail;
    out.I2.detail = "ball of radius 1/||H~_I|| inside Omega_I - N";

    out.beta = s.eta;
    out.I3 = C1;
    out.I3.name = "I3";
    out.I3.detail = "inherited from C1 with beta = eta";

    // direct: sum_{i<=N} [I O] A^i B Z inside beta (Omega_I - N), plus a tail bound
    const Matrix& A = CL.A_CL;
    const Matrix P = inner.projector();
    const Matrix At = A.transpose();
    const Matrix Bt = CL.B_CL.transpose();
    if (!is_schur(A).schur) {
        out.I3_direct = {"I3_direct", Verdict::Fail, std::numeric_limits<double>::infinity(), -1, true,
                         "A_CL is not Schur"};
        return out;
    }
    // Tail: sum_{i>N} A^i B_CL z_i = A^{N+1} sum_j A^j B_CL z_j, and the inner sum
    // lies in the ellipsoid {||L xi|| <= R} for any Lyapunov factor L with
    // gamma = ||L A L^-1|| < 1 and R = max_z ||L B_CL z|| / (1 - gamma).
    struct Weight {
        Matrix L_inv_t;
        double R;
    };
    std::vector<Weight> weights;
    const double rho = spectral_radius(A);
    for (double f : {0.1, 0.25, 0.5}) {
        const double theta = rho + (1.0 - rho) * f;
        const Matrix L = lyapunov_factor(A / theta);
        if (L.size() == 0) continue;
        const Matrix L_inv = L.inverse();
        const double gamma = induced_norm(L * A * L_inv);
        if (!(gamma < 1.0)) continue;
        const double reach = (L * CL.B_CL * z_vertices).colwise().norm().maxCoeff();
        weights.push_back({L_inv.transpose(), reach / (1.0 - gamma)});
    }
    if (weights.empty()) {
        out.I3_direct = {"I3_direct", Verdict::Inconclusive, std::numeric_limits<double>::infinity(), -1, true,
                         "no contracting weighted norm for the tail"};
        return out;
    }

    double worst_trunc = -std::numeric_limits<double>::infinity();
    double worst_total = -std::numeric_limits<double>::infinity();
    int facet_trunc = -1, facet_total = -1;
    out.beta_direct = 0.0;
    bool empty = false;
    for (int r = 0; r < shrunk.num_facets(); ++r) {
        const double g = shrunk.b()(r);
        if (!(g > 0.0)) empty = true;
        Vector v = P.transpose() * shrunk.H().row(r).transpose();
        double sum = 0.0;
        for (int i = 0; i <= s.truncation; ++i) {
            sum += Z(Bt * v);
            v = At * v;
        }
        double tail = std::numeric_limits<double>::infinity();
        for (const auto& w : weights) tail = std::min(tail, w.R * (w.L_inv_t * v).norm());
        out.tail_bound = std::max(out.tail_bound, tail);
        if (sum - s.eta * g > worst_trunc) {
            worst_trunc = sum - s.eta * g;
            facet_trunc = r;
        }
        if (sum + tail - s.eta * g > worst_total) {
            worst_total = sum + tail - s.eta * g;
            facet_total = r;
        }
        if (g > 0.0) out.beta_direct = std::max(out.beta_direct, (sum + tail) / g);
    }
    auto& d = out.I3_direct;
    d.name = "I3_direct";
    std::ostringstream msg;
    msg << "truncated at N=" << s.truncation << ", tail bound " << out.tail_bound;
    d.detail = msg.str();
    if (empty) {
        d.verdict = Verdict::Fail;
        d.worst_slack = std::numeric_limits<double>::infinity();
        d.detail += "; Omega_I - N is empty";
    } else if (worst_trunc > s.allowance) {
        d.verdict = Verdict::Fail;
        d.worst_slack = worst_trunc;
        d.worst_facet = facet_trunc;
    } else if (worst_total <= s.allowance) {
        d.verdict = classify(worst_total, s.strict, s.allowance);
        d.worst_slack = worst_total;
        d.worst_facet = facet_total;
    } else {
        d.verdict = Verdict::Inconclusive;
        d.worst_slack = worst_total;
        d.worst_facet = facet_total;
    }
    return out;
}

// ---------------------------------------------------------------- O1-O4

OConditions check_O_conditions(const ClosedLoop& CL, const SymmetricBoxImage& outer, const VPolytope& S_c,
                               const HPolytope& X, const HPolytope& U, const SupportFunction& Z,
                               const CheckSettings& s) {
    OConditions out;
    const int n = CL.n;
    const int d = CL.dim();
    Matrix lifted = Matrix::Zero(d, S_c.size());
    lifted.topRows(n) = S_c.V;
    const Matrix image = (outer.H() * lifted).cwiseAbs();
    Containment o1;
    o1.worst_slack = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < image.cols(); ++j) {
        Eigen::Index row;
        const double v = image.col(j).maxCoeff(&row) - 1.0;
        if (v > o1.worst_slack) {
            o1.worst_slack = v;
            o1.worst_facet = static_cast<int>(row);
        }
    }
    out.O1 = from_containment("O1", o1, s, "S_c x {0} inside Omega_O (vertex test)");

    const SupportFunction omega(outer);
    out.O2 = from_containment("O2",
                              contains_polytope(CL.A_CL * omega + CL.B_CL * Z, symmetric_rows(outer.H(), 1.0), s.allowance),
                              s, "A_CL Omega_O + B_CL Z inside Omega_O");
    Matrix P = Matrix::Zero(n, d);
    P.leftCols(n).setIdentity();
    out.O3 = from_containment("O3", contains_polytope(P * omega, X, s.allowance), s, "[I O] Omega_O inside X");
    out.O4 = from_containment("O4", contains_polytope(CL.C_CL * omega + CL.D_CL * Z, U, s.allowance), s,
                              "C_CL Omega_O + D_CL Z inside U");
    return out;
}

// ---------------------------------------------------------------- T_max

DwellBound compute_Tmax(const ClosedLoop& CL, const VPolytope& S_c, double alpha, double beta, int max_power) {
    const auto schur = is_schur(CL);
    if (!schur.schur) {
        throw std::invalid_argument("compute_Tmax: A_CL is not Schur (spectral radius " +
                                    std::to_string(schur.spectral_radius) + ")");
    }
    if (!(alpha > 0.0) || !(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("compute_Tmax: invalid alpha/beta");
    DwellBound out;
    out.mu = S_c.V.colwise().norm().maxCoeff();
    out.threshold = alpha * (1.0 - beta) / out.mu;
    const Matrix& A = CL.A_CL;
    std::vector<double> norms{1.0};
    Matrix P = Matrix::Identity(A.rows(), A.cols());
    int p = 0;
    // first p with ||A^p|| <= 1; afterwards ||A^{j + kp}|| <= ||A^j||, so a
    // window of p consecutive powers below the threshold certifies every later one
    int run = 0;
    for (int j = 1; j <= max_power; ++j) {
        P = P * A;
        norms.push_back(induced_norm(P));
        if (p == 0 && norms[j] <= 1.0) p = j;
        run = norms[j] <= out.threshold ? run + 1 : 0;
        if (p > 0 && run >= p) {
            out.T_max = j - p + 1;
            out.window = p;
            return out;
        }
    }
    throw std::runtime_error("compute_Tmax: no certificate within " + std::to_string(max_power) + " powers");
}

// ---------------------------------------------------------------- report

bool GuaranteeReport::all_pass() const {
    for (const auto& c : conditions) {
        if (c.required && !c.ok()) return false;
    }
    return true;
}

const ConditionResult* GuaranteeReport::find(const std::string& name) const {
    for (const auto& c : conditions) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

Matrix disturbance_corners(const PlantModel& model, const ToleranceProfile& tol) {
    const HZOuterBox box = outer_box_Z(model, tol);
    const int k = box.n_Z();
    Matrix corners(box.G.rows(), 1 << k);
    for (int c = 0; c < (1 << k); ++c) {
        Vector t(k);
        for (int i = 0; i < k; ++i) t(i) = ((c >> i) & 1) ? box.radius(i) : -box.radius(i);
        corners.col(c) = box.G * t;
    }
    return corners;
}

GuaranteeReport certify(const PlantModel& input, const DerivedSets& derived, const ControllerRealization& K,
                        const InvariantSets& sets, const CheckSettings& s, const ToleranceProfile& tol) {
    const PlantModel model = with_defaults(input, tol);
    const ClosedLoop CL = assemble_closed_loop(model, K);
    if (sets.lifted_inner.dim() != CL.dim() || sets.outer.dim() != CL.dim()) {
        throw std::invalid_argument("certify: set dimensions do not match n + n_K");
    }
    GuaranteeReport rep;
    const auto schur = is_schur(CL, tol.schur);
    rep.spectral_radius = schur.spectral_radius;
    {
        ConditionResult r;
        r.name = "Schur";
        r.worst_slack = schur.spectral_radius - (1.0 - tol.schur);
        r.verdict = schur.schur ? Verdict::Pass : Verdict::Fail;
        std::ostringstream msg;
        msg.precision(6);
        msg << std::fixed << "spectral radius " << schur.spectral_radius;
        r.detail = msg.str();
        rep.conditions.push_back(r);
    }
    const ConditionResult C1 = check_C1(CL, sets.lifted_inner, derived.Z, s.eta, s);
    rep.conditions.push_back(C1);
    rep.conditions.push_back(check_C2(sets.lifted_inner, model.S, model.eps_s, model.eps_p, model.eps_m, s));

    const InnerSet inner = build_inner_set(sets.lifted_inner, derived, model.n());
    rep.inner = check_I_conditions(inner, model.S, model.eps_s, CL, derived.Z, disturbance_corners(model, tol), C1, s);
    rep.conditions.push_back(rep.inner.I1);
    rep.conditions.push_back(rep.inner.I2);
    rep.conditions.push_back(rep.inner.I3);
    ConditionResult direct = rep.inner.I3_direct;
    direct.required = false;  // cross-check; the inherited certificate is the one of record
    rep.conditions.push_back(direct);

    const OConditions O = check_O_conditions(CL, sets.outer, derived.S_c, model.X, model.U, derived.Z, s);
    rep.conditions.push_back(O.O1);
    rep.conditions.push_back(O.O2);
    rep.conditions.push_back(O.O3);
    rep.conditions.push_back(O.O4);

    if (auto printed = sets.inner_explicit_hpolytope()) {
        // printed Omega_I against [I O] lifted + N, both directions
        const HPolytope implicit_h = inner.to_hpolytope(tol);
        const auto a = contains_polytope(SupportFunction(printed->vertices()), implicit_h, s.allowance);
        const auto b = contains_polytope(inner.support(), *printed, s.allowance);
        ConditionResult r;
        r.name = "Omega_I_consistency";
        r.required = false;
        r.worst_slack = std::max(a.worst_slack, b.worst_slack);
        r.verdict = classify(r.worst_slack, s.strict, s.allowance);
        std::ostringstream msg;
        msg << "explicit H_I vs [I O] lifted + N: explicit-in-implicit slack " << a.worst_slack
            << ", implicit-in-explicit slack " << b.worst_slack;
        r.detail = msg.str();
        rep.conditions.push_back(r);
    }

    rep.alpha = rep.inner.alpha;
    rep.beta = rep.inner.beta;
    rep.mu = derived.S_c.V.colwise().norm().maxCoeff();
    if (schur.schur && rep.alpha > 0.0) {
        rep.T_max = compute_Tmax(CL, derived.S_c, rep.alpha, rep.beta).T_max;
    }
    return rep;
}

}  // namespace handsoff
