#include <doctest.h>

#include <handsoff/conditions.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace handsoff;

namespace {

struct Paper {
    PlantModel m = fixture::paper_model();
    ControllerRealization K = fixture::paper_controller();
    InvariantSets sets = fixture::paper_sets();
    DerivedSets d = derive_sets(m);
    ClosedLoop CL = assemble_closed_loop(m, K);
};

const Paper& paper() {
    static const Paper p;
    return p;
}

// W x V vertices of the printed example (W a segment along B, V a box).
Matrix paper_z_points() {
    const auto& p = paper();
    return oracle::product_points(p.m.W.vertices().V, p.m.V.vertices().V);
}

// Per-facet left-hand side of "A Omega + B Z inside c Omega" by corner enumeration.
Vector invariance_lhs(const Matrix& A, const Matrix& Bz, const Matrix& H) {
    const Matrix corners = oracle::box_image_corners(H);
    Vector lhs(H.rows());
    for (int r = 0; r < H.rows(); ++r) {
        const Vector h = H.row(r).transpose();
        const double a = std::max(oracle::max_dot(A * corners, h), oracle::max_dot(A * corners, -h));
        const double b = std::max(oracle::max_dot(Bz, h), oracle::max_dot(Bz, -h));
        lhs(r) = a + b;
    }
    return lhs;
}

ClosedLoop loop_of(const Matrix& A_CL, const Matrix& B_CL, int n) {
    ClosedLoop CL;
    CL.A_CL = A_CL;
    CL.B_CL = B_CL;
    CL.n = n;
    CL.n_K = static_cast<int>(A_CL.rows()) - n;
    CL.C_CL = Matrix::Zero(1, A_CL.rows());
    CL.D_CL = Matrix::Zero(1, B_CL.cols());
    return CL;
}

}  // namespace

TEST_CASE("certify: printed example passes within the rounding allowance") {
    const auto& p = paper();
    const auto rep = certify(p.m, p.d, p.K, p.sets, fixture::printed_settings());
    CHECK(rep.all_pass());
    for (const char* name : {"Schur", "C1", "C2", "I1", "I2", "I3", "O1", "O2", "O3", "O4"}) {
        const auto* c = rep.find(name);
        REQUIRE(c != nullptr);
        INFO(name << " slack " << c->worst_slack);
        CHECK(c->ok());
        CHECK(c->worst_slack <= 5e-3);
    }
    CHECK(rep.beta == 0.99);
    CHECK(rep.T_max >= 1);
    CHECK(rep.mu > 0.0);
}

TEST_CASE("C1 and O2 slacks agree with corner enumeration") {
    const auto& p = paper();
    const auto s = fixture::printed_settings();
    const Matrix Bz = p.CL.B_CL * paper_z_points();

    const Vector c1 = invariance_lhs(p.CL.A_CL, Bz, p.sets.lifted_inner.H());
    const auto C1 = check_C1(p.CL, p.sets.lifted_inner, p.d.Z, 0.99, s);
    CHECK(C1.worst_slack == doctest::Approx(c1.maxCoeff() - 0.99).epsilon(1e-9));

    const Vector o2 = invariance_lhs(p.CL.A_CL, Bz, p.sets.outer.H());
    const auto O = check_O_conditions(p.CL, p.sets.outer, p.d.S_c, p.m.X, p.m.U, p.d.Z, s);
    CHECK(O.O2.worst_slack == doctest::Approx(o2.maxCoeff() - 1.0).epsilon(1e-9));
}

TEST_CASE("C2, O1, O3, O4 slacks agree with corner enumeration") {
    const auto& p = paper();
    const auto s = fixture::printed_settings();
    const Matrix ci = oracle::box_image_corners(p.sets.lifted_inner.H());
    const Matrix co = oracle::box_image_corners(p.sets.outer.H());

    // C2: projected corners against 0.58 S (unit box)
    const double c2 = ci.topRows(2).cwiseAbs().maxCoeff() - 0.58;
    CHECK(check_C2(p.sets.lifted_inner, p.m.S, 0.6, 0.01, 0.01, s).worst_slack == doctest::Approx(c2).epsilon(1e-9));

    const auto O = check_O_conditions(p.CL, p.sets.outer, p.d.S_c, p.m.X, p.m.U, p.d.Z, s);
    // O1: S_c vertices padded with zeros
    Matrix lifted = Matrix::Zero(4, p.d.S_c.size());
    lifted.topRows(2) = p.d.S_c.V;
    CHECK(O.O1.worst_slack == doctest::Approx((p.sets.outer.H() * lifted).cwiseAbs().maxCoeff() - 1.0).epsilon(1e-12));
    // O3: X = |x1| <= 1000, |x2| <= 100
    const double o3 = std::max(co.row(0).cwiseAbs().maxCoeff() - 1000.0, co.row(1).cwiseAbs().maxCoeff() - 100.0);
    CHECK(O.O3.worst_slack == doctest::Approx(o3).epsilon(1e-9));
    // O4: |C_CL xi + D_CL z| <= 50
    const double o4 = (p.CL.C_CL * co).cwiseAbs().maxCoeff() + (p.CL.D_CL * paper_z_points()).cwiseAbs().maxCoeff() - 50.0;
    CHECK(O.O4.worst_slack == doctest::Approx(o4).epsilon(1e-9));
}

TEST_CASE("C1: zero dynamics and zero disturbance pass for any lifted set") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 10; ++t) {
        Matrix H = 2.0 * Matrix::Identity(3, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) H(i, j) += 0.5 * u(rng);
        const auto CL = loop_of(Matrix::Zero(3, 3), Matrix::Zero(3, 4), 2);
        const auto r = check_C1(CL, SymmetricBoxImage(H), zero_set(4), 0.5);
        CHECK(r.verdict == Verdict::Pass);
        CHECK(r.worst_slack == doctest::Approx(-0.5));
    }
}

TEST_CASE("C1: bisection on eta finds the corner-enumeration threshold") {
    const auto& p = paper();
    const Vector lhs = invariance_lhs(p.CL.A_CL, p.CL.B_CL * paper_z_points(), p.sets.lifted_inner.H());
    Eigen::Index arg;
    const double threshold = lhs.maxCoeff(&arg);
    double lo = 0.5, hi = 0.99;
    CHECK(check_C1(p.CL, p.sets.lifted_inner, p.d.Z, hi).ok());
    CHECK_FALSE(check_C1(p.CL, p.sets.lifted_inner, p.d.Z, lo).ok());
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (check_C1(p.CL, p.sets.lifted_inner, p.d.Z, mid).ok() ? hi : lo) = mid;
    }
    CHECK(hi == doctest::Approx(threshold).epsilon(1e-7));
    const auto failing = check_C1(p.CL, p.sets.lifted_inner, p.d.Z, threshold - 1e-4);
    CHECK(failing.verdict == Verdict::Fail);
    CHECK(failing.worst_facet % 4 == static_cast<int>(arg));
}

TEST_CASE("C2: scaling the lifted set") {
    const auto& p = paper();
    CHECK_FALSE(check_C2(p.sets.lifted_inner.scaled(10.0), p.m.S, 0.6, 0.01, 0.01).ok());
    CHECK(check_C2(SymmetricBoxImage(Matrix(1e3 * Matrix::Identity(4, 4))), p.m.S, 0.6, 0.01, 0.01).verdict ==
          Verdict::Pass);
    CHECK_THROWS_AS(check_C2(p.sets.lifted_inner, p.m.S, 0.01, 0.01, 0.01), std::invalid_argument);
}

TEST_CASE("containment checks are monotone under shrinking the inner set") {
    const auto& p = paper();
    const auto s = fixture::printed_settings();
    double prev_c2 = 1e300, prev_o3 = 1e300, prev_o4 = 1e300;
    for (double c = 1.0; c > 0.05; c *= 0.8) {
        const auto C2 = check_C2(p.sets.lifted_inner.scaled(c), p.m.S, 0.6, 0.01, 0.01, s);
        const auto O = check_O_conditions(p.CL, p.sets.outer.scaled(c), p.d.S_c, p.m.X, p.m.U, p.d.Z, s);
        CHECK(C2.ok());
        CHECK(O.O3.ok());
        CHECK(O.O4.ok());
        CHECK(C2.worst_slack <= prev_c2);
        CHECK(O.O3.worst_slack <= prev_o3);
        CHECK(O.O4.worst_slack <= prev_o4);
        prev_c2 = C2.worst_slack;
        prev_o3 = O.O3.worst_slack;
        prev_o4 = O.O4.worst_slack;
    }
}

TEST_CASE("I conditions on the printed example") {
    const auto& p = paper();
    const auto rep = certify(p.m, p.d, p.K, p.sets, fixture::printed_settings());
    // alpha = 1 / sigma_max(H~_I), oracle by power iteration
    CHECK(std::abs(rep.alpha - 1.0 / oracle::sigma_max(p.sets.lifted_inner.H())) <= 1e-10);
    CHECK(rep.inner.alpha <= rep.inner.alpha_direct);
    CHECK(rep.inner.beta == 0.99);
    // both I3 routes agree
    CHECK(rep.inner.I3.verdict == Verdict::Pass);
    CHECK(rep.inner.I3_direct.verdict == Verdict::Pass);
    CHECK(rep.inner.beta_direct <= 0.99);
    CHECK(rep.inner.tail_bound >= 0.0);
}

TEST_CASE("I3 direct: zero disturbance gives a zero sum") {
    const auto& p = paper();
    const InnerSet inner = build_inner_set(p.sets.lifted_inner, p.d, 2);
    const auto C1 = check_C1(p.CL, p.sets.lifted_inner, zero_set(4), 0.99);
    const auto I = check_I_conditions(inner, p.m.S, 0.6, p.CL, zero_set(4), Matrix::Zero(4, 1), C1);
    CHECK(I.I3_direct.verdict == Verdict::Pass);
    CHECK(I.tail_bound == 0.0);
    CHECK(I.beta_direct == 0.0);
}

TEST_CASE("property: C1 and C2 passing never leave the direct I3 route failing") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int checked = 0;
    for (int t = 0; t < 40; ++t) {
        const int d = 3 + t % 2;
        Matrix A(d, d), Bcl(d, 4), H(d, d);
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                A(i, j) = u(rng);
                H(i, j) = (i == j ? 2.0 : 0.0) + 0.4 * u(rng);
            }
            for (int j = 0; j < 4; ++j) Bcl(i, j) = u(rng);
        }
        // contraction 0.7 in the lifted-set norm
        A *= 0.7 / invariance_lhs(A, Matrix::Zero(d, 1), H).maxCoeff();
        const auto CL = loop_of(A, Bcl, 2);
        const SymmetricBoxImage lifted(H);
        const HPolytope Vbox = HPolytope::symmetric_box(Vector::Constant(2, 0.01));
        const VPolytope Wv = HPolytope::symmetric_box(Vector::Ones(2)).vertices();
        // scale Z so that C1 holds with room
        const Vector a = invariance_lhs(A, Matrix::Zero(d, 1), H);
        const Vector b = invariance_lhs(Matrix::Zero(d, d), Bcl * oracle::product_points(Wv.V, Vbox.vertices().V), H);
        double scale = 1.0;
        for (int r = 0; r < d; ++r)
            if (b(r) > 0.0) scale = std::min(scale, 0.5 * (0.99 - a(r)) / b(r));
        if (!(scale > 0.0)) continue;
        const VPolytope W(scale * Wv.V);
        const VPolytope Vs(scale * Vbox.vertices().V);
        const SupportFunction Z = cartesian_product(SupportFunction(W), SupportFunction(Vs));
        const auto C1 = check_C1(CL, lifted, Z, 0.99);
        REQUIRE(C1.ok());
        CHECK(is_schur(CL).schur);

        const VPolytope N = minkowski_sum(VPolytope(-Vs.V), Vs);
        const InnerSet inner(lifted, N, to_hpolytope(N), 2);
        const Matrix zv = oracle::product_points(W.V, Vs.V);
        for (int trunc : {1, 5, 20, 50}) {
            CheckSettings s;
            s.truncation = trunc;
            const auto I = check_I_conditions(inner, HPolytope::symmetric_box(Vector::Constant(2, 100.0)), 0.6, CL,
                                              Z, zv, C1, s);
            CHECK(I.I3_direct.verdict != Verdict::Fail);
        }
        ++checked;
    }
    CHECK(checked >= 20);
}

TEST_CASE("O conditions: shrinking the outer set breaks O1") {
    const auto& p = paper();
    const auto O = check_O_conditions(p.CL, p.sets.outer.scaled(0.5), p.d.S_c, p.m.X, p.m.U, p.d.Z,
                                      fixture::printed_settings());
    CHECK(O.O1.verdict == Verdict::Fail);
    CHECK(O.O1.worst_slack > 0.0);
}

TEST_CASE("O conditions: no controller and no disturbance reduce O2 to A-invariance") {
    Matrix A{{0.5, 0.1}, {0.0, 0.5}};
    const auto CL = loop_of(A, Matrix::Zero(2, 4), 2);
    const SymmetricBoxImage box(Matrix::Identity(2, 2));
    VPolytope S_c(Matrix::Zero(2, 1));
    const auto O = check_O_conditions(CL, box, S_c, HPolytope::symmetric_box(Vector::Constant(2, 2.0)),
                                      HPolytope::symmetric_box(Vector::Ones(1)), zero_set(4));
    const double expect = (A * oracle::box_image_corners(Matrix::Identity(2, 2))).cwiseAbs().maxCoeff() - 1.0;
    CHECK(O.O2.worst_slack == doctest::Approx(expect));
    CHECK(O.O2.verdict == Verdict::Pass);
}

TEST_CASE("O2 corroborated by sampled trajectories from the outer-set corners") {
    const auto& p = paper();
    std::mt19937_64 rng(21);
    const Matrix corners = oracle::box_image_corners(p.sets.outer.H());
    double worst = 0.0;
    for (int c = 0; c < corners.cols(); ++c) {
        Vector xi = corners.col(c);
        for (int k = 0; k < 1000; ++k) {
            xi = (p.CL.A_CL * xi + p.CL.B_CL * sample_disturbance(p.m, rng)).eval();
            worst = std::max(worst, (p.sets.outer.H() * xi).cwiseAbs().maxCoeff());
        }
    }
    CHECK(worst <= 1.0);
}

TEST_CASE("compute_Tmax") {
    const auto& p = paper();
    SUBCASE("zero dynamics") {
        const auto CL = loop_of(Matrix::Zero(2, 2), Matrix::Zero(2, 4), 2);
        CHECK(compute_Tmax(CL, p.d.S_c, 0.3, 0.9).T_max == 1);
    }
    SUBCASE("printed example agrees with an exhaustive power scan") {
        const double alpha = 1.0 / oracle::sigma_max(p.sets.lifted_inner.H());
        const auto T = compute_Tmax(p.CL, p.d.S_c, alpha, 0.99);
        const double mu = p.d.S_c.V.colwise().norm().maxCoeff();
        CHECK(T.mu == doctest::Approx(mu));
        const double thr = alpha * 0.01 / mu;
        Matrix P = Matrix::Identity(4, 4);
        int last_above = 0;
        for (int j = 1; j <= 3000; ++j) {
            P = P * p.CL.A_CL;
            if (oracle::sigma_max(P, 100) > thr) last_above = j;
        }
        CHECK(T.T_max == last_above + 1);
    }
    SUBCASE("T_max grows with beta") {
        int prev = 0;
        for (double beta = 0.5; beta < 0.995; beta += 0.05) {
            const int T = compute_Tmax(p.CL, p.d.S_c, 0.288, beta).T_max;
            CHECK(T >= prev);
            prev = T;
        }
    }
    SUBCASE("non-Schur input is rejected") {
        const auto CL = loop_of(p.m.A, Matrix::Zero(2, 4), 2);
        CHECK_THROWS_AS(compute_Tmax(CL, p.d.S_c, 0.3, 0.9), std::invalid_argument);
    }
}

TEST_CASE("printed H_I and the implicit inner set agree within rounding") {
    const auto& p = paper();
    const auto rep = certify(p.m, p.d, p.K, p.sets, fixture::printed_settings());
    const auto* c = rep.find("Omega_I_consistency");
    REQUIRE(c != nullptr);
    CHECK(c->ok());
    CHECK(c->worst_slack <= 5e-3);
}

TEST_CASE("report JSON carries every condition") {
    const auto& p = paper();
    const auto rep = certify(p.m, p.d, p.K, p.sets, fixture::printed_settings());
    const Json j = report_to_json(rep);
    CHECK(j["conditions"].size() == rep.conditions.size());
    CHECK(j["T_max"].get<int>() == rep.T_max);
    for (const auto& c : j["conditions"]) CHECK(c.contains("worst_slack"));
}
