#include <doctest.h>

#include <handsoff/controller.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace handsoff;

namespace {

Matrix random_invertible(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix T(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) T(i, j) = u(rng);
    T += 2.0 * Matrix::Identity(n, n);
    return T;
}

ControllerRealization transformed(const ControllerRealization& K, const Matrix& T) {
    const Matrix Ti = T.inverse();
    return {Ti * K.A_K * T, Ti * K.B_K, K.C_K * T, K.D_K};
}

// Zero-noise loop x+ = A x + B u, u = C_K x_K + D_K x, returning the inputs.
std::vector<double> zero_noise_inputs(const PlantModel& m, const ControllerRealization& K, Vector x, int steps) {
    Vector xk = Vector::Zero(K.order());
    std::vector<double> u_log;
    for (int k = 0; k < steps; ++k) {
        const Vector u = K.C_K * xk + K.D_K * x;
        u_log.push_back(u(0));
        xk = (K.A_K * xk + K.B_K * x).eval();
        x = (m.A * x + m.B * u).eval();
    }
    return u_log;
}

}  // namespace

TEST_CASE("assemble_closed_loop: block collapse cases") {
    const auto m = fixture::paper_model();
    SUBCASE("zero controller") {
        const auto K = ControllerRealization::static_gain(Matrix::Zero(1, 2));
        const auto CL = assemble_closed_loop(m, K);
        CHECK(CL.A_CL == m.A);
        Matrix expect = Matrix::Zero(2, 4);
        expect.leftCols(2).setIdentity();
        CHECK(CL.B_CL == expect);
    }
    SUBCASE("static gain") {
        const Matrix D{{-1.0, -2.0}};
        const auto CL = assemble_closed_loop(m, ControllerRealization::static_gain(D));
        CHECK(CL.A_CL.isApprox(m.A + m.B * D));
        CHECK(CL.C_CL == D);
    }
    SUBCASE("printed order-2 controller") {
        const auto K = fixture::paper_controller();
        const auto CL = assemble_closed_loop(m, K);
        CHECK(CL.dim() == 4);
        // blocks entrywise
        CHECK(CL.A_CL.topLeftCorner(2, 2).isApprox(m.A + m.B * K.D_K));
        CHECK(CL.A_CL.topRightCorner(2, 2).isApprox(m.B * K.C_K));
        CHECK(CL.A_CL.bottomLeftCorner(2, 2) == K.B_K);
        CHECK(CL.A_CL.bottomRightCorner(2, 2) == K.A_K);
        CHECK(CL.B_CL.topRightCorner(2, 2).isApprox(m.B * K.D_K));
        CHECK(CL.B_CL.bottomLeftCorner(2, 2).isZero());
        CHECK(CL.D_CL.leftCols(2).isZero());
        CHECK(CL.D_CL.rightCols(2) == K.D_K);
    }
    SUBCASE("dimension mismatch") {
        const auto K = ControllerRealization::static_gain(Matrix::Zero(1, 3));
        CHECK_THROWS_AS(assemble_closed_loop(m, K), std::invalid_argument);
    }
}

TEST_CASE("is_schur") {
    const auto m = fixture::paper_model();
    SUBCASE("open-loop double integrator has radius exactly 1") {
        const auto s = is_schur(m.A);
        CHECK_FALSE(s.schur);
        CHECK(std::abs(s.spectral_radius - 1.0) <= 1e-10);
    }
    SUBCASE("printed closed loop is Schur; radius agrees with characteristic-polynomial roots") {
        const auto CL = assemble_closed_loop(m, fixture::paper_controller());
        const auto s = is_schur(CL);
        CHECK(s.schur);
        CHECK(s.spectral_radius == doctest::Approx(oracle::spectral_radius_by_roots(CL.A_CL)).epsilon(1e-9));
        CHECK(s.spectral_radius == doctest::Approx(0.919209).epsilon(1e-6));
    }
    SUBCASE("half identity") {
        const auto s = is_schur(Matrix(0.5 * Matrix::Identity(3, 3)));
        CHECK(s.schur);
        CHECK(s.spectral_radius == doctest::Approx(0.5));
    }
}

TEST_CASE("Schur closed loop: powers eventually decrease to zero") {
    const auto CL = assemble_closed_loop(fixture::paper_model(), fixture::paper_controller());
    Matrix P = Matrix::Identity(4, 4);
    std::vector<double> norms;
    for (int k = 1; k <= 500; ++k) {
        P = P * CL.A_CL;
        norms.push_back(oracle::sigma_max(P, 200));
    }
    CHECK(norms.back() < 1e-15);
    // monotone over the second half
    for (std::size_t k = 251; k < norms.size(); ++k) CHECK(norms[k] <= norms[k - 1] * (1.0 + 1e-9));
}

TEST_CASE("markov_parameters") {
    SUBCASE("static controller") {
        const Matrix D{{1.0, 2.0}};
        const auto p = markov_parameters(ControllerRealization::static_gain(D), 4);
        REQUIRE(p.size() == 4);
        CHECK(p[0] == D);
        for (int i = 1; i < 4; ++i) CHECK(p[i].isZero());
    }
    SUBCASE("printed controller: first parameter is D_K") {
        const auto K = fixture::paper_controller();
        const auto p = markov_parameters(K, 3);
        CHECK(p[0](0, 0) == -6.5049);
        CHECK(p[0](0, 1) == -8.7258);
        CHECK(p[1].isApprox(K.C_K * K.B_K));
        CHECK(p[2].isApprox(K.C_K * K.A_K * K.B_K));
    }
    SUBCASE("invariant under similarity") {
        const auto K = fixture::paper_controller();
        std::mt19937_64 rng(5);
        for (int t = 0; t < 20; ++t) {
            const auto K2 = transformed(K, random_invertible(rng, 2));
            const auto a = markov_parameters(K, 20);
            const auto b = markov_parameters(K2, 20);
            for (int i = 0; i < 20; ++i) CHECK((a[i] - b[i]).cwiseAbs().maxCoeff() <= 1e-10);
        }
    }
}

TEST_CASE("minimal_realization") {
    const auto K = fixture::paper_controller();
    SUBCASE("printed controller stays order 2 and keeps 20 parameters") {
        const auto Km = minimal_realization(K);
        CHECK(Km.order() <= 2);
        const auto a = markov_parameters(K, 20);
        const auto b = markov_parameters(Km, 20);
        for (int i = 0; i < 20; ++i) CHECK((a[i] - b[i]).cwiseAbs().maxCoeff() <= 1e-8);
    }
    SUBCASE("an unreachable mode is removed") {
        ControllerRealization P;
        P.A_K = Matrix::Zero(3, 3);
        P.A_K.topLeftCorner(2, 2) = K.A_K;
        P.A_K(2, 2) = 0.7;
        P.A_K(0, 2) = 0.3;  // feeds the kept modes but is never driven
        P.B_K = Matrix::Zero(3, 2);
        P.B_K.topRows(2) = K.B_K;
        P.C_K = Matrix::Zero(1, 3);
        P.C_K.leftCols(2) = K.C_K;
        P.C_K(0, 2) = 1.0;
        P.D_K = K.D_K;
        std::mt19937_64 rng(8);
        const auto padded = transformed(P, random_invertible(rng, 3));  // hide the structure
        const auto Km = minimal_realization(padded);
        CHECK(Km.order() == 2);
        const auto a = markov_parameters(padded, 2 * 3 + 2);
        const auto b = markov_parameters(Km, 2 * 3 + 2);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK((a[i] - b[i]).cwiseAbs().maxCoeff() <= 1e-8);
    }
    SUBCASE("an unobservable mode is removed") {
        ControllerRealization P;
        P.A_K = Matrix::Zero(3, 3);
        P.A_K.topLeftCorner(2, 2) = K.A_K;
        P.A_K(2, 2) = -0.4;
        P.B_K = Matrix::Zero(3, 2);
        P.B_K.topRows(2) = K.B_K;
        P.B_K.row(2) << 1.0, 1.0;  // driven but never seen
        P.C_K = Matrix::Zero(1, 3);
        P.C_K.leftCols(2) = K.C_K;
        P.D_K = K.D_K;
        const auto Km = minimal_realization(P);
        CHECK(Km.order() == 2);
    }
    SUBCASE("zero-noise input traces agree") {
        const auto m = fixture::paper_model();
        const auto Km = minimal_realization(K);
        const auto a = zero_noise_inputs(m, K, Vector{{1.5, -0.5}}, 200);
        const auto b = zero_noise_inputs(m, Km, Vector{{1.5, -0.5}}, 200);
        for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - b[k]) <= 1e-8);
    }
    SUBCASE("no dynamics left collapses to a static gain") {
        ControllerRealization P{Matrix::Constant(1, 1, 0.5), Matrix::Zero(1, 2), Matrix::Ones(1, 1), K.D_K};
        const auto Km = minimal_realization(P);
        CHECK(Km.order() == 0);
        CHECK(Km.D_K == K.D_K);
    }
}
