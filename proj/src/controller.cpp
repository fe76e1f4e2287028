#include <handsoff/controller.hpp>

namespace handsoff {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("controller: " + what);
}

// Orthonormal basis of the smallest A-invariant subspace containing range(B),
// grown one block at a time with re-orthogonalisation (block Arnoldi).
Matrix reachable_basis(const Matrix& A, const Matrix& B, double rank_tol) {
    const auto n = A.rows();
    const double scale = std::max({1.0, induced_norm(A), induced_norm(B)});
    const double thr = rank_tol * scale;
    Matrix Q(n, 0);
    Matrix block = B;
    while (Q.cols() < n && block.cols() > 0) {
        for (int pass = 0; pass < 2; ++pass) block -= Q * (Q.transpose() * block);
        Eigen::JacobiSVD<Matrix> svd(block, Eigen::ComputeThinU);
        int r = 0;
        while (r < svd.singularValues().size() && svd.singularValues()(r) > thr) ++r;
        if (r == 0) break;
        Matrix grown(n, Q.cols() + r);
        grown << Q, svd.matrixU().leftCols(r);
        Q = grown;
        block = A * svd.matrixU().leftCols(r);
    }
    return Q;
}

ControllerRealization project(const ControllerRealization& K, const Matrix& T) {
    return {T.transpose() * K.A_K * T, T.transpose() * K.B_K, K.C_K * T, K.D_K};
}

}  // namespace

void ControllerRealization::check_dimensions(int n, int m) const {
    const auto nk = A_K.rows();
    require(A_K.cols() == nk, "A_K must be square");
    require(B_K.rows() == nk, "B_K rows must equal the controller order");
    require(C_K.cols() == nk, "C_K columns must equal the controller order");
    require(C_K.rows() == D_K.rows(), "C_K and D_K must have the same number of rows");
    require(B_K.cols() == D_K.cols(), "B_K and D_K must have the same number of columns");
    if (n >= 0) require(D_K.cols() == n, "D_K columns must equal the plant state dimension");
    if (m >= 0) require(D_K.rows() == m, "D_K rows must equal the plant input dimension");
    require(A_K.allFinite() && B_K.allFinite() && C_K.allFinite() && D_K.allFinite(), "non-finite entries");
}

ControllerRealization ControllerRealization::static_gain(const Matrix& D_K) {
    return {Matrix(0, 0), Matrix(0, D_K.cols()), Matrix(D_K.rows(), 0), D_K};
}

ClosedLoop assemble_closed_loop(const Matrix& A, const Matrix& B, const ControllerRealization& K) {
    const int n = static_cast<int>(A.rows());
    K.check_dimensions(n, static_cast<int>(B.cols()));
    const int nk = K.order();
    ClosedLoop cl;
    cl.n = n;
    cl.n_K = nk;
    cl.A_CL.resize(n + nk, n + nk);
    cl.A_CL << A + B * K.D_K, B * K.C_K,
               K.B_K, K.A_K;
    cl.B_CL.resize(n + nk, 2 * n);
    cl.B_CL << Matrix::Identity(n, n), B * K.D_K,
               Matrix::Zero(nk, n), K.B_K;
    cl.C_CL.resize(K.D_K.rows(), n + nk);
    cl.C_CL << K.D_K, K.C_K;
    cl.D_CL.resize(K.D_K.rows(), 2 * n);
    cl.D_CL << Matrix::Zero(K.D_K.rows(), n), K.D_K;
    return cl;
}

ClosedLoop assemble_closed_loop(const PlantModel& model, const ControllerRealization& K) {
    return assemble_closed_loop(model.A, model.B, K);
}

std::vector<Matrix> markov_parameters(const ControllerRealization& K, int count) {
    K.check_dimensions();
    std::vector<Matrix> out;
    if (count <= 0) return out;
    out.push_back(K.D_K);
    Matrix CA = K.C_K;
    for (int i = 1; i < count; ++i) {
        out.push_back(CA * K.B_K);
        CA = CA * K.A_K;
    }
    return out;
}

ControllerRealization minimal_realization(const ControllerRealization& K, double rank_tol) {
    K.check_dimensions();
    if (K.order() == 0) return K;
    const ControllerRealization reach = project(K, reachable_basis(K.A_K, K.B_K, rank_tol));
    if (reach.order() == 0) return ControllerRealization::static_gain(K.D_K);
    // observable part = reachable part of the dual system
    const Matrix T = reachable_basis(reach.A_K.transpose(), reach.C_K.transpose(), rank_tol);
    if (T.cols() == 0) return ControllerRealization::static_gain(K.D_K);
    return project(reach, T);
}

SchurCheck is_schur(const Matrix& A, double tol) {
    const double rho = spectral_radius(A);
    return {rho < 1.0 - tol, rho};
}

SchurCheck is_schur(const ClosedLoop& CL, double tol) { return is_schur(CL.A_CL, tol); }

}  // namespace handsoff
