#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>

namespace handsoff {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

namespace detail {
template <typename Derived>
void require_square(const Eigen::MatrixBase<Derived>& M, const char* what) {
    if (M.rows() != M.cols()) {
        throw std::invalid_argument(std::string(what) + ": matrix must be square, got " +
                                    std::to_string(M.rows()) + "x" + std::to_string(M.cols()));
    }
}
}  // namespace detail

// Complex eigenvalues of a square real matrix.
template <typename Derived>
Eigen::Matrix<std::complex<typename Derived::RealScalar>, Eigen::Dynamic, 1> eigenvalues(
    const Eigen::MatrixBase<Derived>& M) {
    using Real = typename Derived::RealScalar;
    detail::require_square(M, "eigenvalues");
    if (M.rows() == 0) return {};
    Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic> dense = M;
    Eigen::EigenSolver<decltype(dense)> solver(dense, false);
    return solver.eigenvalues();
}

// max |lambda_i|; zero for an empty matrix.
template <typename Derived>
typename Derived::RealScalar spectral_radius(const Eigen::MatrixBase<Derived>& M) {
    using Real = typename Derived::RealScalar;
    detail::require_square(M, "spectral_radius");
    if (M.rows() == 0) return Real(0);
    return eigenvalues(M).cwiseAbs().maxCoeff();
}

// Induced 2-norm (largest singular value).
template <typename Derived>
typename Derived::RealScalar induced_norm(const Eigen::MatrixBase<Derived>& M) {
    using Real = typename Derived::RealScalar;
    if (M.size() == 0) return Real(0);
    Eigen::JacobiSVD<Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>> svd(M.eval());
    return svd.singularValues()(0);
}

template <typename Derived>
typename Derived::RealScalar min_singular_value(const Eigen::MatrixBase<Derived>& M) {
    using Real = typename Derived::RealScalar;
    detail::require_square(M, "min_singular_value");
    if (M.rows() == 0) return Real(0);
    Eigen::JacobiSVD<Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>> svd(M.eval());
    return svd.singularValues()(svd.singularValues().size() - 1);
}

// Smallest eigenvalue of the symmetric part of M.
template <typename Derived>
typename Derived::RealScalar min_eigenvalue_symmetric(const Eigen::MatrixBase<Derived>& M) {
    using Real = typename Derived::RealScalar;
    detail::require_square(M, "min_eigenvalue_symmetric");
    if (M.rows() == 0) return std::numeric_limits<Real>::infinity();
    Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic> sym = (M + M.transpose()) / Real(2);
    Eigen::SelfAdjointEigenSolver<decltype(sym)> solver(sym, Eigen::EigenvaluesOnly);
    return solver.eigenvalues()(0);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& M) {
    return M.allFinite();
}

}  // namespace handsoff
