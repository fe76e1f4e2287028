#pragma once

// Primal-dual path-following method for block-diagonal cone programs in the
// dual standard form
//
//     maximize  b.y   s.t.  S_k = C_k - sum_i y_i A_ki  >= 0   (PSD blocks)
//                           s   = c   - A_lp y          >= 0   (linear part)
//
// with y free. Search direction is HKM with a Mehrotra predictor-corrector.
// Coefficient matrices are kept sparse per block so the Schur complement is
// assembled only over the variables that touch a block.

#include <handsoff/linalg.hpp>

#include <Eigen/Sparse>

#include <string>
#include <vector>

namespace handsoff::ipm {

// Full (both triangles) sparse entry of a symmetric coefficient matrix.
struct Entry {
    int row = 0;
    int col = 0;
    double value = 0.0;
};

struct PsdCone {
    int size = 0;
    Matrix C;
    std::vector<int> vars;                     // sorted global indices into y
    std::vector<std::vector<Entry>> coeff;     // coeff[t] belongs to vars[t]
};

struct ConeProblem {
    int m = 0;
    Vector b;
    std::vector<PsdCone> psd;
    Vector c_lp;
    Eigen::SparseMatrix<double, Eigen::RowMajor> A_lp;  // rows = linear constraints
};

struct Settings {
    double target = 1e-10;
    double acceptable = 1e-7;
    double infeasibility = 1e-8;
    int max_iterations = 200;
    int stagnation = 25;  // iterations without a better residual before giving up
};

enum class Outcome { Converged, Infeasible, Unbounded, Stalled };

struct Result {
    Outcome outcome = Outcome::Stalled;
    Vector y;
    double primal_objective = 0.0;
    double dual_objective = 0.0;
    double residual = 0.0;  // max(relative gap, primal infeasibility, dual infeasibility)
    int iterations = 0;
    std::string message;
};

Result solve(const ConeProblem& problem, const Settings& settings);

// Phase-I problem: maximize t s.t. C - A*y - t I >= 0, t <= 1. The extra
// variable t is appended as y(m).
ConeProblem phase_one(const ConeProblem& problem);

}  // namespace handsoff::ipm
