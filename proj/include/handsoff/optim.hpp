#pragma once

// Solver contracts shared by every other module: a linear program, a
// semidefinite program over a scalar decision vector, and the status value
// both solvers return. No control-theoretic meaning lives here.

#include <handsoff/linalg.hpp>
#include <handsoff/tolerance.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace handsoff {

enum class SolveCode { Optimal, Infeasible, Unbounded, NumericalFailure };

std::string_view to_string(SolveCode code);

struct SolveStatus {
    SolveCode code = SolveCode::NumericalFailure;
    double objective = 0.0;
    std::optional<Vector> solution;  // present iff code == Optimal
    // LP: b_ineq - A_ineq x per inequality row.
    // SDP: per block lambda_min(F(z)) - margin, then per inequality row a.z + c.
    Vector slack;
    int offending_block = -1;
    int iterations = 0;
    std::string message;

    bool optimal() const { return code == SolveCode::Optimal; }
};

enum class Sense { Minimize, Maximize };

// optimize c.x  s.t.  A_ineq x <= b_ineq,  A_eq x = b_eq,  lower <= x <= upper.
// Empty bound vectors mean free variables; entries may be +-infinity.
struct LinearProgram {
    Sense sense = Sense::Minimize;
    Vector objective;
    Matrix A_ineq;
    Vector b_ineq;
    Matrix A_eq;
    Vector b_eq;
    Vector lower;
    Vector upper;

    int num_vars() const { return static_cast<int>(objective.size()); }
    // Throws std::invalid_argument on inconsistent dimensions or non-finite data.
    void validate() const;
};

// One coefficient of an LMI block. Stored once for the lower triangle
// (row >= col); the block is symmetric by construction.
struct LmiTerm {
    int var = 0;
    int row = 0;
    int col = 0;
    double value = 0.0;
};

// F(z) = constant + sum_i z_i F_i, required to satisfy F(z) >= margin * I
// (strict) or F(z) >= 0 (non-strict).
struct LmiBlock {
    std::string name;
    Matrix constant;
    std::vector<LmiTerm> terms;
    bool strict = true;

    LmiBlock() = default;
    LmiBlock(std::string block_name, int size, bool is_strict = true);

    int size() const { return static_cast<int>(constant.rows()); }
    // Adds value * z_var at (row, col) and its mirror.
    void add(int var, int row, int col, double value);
    // Adds value at (row, col) and its mirror to the constant part.
    void add_constant(int row, int col, double value);
    Matrix evaluate(const Vector& z) const;
};

// constant + sum coeffs_i z_i  (>= 0 for inequalities, == 0 for equalities)
struct AffineRow {
    std::string name;
    std::vector<std::pair<int, double>> coeffs;
    double constant = 0.0;

    double evaluate(const Vector& z) const;
};

// minimize objective.z subject to LMI blocks, affine inequalities and
// affine equalities.
struct SemidefiniteProgram {
    int num_vars = 0;
    Vector objective;
    std::vector<LmiBlock> blocks;
    std::vector<AffineRow> inequalities;
    std::vector<AffineRow> equalities;
    double margin = 1e-7;

    int add_variable();
    int add_variables(int count);
    void validate() const;
};

// Interior-point solves. Both are deterministic and single-threaded per call.
SolveStatus solve_lp(const LinearProgram& problem, const ToleranceProfile& tol = {});
SolveStatus solve_sdp(const SemidefiniteProgram& problem, const ToleranceProfile& tol = {});

// Independent re-check of an SDP point: every block's minimum eigenvalue and
// every row's value, in the same layout as SolveStatus::slack.
Vector sdp_slacks(const SemidefiniteProgram& problem, const Vector& z);

}  // namespace handsoff
