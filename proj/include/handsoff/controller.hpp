#pragma once

// Dynamic output controller x_K+ = A_K x_K + B_K y, u = C_K x_K + D_K y and
// the closed loop it forms with the plant.

#include <handsoff/model.hpp>

#include <vector>

namespace handsoff {

struct ControllerRealization {
    Matrix A_K;  // n_K x n_K
    Matrix B_K;  // n_K x n
    Matrix C_K;  // m x n_K
    Matrix D_K;  // m x n

    int order() const { return static_cast<int>(A_K.rows()); }
    // Throws std::invalid_argument when the blocks do not fit together (or
    // do not fit a plant with n states and m inputs, when those are >= 0).
    void check_dimensions(int n = -1, int m = -1) const;

    static ControllerRealization static_gain(const Matrix& D_K);
};

// xi = [x; x_K], z = [w; v]:
//   xi+ = A_CL xi + B_CL z,  u = C_CL xi + D_CL z
struct ClosedLoop {
    Matrix A_CL, B_CL, C_CL, D_CL;
    int n = 0;
    int n_K = 0;

    int dim() const { return n + n_K; }
};

ClosedLoop assemble_closed_loop(const PlantModel& model, const ControllerRealization& K);
ClosedLoop assemble_closed_loop(const Matrix& A, const Matrix& B, const ControllerRealization& K);

// D_K, C_K B_K, C_K A_K B_K, ...
std::vector<Matrix> markov_parameters(const ControllerRealization& K, int count);

// Staircase reduction: uncontrollable part removed first, then unobservable.
ControllerRealization minimal_realization(const ControllerRealization& K, double rank_tol = 1e-9);

struct SchurCheck {
    bool schur = false;
    double spectral_radius = 0.0;
};

SchurCheck is_schur(const Matrix& A, double tol = 1e-9);
SchurCheck is_schur(const ClosedLoop& CL, double tol = 1e-9);

}  // namespace handsoff
