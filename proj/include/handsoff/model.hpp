#pragma once

// Plant x+ = A x + sigma B u + (1 - sigma) d + w, y = x + v, its constraint and
// disturbance sets, and the sets derived from them.

#include <handsoff/polytope.hpp>

#include <string>
#include <vector>

namespace handsoff {

struct PlantModel {
    Matrix A;
    Matrix B;
    double Ts = 0.0;  // metadata only
    HPolytope S, X, U, D, W, V;
    // NaN means "not supplied": eps_p / eps_m default to the minimal scalings
    // plus 1e-6, delta to the origin-centred Chebyshev radius of S.
    double eps_p = std::numeric_limits<double>::quiet_NaN();
    double eps_m = std::numeric_limits<double>::quiet_NaN();
    double eps_s = std::numeric_limits<double>::quiet_NaN();
    double delta = std::numeric_limits<double>::quiet_NaN();

    int n() const { return static_cast<int>(A.rows()); }
    int m() const { return static_cast<int>(B.cols()); }
    // Throws std::invalid_argument naming the first inconsistent field.
    void check_dimensions() const;
};

// Fills unspecified eps_p, eps_m, delta.
PlantModel with_defaults(PlantModel model, const ToleranceProfile& tol = {});

struct CheckResult {
    std::string name;
    bool passed = false;
    double margin = 0.0;  // positive = satisfied with room, negative = violated by |margin|
    std::string detail;
};

struct ValidationReport {
    std::vector<CheckResult> checks;
    bool passed() const;
    const CheckResult* find(const std::string& name) const;
};

// Origin in the (relative) interior of every set, S strictly inside X, the
// parameter ranges, and the inclusions
//   V in eps_p S, -V in eps_m S, ball(delta) in S, A S + W + D in X.
ValidationReport validate(const PlantModel& model, const ToleranceProfile& tol = {});

// Margin of the origin inside P: min over non-implicit facets of b_i/||H_i||.
// Facets holding with equality on all of P (flat sets) are skipped.
double relative_interior_margin(const HPolytope& P, const ToleranceProfile& tol = {});

struct DerivedSets {
    VPolytope S_plus;   // A S + W + D
    VPolytope S_c;      // conv(S, S_plus), vertices in lexicographic order
    VPolytope N;        // (-V) + V
    HPolytope N_h;
    SupportFunction W;
    SupportFunction V;
    SupportFunction Z;  // W x V
    HPolytope S_monitor;  // S - (-V)

    const Matrix& omega() const { return S_c.V; }
};

DerivedSets derive_sets(const PlantModel& model, const ToleranceProfile& tol = {});

// Symmetric outer box of Z: every z in Z is G t with |t_i| <= radius_i, so
// -1 <= H_Z z <= 1. Directions in which Z has no extent are dropped, so n_Z
// can be smaller than 2n. An asymmetric factor is replaced by its symmetric
// hull and flagged.
struct HZOuterBox {
    Matrix H_Z;     // n_Z x 2n, rows = basis_i^T / radius_i
    Matrix G;       // 2n x n_Z orthonormal basis; Z lies in range(G)
    Vector radius;  // half-widths along the columns of G
    bool symmetrized = false;
    std::string note;

    int n_Z() const { return static_cast<int>(G.cols()); }
    // diag(1 / radius), the box in reduced coordinates t = G^T z
    Matrix reduced() const { return radius.cwiseInverse().asDiagonal(); }
};

HZOuterBox outer_box_Z(const PlantModel& model, const ToleranceProfile& tol = {});

// z = [w; v] with w, v sampled uniformly from W and V.
Vector sample_disturbance(const PlantModel& model, std::mt19937_64& rng);

}  // namespace handsoff
