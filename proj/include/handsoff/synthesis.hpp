#pragma once

// Joint design of a dynamic output controller and the inner/outer set pair.
// Each convex subproblem freezes one factor of the products H~_I H~_Ii and
// H_O H_Oi and pulls the other towards the inverse; the slack-variable
// linearization points Y are refreshed from the previous optimizer.

#include <handsoff/conditions.hpp>
#include <handsoff/optim.hpp>

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace handsoff {

enum class InitStrategy { ScaledIdentity, Warm };

struct SynthesisParams {
    int n_K = 0;
    double eta = 0.99;
    double eps_s = std::numeric_limits<double>::quiet_NaN();  // NaN: use the model's
    double eps_c = 1e-7;           // stop once the gap improves by less than this
    int max_iterations = 100;
    double psd_margin = 1e-7;
    double certified_cost = 1e-6;  // gap at or below this counts as converged
    double variable_bound = 1e4;   // |z_i| <= bound on every decision entry
    double slack_floor = 1e-2;     // X_* >= floor I keeps the next linearization points bounded
    InitStrategy init = InitStrategy::ScaledIdentity;
    std::vector<double> init_grid;  // empty: c = 1, 10^-0.5, 10^0.5, ... down to 1e-3 / up to 1e3

    // Throws std::invalid_argument naming the offending field.
    void check(double eps_p, double eps_m) const;
};

// Linearization points, one per row j (size n+n_K) and per input facet l.
struct FrozenPoints {
    std::vector<Matrix> Y_I1, Y_I2, Y_O1, Y_O2, Y_U;

    static FrozenPoints scaled_identity(int d, int n_U, double c);
};

// Which factor pair is held at its previous value.
enum class Lock { None, Factors, Inverses };  // Factors: H~_I, H_O; Inverses: H~_Ii, H_Oi

// k = 0 unlocked, odd k freezes the factors, even k the inverses.
Lock lock_for_iteration(int k);
std::string_view to_string(Lock lock);

// Model data in the normalized form the subproblem needs.
struct SynthesisData {
    int n = 0, m = 0, n_K = 0;
    Matrix A, B;
    Matrix H_S, H_X, H_U;  // rows scaled so the right-hand side is 1
    Matrix G;              // 2n x n_Z, every z in Z is G s with |s_i| <= 1
    Matrix H_Z;            // n_Z x n_Z box in those coordinates (the identity)
    Matrix omega;          // n x n_c vertices of S_c
    double eta = 0.99;
    double eps_s = 0.0;
    double inner_scale = 0.0;  // eps_s - eps_m - eps_p

    int d() const { return n + n_K; }
    int n_Z() const { return static_cast<int>(H_Z.rows()); }
    int n_S() const { return static_cast<int>(H_S.rows()); }
    int n_X() const { return static_cast<int>(H_X.rows()); }
    int n_U() const { return static_cast<int>(H_U.rows()); }
    int n_c() const { return static_cast<int>(omega.cols()); }
};

SynthesisData synthesis_data(const PlantModel& model, const DerivedSets& derived, const SynthesisParams& params,
                             const ToleranceProfile& tol = {});

struct SynthesisIterate {
    int k = 0;
    Lock lock = Lock::None;
    ControllerRealization K;
    Matrix H_I, H_Ii, H_O, H_Oi;
    std::vector<Matrix> X_I1, X_I2, X_O1, X_O2, X_U;
    std::vector<Vector> D_I1, D_I2, D_O1, D_O2, D_S, D_X, D_U1, D_U2;  // diagonals
    Vector r_I, r_O;
    FrozenPoints Y;      // points this iterate was solved with
    double cost = 0.0;   // optimal value: ||M_0||_F^2 at k = 0, the gap afterwards
    double gap = 0.0;    // tr(G G^T), G = [H~_I H~_Ii - I, H_O H_Oi - I]

    double min_factor_singular_value() const;
    // Y for the next subproblem: X^{-1} times the matching factor.
    FrozenPoints next_points() const;
};

// Constraint families emitted into one subproblem, by count.
struct ConstraintCensus {
    std::map<std::string, int> blocks;  // LMI families
    int multiplier_rows = 0;            // diagonal entries kept >= 0
    int vertex_constraints = 0;         // two-sided S_c vertex constraints, one per side per vertex
    int vertex_rows = 0;                // scalar rows behind them
    int lock_equalities = 0;
    int bound_rows = 0;
    int num_vars = 0;
    int cost_block_size = 0;
};

struct SynthesisProblem {
    SemidefiniteProgram program;
    ConstraintCensus census;
    Lock lock = Lock::None;
    int k = 0;

    SynthesisIterate decode(const Vector& z) const;

    // variable layout, row-major for general matrices, lower triangle for symmetric ones
    std::vector<int> A_K, B_K, C_K, D_K, H_I, H_Ii, H_O, H_Oi;
    std::vector<std::vector<int>> X_I1, X_I2, X_O1, X_O2, X_U;
    std::vector<std::vector<int>> D_I1, D_I2, D_O1, D_O2, D_S, D_X, D_U1, D_U2;
    int t = -1;
    int d = 0, n = 0, m = 0, n_K = 0;
    double eta = 0.0;
    FrozenPoints Y;
};

// previous is required whenever lock != None (its factors supply the frozen
// values and the fixed half of the cost).
SynthesisProblem build_problem(const SynthesisData& data, const SynthesisParams& params, const FrozenPoints& Y,
                               int k, const SynthesisIterate* previous = nullptr);

struct SynthesisError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InitializationFailed : SynthesisError {
    using SynthesisError::SynthesisError;
};
struct RecursiveFeasibilityBroken : SynthesisError {
    RecursiveFeasibilityBroken(int k, const std::string& msg)
        : SynthesisError("iteration " + std::to_string(k) + ": " + msg), iteration(k) {}
    int iteration;
};
struct ExtractionRejected : SynthesisError {
    ExtractionRejected(const std::string& cond, const std::string& msg) : SynthesisError(msg), condition(cond) {}
    std::string condition;
};

struct IterationLog {
    int k = 0;
    double cost = 0.0;
    double gap = 0.0;
    std::string status;
    double wall_ms = 0.0;
    double min_singular_value = 0.0;
    int solver_iterations = 0;
};

struct SynthesisState {
    SynthesisData data;
    SynthesisParams params;
    SynthesisIterate current;
    double init_scale = 0.0;  // grid value that made the first problem feasible
    std::vector<IterationLog> log;
    ToleranceProfile tol;
};

// Scaled-identity strategy: Y = c I with c walked over the grid until the first
// subproblem solves. Warm strategy: seeds used as given.
SynthesisState initialize(const PlantModel& model, const DerivedSets& derived, const SynthesisParams& params,
                          const FrozenPoints* warm = nullptr, const ToleranceProfile& tol = {});

enum class Convergence { Certified, Stalled, Budget };
std::string_view to_string(Convergence c);

struct SynthesisResult {
    Convergence verdict = Convergence::Stalled;
    SynthesisIterate final;
    std::vector<SynthesisIterate> history;  // accepted iterates, k = 0 first
    std::vector<IterationLog> log;
    double largest_increase = 0.0;  // max over k >= 1 of gap^k - gap^{k-1}
    double smallest_singular_value = 0.0;
    SynthesisData data;
};

// Runs the alternating loop from an initialized state. Throws
// RecursiveFeasibilityBroken when a subproblem after the first fails.
SynthesisResult iterate(SynthesisState state);

struct ExtractedDesign {
    ControllerRealization K;
    InvariantSets sets;
    GuaranteeReport report;
};

// Only for Certified results; the artifacts must pass every condition at the
// strict tolerance or ExtractionRejected is thrown.
ExtractedDesign extract(const SynthesisResult& result, const PlantModel& model, const DerivedSets& derived,
                        const ToleranceProfile& tol = {});

}  // namespace handsoff
