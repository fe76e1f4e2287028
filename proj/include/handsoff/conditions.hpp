#pragma once

// Set-inclusion conditions on the inner/outer set pair and the closed loop,
// and the scalars (alpha, beta, mu, T_max) bounding the closed-loop episodes.

#include <handsoff/controller.hpp>
#include <handsoff/model.hpp>

#include <optional>
#include <string>
#include <vector>

namespace handsoff {

enum class Verdict { Pass, Marginal, Fail, Inconclusive };

std::string_view to_string(Verdict v);

struct ConditionResult {
    std::string name;
    Verdict verdict = Verdict::Fail;
    double worst_slack = 0.0;  // <= 0 means satisfied; same units as the facet offsets
    int worst_facet = -1;
    bool required = true;      // informational checks do not gate all_pass
    std::string detail;

    bool ok() const { return verdict == Verdict::Pass || verdict == Verdict::Marginal; }
};

// Pass when worst <= strict, Marginal when worst <= allowance, Fail otherwise.
Verdict classify(double worst, double strict, double allowance);

// Omega_I = [I O] lifted + N, kept implicit. Support and membership are
// evaluated on the lifted variables.
class InnerSet {
public:
    InnerSet() = default;
    InnerSet(SymmetricBoxImage lifted, VPolytope N, HPolytope N_h, int n);

    const SymmetricBoxImage& lifted() const { return lifted_; }
    const VPolytope& N() const { return N_; }
    int dim() const { return n_; }
    Matrix projector() const;  // [I_n O]
    SupportFunction support() const;
    // LP feasibility in (xi, nu): |H xi| <= 1, nu in N, [I O] xi + nu = x
    bool contains(const Vector& x, const ToleranceProfile& tol = {}) const;
    // Halfspace form from the corner-exact vertices (n <= 3).
    HPolytope to_hpolytope(const ToleranceProfile& tol = {}) const;

private:
    SymmetricBoxImage lifted_;
    VPolytope N_;
    HPolytope N_h_;
    int n_ = 0;
};

InnerSet build_inner_set(const SymmetricBoxImage& lifted, const DerivedSets& derived, int n);

struct InvariantSets {
    SymmetricBoxImage lifted_inner;        // {xi : -1 <= H~_I xi <= 1}
    SymmetricBoxImage outer;               // {xi : -1 <= H_O xi <= 1}
    std::optional<Matrix> inner_explicit;  // H_I with Omega_I = {x : -1 <= H_I x <= 1}

    std::optional<HPolytope> inner_explicit_hpolytope() const;
};

struct CheckSettings {
    double eta = 0.99;
    double strict = 1e-8;       // facet slack counted as a pass
    double allowance = 1e-8;    // facet slack counted as marginal; 5e-3 for printed data
    int truncation = 50;        // horizon of the direct I3 check
};

ConditionResult check_C1(const ClosedLoop& CL, const SymmetricBoxImage& lifted, const SupportFunction& Z,
                         double eta, const CheckSettings& s = {});
ConditionResult check_C2(const SymmetricBoxImage& lifted, const HPolytope& S, double eps_s, double eps_p,
                         double eps_m, const CheckSettings& s = {});

struct IConditions {
    ConditionResult I1, I2, I3, I3_direct;
    double alpha = 0.0;           // 1 / ||H~_I||
    double alpha_direct = 0.0;    // origin-centred radius of Omega_I - N
    double beta = 0.0;            // eta
    double beta_direct = 0.0;     // smallest beta the truncated sum plus tail allows
    double tail_bound = 0.0;
};

// z_vertices: columns whose convex hull contains Z; used only by the tail bound
// of the direct I3 route.
IConditions check_I_conditions(const InnerSet& inner, const HPolytope& S, double eps_s, const ClosedLoop& CL,
                               const SupportFunction& Z, const Matrix& z_vertices, const ConditionResult& C1,
                               const CheckSettings& s = {});

struct OConditions {
    ConditionResult O1, O2, O3, O4;
};

OConditions check_O_conditions(const ClosedLoop& CL, const SymmetricBoxImage& outer, const VPolytope& S_c,
                               const HPolytope& X, const HPolytope& U, const SupportFunction& Z,
                               const CheckSettings& s = {});

struct DwellBound {
    int T_max = 0;
    double mu = 0.0;
    double threshold = 0.0;  // alpha (1 - beta) / mu
    int window = 1;          // p with ||A^p|| <= 1 used to certify all later powers
};

// Smallest T such that ||A_CL^j|| <= alpha (1 - beta) / mu for every j >= T.
// Throws std::invalid_argument when A_CL is not Schur.
DwellBound compute_Tmax(const ClosedLoop& CL, const VPolytope& S_c, double alpha, double beta,
                        int max_power = 1000000);

struct GuaranteeReport {
    std::vector<ConditionResult> conditions;
    double spectral_radius = 0.0;
    double alpha = 0.0, beta = 0.0, mu = 0.0;
    int T_max = 0;
    IConditions inner;

    bool all_pass() const;
    const ConditionResult* find(const std::string& name) const;
};

// Full certificate: Schur, C1, C2, I1-I3 (both routes), O1-O4, T_max, and
// the printed/implicit Omega_I comparison when an explicit H_I is supplied.
GuaranteeReport certify(const PlantModel& model, const DerivedSets& derived, const ControllerRealization& K,
                        const InvariantSets& sets, const CheckSettings& s = {}, const ToleranceProfile& tol = {});

// Corners of the outer box of W x V (columns); their hull contains Z.
Matrix disturbance_corners(const PlantModel& model, const ToleranceProfile& tol = {});

}  // namespace handsoff
