#pragma once

// Polytope algebra in halfspace and vertex form. Containment is always decided
// through support functions, so sums and linear images never need an explicit
// halfspace representation.

#include <handsoff/linalg.hpp>
#include <handsoff/tolerance.hpp>

#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

namespace handsoff {

class SetError : public std::runtime_error {
public:
    enum class Kind { Unbounded, Empty, Unsupported, DimensionMismatch, SamplingBudget, Numerical };

    SetError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

// Finite point set; the polytope is its convex hull. Columns are points.
struct VPolytope {
    Matrix V;
    bool lower_dimensional = false;

    VPolytope() = default;
    explicit VPolytope(Matrix points);

    int dim() const { return static_cast<int>(V.rows()); }
    int size() const { return static_cast<int>(V.cols()); }
    Vector vertex(int i) const { return V.col(i); }
};

// {x : H x <= b}. Rows of H are nonzero. Vertices (dim <= 3) are computed
// once on first request and shared between copies.
class HPolytope {
public:
    HPolytope() = default;
    HPolytope(Matrix H, Vector b);

    // lo <= x <= hi (lo == hi allowed, giving a flat box)
    static HPolytope box(const Vector& lo, const Vector& hi);
    static HPolytope symmetric_box(const Vector& radius);

    const Matrix& H() const { return H_; }
    const Vector& b() const { return b_; }
    int dim() const { return static_cast<int>(H_.cols()); }
    int num_facets() const { return static_cast<int>(H_.rows()); }

    // Each row scaled so that b_i = 1; requires b > 0 (origin in the interior).
    HPolytope normalized() const;
    // c * P for c > 0
    HPolytope scaled(double c) const;
    // -P
    HPolytope negated() const;

    // Throws SetError(Unsupported) above dimension 3, Unbounded, Empty.
    const VPolytope& vertices() const;

private:
    Matrix H_;
    Vector b_;
    struct Cache;
    std::shared_ptr<Cache> cache_;
};

// {xi : -1 <= H xi <= 1} with H square and invertible.
class SymmetricBoxImage {
public:
    SymmetricBoxImage() = default;
    explicit SymmetricBoxImage(Matrix H);

    const Matrix& H() const { return H_; }
    const Matrix& H_inverse() const { return Hinv_; }
    int dim() const { return static_cast<int>(H_.rows()); }

    HPolytope to_hpolytope() const;
    // H^{-1} applied to every corner of {-1, 1}^n.
    VPolytope vertices() const;
    bool contains(const Vector& x, double tol = 0.0) const;
    // c * set, c > 0
    SymmetricBoxImage scaled(double c) const;

private:
    Matrix H_;
    Matrix Hinv_;
};

// h -> max over the set of h.x, closed under linear images, Minkowski sums and
// scaling.
class SupportFunction {
public:
    SupportFunction() = default;
    SupportFunction(int dim, std::function<double(const Vector&)> f);
    SupportFunction(const HPolytope& P, const ToleranceProfile& tol = {});
    SupportFunction(const VPolytope& P);
    SupportFunction(const SymmetricBoxImage& P);

    int dim() const { return dim_; }
    double operator()(const Vector& h) const;

private:
    int dim_ = 0;
    std::function<double(const Vector&)> f_;
};

SupportFunction operator+(const SupportFunction& f, const SupportFunction& g);
SupportFunction operator*(const Matrix& M, const SupportFunction& f);
SupportFunction operator*(double c, const SupportFunction& f);
// Support of the singleton {0} in R^n.
SupportFunction zero_set(int n);
// P x Q
SupportFunction cartesian_product(const SupportFunction& f, const SupportFunction& g);

double support(const HPolytope& P, const Vector& h, const ToleranceProfile& tol = {});
double support(const VPolytope& P, const Vector& h);
double support(const SymmetricBoxImage& P, const Vector& h);

VPolytope affine_image(const VPolytope& P, const Matrix& M);
VPolytope affine_image(const HPolytope& P, const Matrix& M);
VPolytope affine_image(const SymmetricBoxImage& P, const Matrix& M);

VPolytope minkowski_sum(const VPolytope& P, const VPolytope& Q, const ToleranceProfile& tol = {});
VPolytope convex_hull_union(const VPolytope& P, const VPolytope& Q, const ToleranceProfile& tol = {});
// Removes duplicate and non-extreme points. Exact for dim <= 2; LP-based above.
VPolytope reduce(const VPolytope& P, const ToleranceProfile& tol = {});

// {x : H x <= b - support(Q, H_i)}. May be empty; see is_empty.
HPolytope pontryagin_difference(const HPolytope& P, const SupportFunction& Q);

bool contains_point(const HPolytope& P, const Vector& x, double tol = 0.0);
bool contains_point(const VPolytope& P, const Vector& x, const ToleranceProfile& tol = {});

struct Containment {
    bool contained = false;
    double worst_slack = 0.0;  // max_i support(inner, H_i) - b_i
    int worst_facet = -1;
    Vector slacks;
    explicit operator bool() const { return contained; }
};

Containment contains_polytope(const SupportFunction& inner, const HPolytope& outer, double allowance);
Containment contains_polytope(const SupportFunction& inner, const HPolytope& outer,
                              const ToleranceProfile& tol = {});

// Smallest lambda >= 0 with P inside lambda * Q, for Q with b > 0.
double minimal_scaling(const SupportFunction& P, const HPolytope& Q);

// Radius of the largest origin-centred ball inside P: min_i b_i / ||H_i||.
double chebyshev_radius(const HPolytope& P);

struct Ball {
    Vector center;
    double radius = 0.0;  // negative when P is empty
};
Ball chebyshev_ball(const HPolytope& P, const ToleranceProfile& tol = {});
bool is_empty(const HPolytope& P, const ToleranceProfile& tol = {});

VPolytope vertices(const HPolytope& P);
// Halfspace form of a hull of points, dim <= 3. Flat sets keep opposite facet
// pairs with equal offsets.
HPolytope to_hpolytope(const VPolytope& P, const ToleranceProfile& tol = {});
// Drops facets implied by the others (LP per facet) and duplicate rows.
HPolytope remove_redundant(const HPolytope& P, const ToleranceProfile& tol = {});

struct AffineHull {
    Vector center;
    Matrix basis;       // orthonormal columns spanning the directions of the hull
    Matrix complement;  // orthonormal columns normal to it
    int rank = 0;
};
AffineHull affine_hull(const VPolytope& P, const ToleranceProfile& tol = {});

// (lo, hi) when every facet is axis-aligned; nullopt otherwise.
std::optional<std::pair<Vector, Vector>> axis_aligned_bounds(const HPolytope& P);

// Uniform sample. Exact for axis-aligned boxes; flat sets are sampled in
// their affine hull; otherwise rejection from the bounding box.
Vector sample_uniform(const HPolytope& P, std::mt19937_64& rng, const std::string& name = "set",
                      int budget = 100000);

}  // namespace handsoff
