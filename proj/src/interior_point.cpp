#include "interior_point.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace handsoff::ipm {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Iterate {
    std::vector<Matrix> X;
    std::vector<Matrix> S;
    Vector x;  // linear part, primal
    Vector s;  // linear part, dual slack
    Vector y;
};

double inner(const Matrix& A, const Matrix& B) { return (A.array() * B.array()).sum(); }

// A(V)_i = sum_k <A_ki, V_k> + (A_lp^T v)_i
Vector apply_op(const ConeProblem& P, const std::vector<Matrix>& V, const Vector& v) {
    Vector out = Vector::Zero(P.m);
    for (std::size_t k = 0; k < P.psd.size(); ++k) {
        const auto& cone = P.psd[k];
        for (std::size_t t = 0; t < cone.vars.size(); ++t) {
            double acc = 0.0;
            for (const auto& e : cone.coeff[t]) acc += e.value * V[k](e.row, e.col);
            out(cone.vars[t]) += acc;
        }
    }
    if (P.A_lp.rows() > 0) out += P.A_lp.transpose() * v;
    return out;
}

// A*(y) per block and for the linear part.
void apply_adjoint(const ConeProblem& P, const Vector& y, std::vector<Matrix>& out, Vector& out_lp) {
    out.resize(P.psd.size());
    for (std::size_t k = 0; k < P.psd.size(); ++k) {
        const auto& cone = P.psd[k];
        out[k] = Matrix::Zero(cone.size, cone.size);
        for (std::size_t t = 0; t < cone.vars.size(); ++t) {
            const double yi = y(cone.vars[t]);
            if (yi == 0.0) continue;
            for (const auto& e : cone.coeff[t]) out[k](e.row, e.col) += yi * e.value;
        }
    }
    out_lp = P.A_lp.rows() > 0 ? Vector(P.A_lp * y) : Vector();
}

// Largest alpha with M + alpha*D >= 0, given M > 0.
double max_step_psd(const Matrix& M, const Matrix& D) {
    Eigen::LLT<Matrix> llt(M);
    if (llt.info() != Eigen::Success) return 0.0;
    const Matrix L = llt.matrixL();
    Matrix W = L.triangularView<Eigen::Lower>().solve(D);
    W = L.triangularView<Eigen::Lower>().solve(W.transpose()).transpose();
    const Matrix sym = 0.5 * (W + W.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues()(0);
    return lmin >= 0.0 ? kInf : -1.0 / lmin;
}

double max_step_lp(const Vector& v, const Vector& dv) {
    double alpha = kInf;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (dv(i) < 0.0) alpha = std::min(alpha, -v(i) / dv(i));
    }
    return alpha;
}

bool inverse_spd(const Matrix& M, Matrix& inv) {
    Eigen::LLT<Matrix> llt(M);
    if (llt.info() != Eigen::Success) return false;
    inv = llt.solve(Matrix::Identity(M.rows(), M.cols()));
    inv = 0.5 * (inv + inv.transpose());
    return inv.allFinite();
}

Iterate initial_point(const ConeProblem& P) {
    Iterate it;
    it.y = Vector::Zero(P.m);
    for (const auto& cone : P.psd) {
        const double n = cone.size;
        double xi = std::max(10.0, std::sqrt(n));
        double zeta = std::max({10.0, std::sqrt(n), cone.C.norm()});
        for (std::size_t t = 0; t < cone.vars.size(); ++t) {
            double nrm = 0.0;
            for (const auto& e : cone.coeff[t]) nrm += e.value * e.value;
            nrm = std::sqrt(nrm);
            xi = std::max(xi, n * (1.0 + std::abs(P.b(cone.vars[t]))) / (1.0 + nrm));
            zeta = std::max(zeta, nrm);
        }
        it.X.push_back(xi * Matrix::Identity(cone.size, cone.size));
        it.S.push_back(zeta * Matrix::Identity(cone.size, cone.size));
    }
    const auto rows = P.A_lp.rows();
    if (rows > 0) {
        const double n = static_cast<double>(rows);
        double xi = std::max(10.0, std::sqrt(n));
        double zeta = 0.0;
        Eigen::SparseMatrix<double, Eigen::ColMajor> colmajor = P.A_lp;
        for (int j = 0; j < P.m; ++j) {
            const double nrm = colmajor.col(j).norm();
            if (nrm == 0.0) continue;
            xi = std::max(xi, n * (1.0 + std::abs(P.b(j))) / (1.0 + nrm));
            zeta = std::max(zeta, nrm);
        }
        // Rows with a large constant (loose bounds) start at their own slack,
        // x is set so every product x_i s_i matches.
        zeta = std::max({10.0, std::sqrt(n), zeta > 0.0 ? zeta : 1.0});
        const double mu0 = xi * zeta;
        it.s = P.c_lp.cwiseMax(zeta);
        it.x = it.s.cwiseInverse() * mu0;
    } else {
        it.x.resize(0);
        it.s.resize(0);
    }
    return it;
}

Matrix schur_complement(const ConeProblem& P, const Iterate& it, const std::vector<Matrix>& Sinv,
                        const Vector& x_over_s) {
    Matrix M = Matrix::Zero(P.m, P.m);
    for (std::size_t k = 0; k < P.psd.size(); ++k) {
        const auto& cone = P.psd[k];
        const Matrix& X = it.X[k];
        const Matrix& Si = Sinv[k];
        const int s = cone.size;
        Matrix G(s, s);
        for (std::size_t j = 0; j < cone.vars.size(); ++j) {
            G.setZero();
            for (const auto& e : cone.coeff[j]) G.noalias() += e.value * X.col(e.row) * Si.row(e.col);
            for (std::size_t i = 0; i <= j; ++i) {
                double acc = 0.0;
                for (const auto& e : cone.coeff[i]) acc += e.value * G(e.col, e.row);
                M(cone.vars[i], cone.vars[j]) += acc;
            }
        }
    }
    // Only the upper triangle (row <= col in sorted var order) was filled above.
    Matrix full = M.triangularView<Eigen::Upper>();
    full += M.triangularView<Eigen::StrictlyUpper>().transpose();
    if (P.A_lp.rows() > 0) {
        Eigen::SparseMatrix<double, Eigen::RowMajor> scaled = x_over_s.asDiagonal() * P.A_lp;
        Matrix lp = Matrix(P.A_lp.transpose() * scaled);
        full += lp;
    }
    return full;
}

struct Factor {
    Eigen::LLT<Matrix> llt;
    Eigen::LDLT<Matrix> ldlt;
    bool use_ldlt = false;
    bool ok = false;

    void compute(Matrix M) {
        llt.compute(M);
        if (llt.info() == Eigen::Success) {
            ok = true;
            return;
        }
        // Dependent constraints: regularise the diagonal progressively.
        const double scale = std::max(1.0, M.diagonal().cwiseAbs().maxCoeff());
        for (double reg = 1e-14; reg <= 1e-6; reg *= 100.0) {
            Matrix R = M;
            R.diagonal().array() += reg * scale;
            llt.compute(R);
            if (llt.info() == Eigen::Success) {
                ok = true;
                return;
            }
        }
        ldlt.compute(M);
        use_ldlt = true;
        ok = ldlt.info() == Eigen::Success;
    }

    Vector solve(const Vector& rhs) const { return use_ldlt ? Vector(ldlt.solve(rhs)) : Vector(llt.solve(rhs)); }
};

struct Direction {
    std::vector<Matrix> dX;
    std::vector<Matrix> dS;
    Vector dx;
    Vector ds;
    Vector dy;
};

// Solves for the direction given the complementarity targets
//   T_k = sigma*mu*S^-1 - X - corr_k S^-1,   t = sigma*mu/s - x - corr/s.
Direction compute_direction(const ConeProblem& P, const Iterate& it, const std::vector<Matrix>& Sinv,
                            const Factor& factor, const Vector& Rp, const std::vector<Matrix>& Rd,
                            const Vector& rd, double sigma_mu, const Direction* predictor) {
    const std::size_t nb = P.psd.size();
    std::vector<Matrix> T(nb);
    std::vector<Matrix> XRdSi(nb);
    for (std::size_t k = 0; k < nb; ++k) {
        T[k] = sigma_mu * Sinv[k] - it.X[k];
        if (predictor) T[k] -= predictor->dX[k] * predictor->dS[k] * Sinv[k];
        XRdSi[k] = it.X[k] * Rd[k] * Sinv[k];
    }
    Vector t;
    Vector xrds;
    if (it.x.size() > 0) {
        t = sigma_mu * it.s.cwiseInverse() - it.x;
        if (predictor) t -= predictor->dx.cwiseProduct(predictor->ds).cwiseQuotient(it.s);
        xrds = it.x.cwiseProduct(rd).cwiseQuotient(it.s);
    }
    const Vector rhs = Rp - apply_op(P, T, t) + apply_op(P, XRdSi, xrds);

    Direction d;
    d.dy = factor.solve(rhs);
    std::vector<Matrix> Ady;
    Vector Ady_lp;
    apply_adjoint(P, d.dy, Ady, Ady_lp);
    d.dX.resize(nb);
    d.dS.resize(nb);
    for (std::size_t k = 0; k < nb; ++k) {
        d.dS[k] = Rd[k] - Ady[k];
        Matrix dX = T[k] - it.X[k] * d.dS[k] * Sinv[k];
        d.dX[k] = 0.5 * (dX + dX.transpose());
    }
    if (it.x.size() > 0) {
        d.ds = rd - Ady_lp;
        d.dx = t - it.x.cwiseProduct(d.ds).cwiseQuotient(it.s);
    }
    return d;
}

std::pair<double, double> step_lengths(const Iterate& it, const Direction& d) {
    double ap = kInf;
    double ad = kInf;
    for (std::size_t k = 0; k < it.X.size(); ++k) {
        ap = std::min(ap, max_step_psd(it.X[k], d.dX[k]));
        ad = std::min(ad, max_step_psd(it.S[k], d.dS[k]));
    }
    if (it.x.size() > 0) {
        ap = std::min(ap, max_step_lp(it.x, d.dx));
        ad = std::min(ad, max_step_lp(it.s, d.ds));
    }
    return {ap, ad};
}

double complementarity(const Iterate& it) {
    double c = 0.0;
    for (std::size_t k = 0; k < it.X.size(); ++k) c += inner(it.X[k], it.S[k]);
    if (it.x.size() > 0) c += it.x.dot(it.s);
    return c;
}

}  // namespace

Result solve(const ConeProblem& P, const Settings& settings) {
    Result result;
    const std::size_t nb = P.psd.size();
    int total_dim = static_cast<int>(P.A_lp.rows());
    for (const auto& cone : P.psd) total_dim += cone.size;

    if (total_dim == 0) {
        // Only free variables: bounded iff b == 0.
        result.y = Vector::Zero(P.m);
        result.outcome = (P.m == 0 || P.b.cwiseAbs().maxCoeff() == 0.0) ? Outcome::Converged : Outcome::Unbounded;
        return result;
    }

    Iterate it = initial_point(P);
    double c_norm = P.c_lp.norm();
    for (const auto& cone : P.psd) c_norm = std::hypot(c_norm, cone.C.norm());
    const double b_norm = P.b.norm();

    double best_residual = kInf;
    Vector best_y = it.y;
    double best_pobj = 0.0;
    double best_dobj = 0.0;
    int small_steps = 0;
    int best_iter = 0;

    std::vector<Matrix> Rd(nb);
    std::vector<Matrix> Sinv(nb);
    std::vector<Matrix> Ay;
    Vector Ay_lp;

    for (int iter = 0;; ++iter) {
        result.iterations = iter;
        // Residuals.
        const Vector AX = apply_op(P, it.X, it.x);
        const Vector Rp = P.b - AX;
        apply_adjoint(P, it.y, Ay, Ay_lp);
        double rd_norm2 = 0.0;
        double pobj = 0.0;
        for (std::size_t k = 0; k < nb; ++k) {
            Rd[k] = P.psd[k].C - it.S[k] - Ay[k];
            rd_norm2 += Rd[k].squaredNorm();
            pobj += inner(P.psd[k].C, it.X[k]);
        }
        Vector rd;
        if (it.x.size() > 0) {
            rd = P.c_lp - it.s - Ay_lp;
            rd_norm2 += rd.squaredNorm();
            pobj += P.c_lp.dot(it.x);
        }
        const double dobj = P.b.dot(it.y);
        const double comp = complementarity(it);
        const double mu = comp / total_dim;
        const double denom = 1.0 + std::abs(pobj) + std::abs(dobj);
        const double relgap = std::max(std::abs(pobj - dobj), std::abs(comp)) / denom;
        const double pinf = Rp.norm() / (1.0 + b_norm);
        const double dinf = std::sqrt(rd_norm2) / (1.0 + c_norm);
        const double residual = std::max({relgap, pinf, dinf});

        if (residual < best_residual) {
            best_residual = residual;
            best_y = it.y;
            best_pobj = pobj;
            best_dobj = dobj;
            best_iter = iter;
        }
        if (residual <= settings.target) break;

        // Farkas certificates.
        if (pobj < 0.0 && AX.norm() / (-pobj) < settings.infeasibility) {
            result.outcome = Outcome::Infeasible;
            result.message = "dual-form infeasibility certificate found";
            result.y = it.y;
            return result;
        }
        if (dobj > 0.0 && (c_norm + std::sqrt(rd_norm2)) / dobj < settings.infeasibility) {
            result.outcome = Outcome::Unbounded;
            result.message = "improving ray found";
            result.y = it.y;
            return result;
        }
        if (iter >= settings.max_iterations || small_steps >= 8) break;
        // lost accuracy near the boundary, nothing left to gain
        if (iter - best_iter >= settings.stagnation) break;

        bool ok = true;
        for (std::size_t k = 0; k < nb && ok; ++k) ok = inverse_spd(it.S[k], Sinv[k]);
        if (!ok) break;
        Vector x_over_s;
        if (it.x.size() > 0) x_over_s = it.x.cwiseQuotient(it.s);

        Factor factor;
        factor.compute(schur_complement(P, it, Sinv, x_over_s));
        if (!factor.ok) break;

        // Predictor.
        const Direction pred = compute_direction(P, it, Sinv, factor, Rp, Rd, rd, 0.0, nullptr);
        if (!pred.dy.allFinite()) break;
        auto [ap, ad] = step_lengths(it, pred);
        ap = std::min(1.0, ap);
        ad = std::min(1.0, ad);
        double comp_pred = 0.0;
        for (std::size_t k = 0; k < nb; ++k) {
            comp_pred += inner(it.X[k] + ap * pred.dX[k], it.S[k] + ad * pred.dS[k]);
        }
        if (it.x.size() > 0) comp_pred += (it.x + ap * pred.dx).dot(it.s + ad * pred.ds);
        const double ratio = std::clamp(comp_pred / comp, 0.0, 1.0);
        const double expon = std::max(1.0, 3.0 * std::min(ap, ad) * std::min(ap, ad));
        const double sigma = std::pow(ratio, expon);

        // Corrector.
        const Direction dir = compute_direction(P, it, Sinv, factor, Rp, Rd, rd, sigma * mu, &pred);
        if (!dir.dy.allFinite()) break;
        auto [mp, md] = step_lengths(it, dir);
        const double gamma = 0.9 + 0.09 * std::min(ap, ad);
        const double step_p = std::min(1.0, gamma * mp);
        const double step_d = std::min(1.0, gamma * md);
        small_steps = (std::max(step_p, step_d) < 1e-8) ? small_steps + 1 : 0;

        for (std::size_t k = 0; k < nb; ++k) {
            it.X[k] += step_p * dir.dX[k];
            it.S[k] += step_d * dir.dS[k];
        }
        if (it.x.size() > 0) {
            it.x += step_p * dir.dx;
            it.s += step_d * dir.ds;
        }
        it.y += step_d * dir.dy;
    }

    result.y = best_y;
    result.primal_objective = best_pobj;
    result.dual_objective = best_dobj;
    result.residual = best_residual;
    if (best_residual <= settings.acceptable) {
        result.outcome = Outcome::Converged;
    } else {
        result.outcome = Outcome::Stalled;
        result.message = "interior-point iterations stalled at residual " + std::to_string(best_residual);
    }
    return result;
}

ConeProblem phase_one(const ConeProblem& P) {
    ConeProblem Q;
    Q.m = P.m + 1;
    const int t = P.m;
    Q.b = Vector::Zero(Q.m);
    Q.b(t) = 1.0;
    Q.psd = P.psd;
    for (auto& cone : Q.psd) {
        cone.vars.push_back(t);
        std::vector<Entry> id;
        for (int i = 0; i < cone.size; ++i) id.push_back({i, i, 1.0});
        cone.coeff.push_back(std::move(id));
    }
    const auto rows = P.A_lp.rows();
    Q.c_lp.resize(rows + 1);
    Q.c_lp.head(rows) = P.c_lp;
    Q.c_lp(rows) = 1.0;
    std::vector<Eigen::Triplet<double>> trip;
    for (int r = 0; r < rows; ++r) {
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator itr(P.A_lp, r); itr; ++itr) {
            trip.emplace_back(r, static_cast<int>(itr.col()), itr.value());
        }
        trip.emplace_back(r, t, 1.0);
    }
    trip.emplace_back(static_cast<int>(rows), t, 1.0);
    Q.A_lp.resize(rows + 1, Q.m);
    Q.A_lp.setFromTriplets(trip.begin(), trip.end());
    return Q;
}

}  // namespace handsoff::ipm
