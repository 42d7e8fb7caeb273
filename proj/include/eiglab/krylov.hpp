#pragma once
// Krylov recurrences (one-sided Arnoldi and the balanced two-sided Lanczos
// process), Ritz extraction, and per-step diagnostics tying projection errors
// to the recurrence coupling scalars.

#include <eiglab/dense.hpp>
#include <eiglab/subspace.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace eiglab {

// One run of a Krylov recurrence. Invariants (checked before returning):
//   A  V = V H + vnext e_l^T            (vnext is the raw residual)
//   A^H W = W H^H + wnext e_l^T          (two-sided runs)
//   W^H V = I                            (orthonormality when one-sided)
// The normalized continuation vectors are vnext / next_beta and
// wnext / conj(next_gamma); next_beta = |next_gamma| is the coupling size.
// For one-sided runs W aliases V and next_gamma = next_beta.
// termination is "maxSteps", "happy" (an invariant subspace was hit), or
// "breakdown" (the two-sided pairing collapsed with nonzero residuals).
struct KrylovRun {
    Matrix A;
    Matrix V;
    Matrix W;
    Matrix H;
    Vector vnext;
    Vector wnext;
    double next_beta = 0.0;
    Complex next_gamma{0.0, 0.0};
    Index steps = 0;
    std::string termination;
    bool two_sided = false;
};

namespace detail {

inline void check_krylov_start(const Matrix& A, const Vector& v1, Index max_steps) {
    require_finite(A, "krylov operator");
    if (A.rows() != A.cols()) throw std::invalid_argument("krylov: operator must be square");
    if (v1.size() != A.rows()) throw std::invalid_argument("krylov: starting vector size mismatch");
    if (!(v1.norm() > 0.0)) throw std::invalid_argument("krylov: starting vector is zero");
    if (max_steps < 1 || max_steps > A.rows())
        throw std::invalid_argument("krylov: step count must lie in [1, dimension]");
}

inline void check_recurrence(const KrylovRun& run, double anorm) {
    const Index l = run.steps;
    const Matrix Vl = run.V.leftCols(l);
    const Matrix Wl = run.W.leftCols(l);
    const double colscale =
        std::max({1.0, Vl.colwise().norm().maxCoeff(), Wl.colwise().norm().maxCoeff()});
    const double tol = 1e-9 * std::max(1.0, anorm) * colscale;

    Matrix resR = run.A * Vl - Vl * run.H;
    resR.col(l - 1) -= run.vnext;
    if (!(spectral_norm(resR) <= tol))
        throw std::runtime_error("krylov: recurrence residual " + std::to_string(spectral_norm(resR)) +
                                 " exceeds tolerance");
    if (run.two_sided) {
        Matrix resL = run.A.adjoint() * Wl - Wl * run.H.adjoint();
        resL.col(l - 1) -= run.wnext;
        if (!(spectral_norm(resL) <= tol))
            throw std::runtime_error("krylov: adjoint recurrence residual " +
                                     std::to_string(spectral_norm(resL)) + " exceeds tolerance");
    }
    const double pairdef = spectral_norm(Matrix(Wl.adjoint() * Vl - Matrix::Identity(l, l)));
    const double pairtol = run.two_sided ? 1e-8 : 1e-10;
    if (!(pairdef <= pairtol))
        throw std::runtime_error("krylov: basis pairing defect " + std::to_string(pairdef));
}

}  // namespace detail

// Orthonormal-basis recurrence by modified Gram-Schmidt with an
// unconditional second orthogonalization pass.
inline KrylovRun arnoldi(const Matrix& A, const Vector& v1, Index max_steps) {
    detail::check_krylov_start(A, v1, max_steps);
    const Index n = A.rows();
    const double anorm = spectral_norm_estimate(A);

    KrylovRun run;
    run.A = A;
    run.V.resize(n, max_steps);
    run.H = Matrix::Zero(max_steps, max_steps);
    run.termination = "maxSteps";

    Vector v = v1 / v1.norm();
    Vector r;
    Index l = 1;
    for (;; ++l) {
        run.V.col(l - 1) = v;
        r = A * v;
        for (int pass = 0; pass < 2; ++pass) {
            const Vector c = run.V.leftCols(l).adjoint() * r;
            r -= run.V.leftCols(l) * c;
            run.H.block(0, l - 1, l, 1) += c;
        }
        if (l == max_steps) break;
        const double hb = r.norm();
        if (hb <= 1e-13 * std::max(1.0, anorm)) {
            run.termination = "happy";
            break;
        }
        run.H(l, l - 1) = hb;
        v = r / hb;
    }
    run.steps = l;
    run.V.conservativeResize(n, l);
    run.H.conservativeResize(l, l);
    run.vnext = r;
    run.next_beta = r.norm();
    run.next_gamma = Complex(run.next_beta, 0.0);
    run.W = run.V;
    run.wnext = run.vnext;
    run.two_sided = false;
    if (run.termination == "maxSteps" && run.next_beta <= 1e-13 * std::max(1.0, anorm))
        run.termination = "happy";
    detail::check_recurrence(run, anorm);
    return run;
}

// Two-sided recurrence building biorthonormal bases (W^H V = I) with the
// balanced normalization: subdiagonal couplings beta are positive and the
// superdiagonal couplings gamma satisfy |gamma| = beta. Basis vectors are
// not unit vectors in general. Rebiorthogonalization runs two passes each
// side; the right-side corrections fold into H so the recurrence identity
// stays exact, the left-side ones are below the checked tolerance.
inline KrylovRun bilanczos(const Matrix& A, const Vector& v1, const Vector& w1, Index max_steps) {
    detail::check_krylov_start(A, v1, max_steps);
    if (w1.size() != A.rows()) throw std::invalid_argument("krylov: left starting vector size mismatch");
    if (!(w1.norm() > 0.0)) throw std::invalid_argument("krylov: left starting vector is zero");
    const Index n = A.rows();
    const double anorm = spectral_norm_estimate(A);

    Vector v = v1 / v1.norm();
    const Complex pair0 = w1.dot(v);
    if (!(std::abs(pair0) > 1e-12 * w1.norm()))
        throw std::invalid_argument(
            "krylov: starting vectors are numerically orthogonal, two-sided pairing undefined");
    Vector w = w1 / std::conj(pair0);

    KrylovRun run;
    run.A = A;
    run.two_sided = true;
    run.V.resize(n, max_steps);
    run.W.resize(n, max_steps);
    run.H = Matrix::Zero(max_steps, max_steps);
    run.termination = "maxSteps";

    Vector vt, wt;
    Index l = 1;
    for (;; ++l) {
        run.V.col(l - 1) = v;
        run.W.col(l - 1) = w;
        const Vector Av = A * v;
        const Complex alpha = w.dot(Av);
        vt = Av - alpha * v;
        wt = A.adjoint() * w - std::conj(alpha) * w;
        if (l >= 2) {
            vt -= run.H(l - 2, l - 1) * run.V.col(l - 2);
            wt -= std::conj(run.H(l - 1, l - 2)) * run.W.col(l - 2);
        }
        run.H(l - 1, l - 1) = alpha;
        for (int pass = 0; pass < 2; ++pass) {
            const Vector cv = run.W.leftCols(l).adjoint() * vt;
            vt -= run.V.leftCols(l) * cv;
            run.H.block(0, l - 1, l, 1) += cv;
            const Vector cw = run.V.leftCols(l).adjoint() * wt;
            wt -= run.W.leftCols(l) * cw;
        }
        if (l == max_steps) break;
        if (vt.norm() <= 1e-13 * std::max(1.0, anorm) ||
            wt.norm() <= 1e-13 * std::max(1.0, anorm)) {
            run.termination = "happy";
            break;
        }
        const Complex omega = wt.dot(vt);
        if (!(std::abs(omega) > 1e-12 * wt.norm() * vt.norm())) {
            run.termination = "breakdown";
            break;
        }
        const double beta = std::sqrt(std::abs(omega));
        const Complex gamma = omega / beta;
        run.H(l, l - 1) = beta;
        run.H(l - 1, l) = gamma;
        v = vt / beta;
        w = wt / std::conj(gamma);
    }
    run.steps = l;
    run.V.conservativeResize(n, l);
    run.W.conservativeResize(n, l);
    run.H.conservativeResize(l, l);
    run.vnext = vt;
    run.wnext = wt;
    const Complex omega = wt.dot(vt);
    run.next_beta = std::sqrt(std::abs(omega));
    run.next_gamma = run.next_beta > 0.0 ? omega / run.next_beta : Complex(0.0, 0.0);
    if (run.termination == "maxSteps") {
        if (vt.norm() <= 1e-13 * std::max(1.0, anorm) || wt.norm() <= 1e-13 * std::max(1.0, anorm))
            run.termination = "happy";
        else if (!(std::abs(omega) > 1e-12 * wt.norm() * vt.norm()))
            run.termination = "breakdown";
    }
    detail::check_recurrence(run, anorm);
    return run;
}

// Ritz approximations from the leading l-step section of a run.
struct RitzPairs {
    Vector values;
    Matrix coords;   // unit columns, eigenvectors of the leading section of H
    Matrix vectors;  // ambient lifts V_l * coords
};

inline RitzPairs ritz_pairs(const KrylovRun& run, Index l) {
    if (l < 1 || l > run.steps)
        throw std::invalid_argument("ritz_pairs: step index outside the run");
    const EigResult e = eig_dense(run.H.topLeftCorner(l, l));
    RitzPairs out;
    out.values = e.values;
    out.coords = e.right;
    out.vectors = run.V.leftCols(l) * out.coords;
    return out;
}

namespace detail {

inline Matrix orthonormal_basis(const Matrix& X) {
    Eigen::HouseholderQR<Matrix> qr(X);
    return qr.householderQ() * Matrix::Identity(X.rows(), X.cols());
}

inline Matrix orthonormal_complement(const Matrix& X) {
    Eigen::HouseholderQR<Matrix> qr(X);
    const Matrix Q = qr.householderQ();
    return Q.rightCols(X.rows() - X.cols());
}

// Coupling scalar and left vector one step past l. The left vector is
// returned unnormalized together with the divisor so callers can keep
// products finite through breakdowns.
struct NextCoupling {
    double beta = 0.0;
    Complex gamma{0.0, 0.0};
    Vector w_raw;        // equals conj(gamma) * w_{l+1}
    Vector v_prev;       // v_l itself
};

inline NextCoupling coupling_past(const KrylovRun& run, Index l) {
    NextCoupling c;
    c.v_prev = run.V.col(l - 1);
    if (l < run.steps) {
        c.beta = std::abs(run.H(l, l - 1));
        c.gamma = run.H(l - 1, l);
        c.w_raw = std::conj(c.gamma) * run.W.col(l);
    } else {
        c.beta = run.next_beta;
        c.gamma = run.next_gamma;
        c.w_raw = run.wnext;
    }
    return c;
}

}  // namespace detail

// Per-step diagnostics for one tracked eigenpair (lambda, u) of the run's
// operator. All norms are Euclidean. epsRatio is the superconvergence
// functional of the step-l Krylov trial space; epsBound is its closed-form
// companion from the recurrence scalars (for one-sided runs the two agree
// identically). Quantities whose denominators vanish (the Krylov space has
// captured u) come back as NaN.
struct StepDiagnostics {
    Index l = 0;
    Complex ritz{0.0, 0.0};   // tracked Ritz value
    Index tracked = 0;        // its index within ritz_pairs(run, l)
    double eigGap = 0.0;      // |ritz - lambda|
    bool converged = false;   // Ritz residual below 1e-10 * max(1, ||A||)
    double projErr = 0.0;     // ||u_l - Q_l u|| with the gauged Ritz vector u_l
    double uhNorm = 0.0;      // ||u_l|| after gauging (equals ||Q_l u||)
    double gapKrylov = 0.0;   // ||(I - P_l) u|| / ||u||, P_l orthogonal onto the Krylov space
    double middleDirect = 0.0;  // ||Q_l A (I - Q_l) u||
    double middleClosed = 0.0;  // the same via the coupling scalars
    double betaProd = 0.0;      // |beta_2 ... beta_l|
    double epsRatio = 0.0;      // middleDirect / ||(I - P_l) u||
    double epsBound = 0.0;      // |w_{l+1}^H u| / betaProd  (one-sided: exact epsRatio)
};

inline StepDiagnostics step_diagnostics(const KrylovRun& run, Index l, Complex lambda,
                                        const Vector& u) {
    if (l < 1 || l > run.steps)
        throw std::invalid_argument("step_diagnostics: step index outside the run");
    if (u.size() != run.A.rows())
        throw std::invalid_argument("step_diagnostics: vector size mismatch");
    if (!(u.norm() > 0.0)) throw std::invalid_argument("step_diagnostics: zero vector");

    const Matrix Vl = run.V.leftCols(l);
    const Matrix Wl = run.W.leftCols(l);

    StepDiagnostics d;
    d.l = l;

    const RitzPairs rp = ritz_pairs(run, l);
    Index best = 0;
    double bestDist = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < rp.values.size(); ++i) {
        const double dist = std::abs(rp.values(i) - lambda);
        if (dist < bestDist) {
            bestDist = dist;
            best = i;
        }
    }
    d.tracked = best;
    d.ritz = rp.values(best);
    d.eigGap = bestDist;

    // Oblique projection of u onto the Krylov space along the test space.
    const Vector Qu = Vl * (Wl.adjoint() * u);

    // Gauge the Ritz vector: align its phase with Qu and give it Qu's length.
    Vector ul = rp.vectors.col(best);
    const Complex overlap = ul.dot(Qu);
    if (std::abs(overlap) > 0.0) ul *= overlap / std::abs(overlap);
    if (ul.norm() > 0.0) ul *= Qu.norm() / ul.norm();
    d.projErr = (ul - Qu).norm();
    d.uhNorm = ul.norm();

    const double anorm = spectral_norm_estimate(run.A);
    const double resid = (run.A * ul - d.ritz * ul).norm();
    d.converged = resid <= 1e-10 * std::max(1.0, anorm) * std::max(ul.norm(), 1e-300);

    const Vector residual = u - Qu;
    d.middleDirect = (Vl * (Wl.adjoint() * (run.A * residual))).norm();

    const Matrix Porth = detail::orthonormal_basis(Vl);
    const Vector orth_res = u - Porth * (Porth.adjoint() * u);
    d.gapKrylov = orth_res.norm() / u.norm();

    d.betaProd = 1.0;
    for (Index j = 1; j < l; ++j) d.betaProd *= std::abs(run.H(j, j - 1));

    const double den = orth_res.norm();
    const bool captured = den <= 1e-12 * u.norm();
    d.epsRatio = captured ? std::numeric_limits<double>::quiet_NaN() : d.middleDirect / den;

    if (run.two_sided) {
        const detail::NextCoupling c = detail::coupling_past(run, l);
        // |gamma_{l+1}| ||v_l|| |w_{l+1}^H u|, kept finite through breakdowns
        // because gamma_{l+1} w_{l+1} is the raw residual.
        d.middleClosed = c.v_prev.norm() * std::abs(c.w_raw.dot(u));
        if (c.gamma != Complex(0.0, 0.0) && d.betaProd > 0.0)
            d.epsBound = std::abs((c.w_raw / std::conj(c.gamma)).dot(u)) / d.betaProd;
        else
            d.epsBound = std::numeric_limits<double>::quiet_NaN();
    } else {
        const Matrix comp = detail::orthonormal_complement(Vl);
        const Matrix H12 = Vl.adjoint() * (run.A * comp);
        const Vector cu = comp.adjoint() * u;
        d.middleClosed = (H12 * cu).norm();
        d.epsBound = captured ? std::numeric_limits<double>::quiet_NaN() : d.middleClosed / den;
    }
    return d;
}

namespace detail {

inline double biorth_norm_with_tail(const KrylovRun& run, const Matrix& tail) {
    const Index n = run.A.rows();
    const Index l = run.steps;
    Matrix Vfull(n, n);
    Vfull.leftCols(l) = run.V.leftCols(l);
    Vfull.rightCols(n - l) = tail;
    Matrix inv;
    try {
        inv = solve_linear(Vfull, Matrix::Identity(n, n));
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string("full_biorth_norm: completion is numerically singular (") +
                                 e.what() + ")");
    }
    return spectral_norm(Matrix(inv.adjoint()));
}

}  // namespace detail

// Operator norm of the full biorthogonal system extending the run's left
// basis. A run of full length supplies its own system; one-sided runs extend
// to a unitary system, so the norm is one. A two-sided run stopped early has
// no canonical tail, and this overload completes the right basis with an
// orthonormal basis of the orthogonal complement of span(W), which keeps the
// leading columns of the extended left system equal to the run's W.
inline double full_biorth_norm(const KrylovRun& run) {
    if (!run.two_sided) return 1.0;
    const Index n = run.A.rows();
    const Index l = run.steps;
    if (l == n) return spectral_norm(run.W);
    const Matrix tail = detail::orthonormal_complement(Matrix(run.W.leftCols(l)));
    return detail::biorth_norm_with_tail(run, tail);
}

// Completion against a known eigenbasis of the run's operator: the right
// basis is extended by the eigenbasis columns least captured by the Krylov
// space (chosen by pivoted QR of their components orthogonal to it), so the
// extension stays spectrally meaningful for reference problems whose exact
// eigenvectors are available.
inline double full_biorth_norm(const KrylovRun& run, const Matrix& eigenbasis) {
    if (!run.two_sided) return 1.0;
    const Index n = run.A.rows();
    const Index l = run.steps;
    if (eigenbasis.rows() != n || eigenbasis.cols() != n)
        throw std::invalid_argument("full_biorth_norm: eigenbasis must be square of matching size");
    if (l == n) return spectral_norm(run.W);
    const Matrix Porth = detail::orthonormal_basis(Matrix(run.V.leftCols(l)));
    const Matrix resid = eigenbasis - Porth * (Porth.adjoint() * eigenbasis);
    Eigen::ColPivHouseholderQR<Matrix> qr(resid);
    const auto perm = qr.colsPermutation().indices();
    Matrix tail(n, n - l);
    for (Index j = 0; j < n - l; ++j) tail.col(j) = eigenbasis.col(perm(j));
    return detail::biorth_norm_with_tail(run, tail);
}

// One row per step of the coupling-product bound: the running product of the
// subdiagonal couplings against the containment gap of the target subspace in
// the step-l Krylov space, scaled by the norm of the full biorthogonal system
// and the constant 1 + sqrt(2).
struct CouplingBoundRow {
    Index l = 0;
    double product = 0.0;  // |beta_2 * ... * beta_l|, empty product = 1
    double bound = 0.0;    // ||W|| (1 + sqrt(2)) gap
    double gap = 0.0;      // delta(U, K_l)
};

namespace detail {

inline std::vector<CouplingBoundRow> coupling_rows_impl(const KrylovRun& run, const Matrix& Uframe,
                                                        double wnorm) {
    if (Uframe.rows() != run.A.rows())
        throw std::invalid_argument("coupling_bound_rows: frame size mismatch");
    const Index m = Uframe.cols();
    if (m < 1) throw std::invalid_argument("coupling_bound_rows: empty target subspace");
    const Matrix Uo = orthonormal_basis(Uframe);
    const double factor = wnorm * (1.0 + std::numbers::sqrt2);

    std::vector<CouplingBoundRow> rows;
    double prod = 1.0;  // |beta_2 ... beta_l| maintained incrementally
    for (Index l = 1; l <= run.steps; ++l) {
        if (l >= 2) prod *= std::abs(run.H(l - 1, l - 2));
        if (l < m) continue;
        const Matrix Porth = orthonormal_basis(Matrix(run.V.leftCols(l)));
        const double gap = spectral_norm(Matrix(Uo - Porth * (Porth.adjoint() * Uo)));
        CouplingBoundRow row;
        row.l = l;
        row.product = prod;
        row.gap = std::min(1.0, gap);
        row.bound = factor * row.gap;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace detail

inline std::vector<CouplingBoundRow> coupling_bound_rows(const KrylovRun& run,
                                                         const Matrix& Uframe) {
    return detail::coupling_rows_impl(run, Uframe, full_biorth_norm(run));
}

// Variant completing the biorthogonal system with a known eigenbasis of the
// operator, for reference problems where one is available.
inline std::vector<CouplingBoundRow> coupling_bound_rows(const KrylovRun& run, const Matrix& Uframe,
                                                         const Matrix& eigenbasis) {
    return detail::coupling_rows_impl(run, Uframe, full_biorth_norm(run, eigenbasis));
}

}  // namespace eiglab
