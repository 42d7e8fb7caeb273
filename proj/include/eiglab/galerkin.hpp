#pragma once
// Petrov-Galerkin pencil assembly against a dense reference operator, the
// oblique projectors onto the trial space (plain and a-form weighted),
// discrete inf-sup constants, superconvergence functionals, and the combined
// per-mesh cluster diagnostics that convergence studies consume.

#include <eiglab/contour.hpp>
#include <eiglab/dense.hpp>
#include <eiglab/subspace.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace eiglab {

// Reference operator together with the two geometries errors are measured in.
// gramH is the base inner product; gramV is the stronger one used for
// form-based (finite-element style) estimates. A0_diag optionally records the
// eigenvalues of a normal principal part when A_ref = diag(A0_diag) + B.
struct ReferenceProblem {
    Matrix A_ref;
    GramPtr gramH;
    GramPtr gramV;
    std::optional<RealVector> A0_diag;

    Index dim() const { return A_ref.rows(); }
};

using ReferencePtr = std::shared_ptr<const ReferenceProblem>;

inline void validate_reference(const ReferenceProblem& ref) {
    if (ref.A_ref.rows() != ref.A_ref.cols())
        throw std::invalid_argument("reference problem: operator must be square");
    require_finite(ref.A_ref, "reference operator");
    if (!ref.gramH || !ref.gramV)
        throw std::invalid_argument("reference problem: both inner products must be set");
    if (ref.gramH->dim() != ref.dim() || ref.gramV->dim() != ref.dim())
        throw std::invalid_argument("reference problem: Gram dimension mismatch");
    if (ref.A0_diag) {
        if (ref.A0_diag->size() != ref.dim())
            throw std::invalid_argument("reference problem: principal-part diagonal has wrong size");
        if (ref.A0_diag->minCoeff() <= 0.0)
            throw std::invalid_argument("reference problem: principal-part eigenvalues must be positive");
    }
}

// Trial/test frames and the projected pencil (A_h, B_h) with
// A_h = Psi^H G_H A Phi and B_h = Psi^H G_H Phi. Frames are stored exactly as
// given; they need full column rank but no normalization.
struct GalerkinSetup {
    ReferencePtr reference;
    Matrix Phi;   // trial frame, columns span S_1h
    Matrix Psi;   // test frame, columns span S_2h
    Matrix A_h;
    Matrix B_h;

    Index ambient() const { return Phi.rows(); }
    Index trial_dim() const { return Phi.cols(); }
};

namespace detail {

// Psi^H G_H, the row map that pairs a vector against the test space.
inline Matrix test_pairing(const GalerkinSetup& s) {
    if (s.reference->gramH->is_identity()) return s.Psi.adjoint();
    return s.Psi.adjoint() * s.reference->gramH->matrix();
}

}  // namespace detail

inline GalerkinSetup assemble(ReferencePtr reference, Matrix Phi, Matrix Psi) {
    if (!reference) throw std::invalid_argument("assemble: missing reference problem");
    validate_reference(*reference);
    const Index n = reference->dim();
    if (Phi.rows() != n || Psi.rows() != n)
        throw std::invalid_argument("assemble: frame rows must match the reference dimension");
    if (Phi.cols() != Psi.cols())
        throw std::invalid_argument("assemble: trial and test spaces must have equal dimension");
    if (Phi.cols() < 1 || Phi.cols() >= n)
        throw std::invalid_argument("assemble: need 1 <= dim < ambient dimension");
    require_finite(Phi, "trial frame");
    require_finite(Psi, "test frame");
    if (numerical_rank(Phi) != Phi.cols())
        throw std::invalid_argument("assemble: trial frame is rank deficient");
    if (numerical_rank(Psi) != Psi.cols())
        throw std::invalid_argument("assemble: test frame is rank deficient");

    GalerkinSetup s;
    s.reference = std::move(reference);
    s.Phi = std::move(Phi);
    s.Psi = std::move(Psi);
    const Matrix pairing = detail::test_pairing(s);
    s.A_h = pairing * (s.reference->A_ref * s.Phi);
    s.B_h = pairing * s.Phi;
    return s;
}

// Discrete eigenpairs of the pencil A_h y = lambda B_h y. coords holds the y
// columns (unit Euclidean norm); vectors holds the ambient lifts Phi y.
struct PencilSolution {
    Vector values;
    Matrix coords;
    Matrix vectors;
};

inline PencilSolution solve_pencil(const GalerkinSetup& s) {
    EigResult ge;
    try {
        ge = eig_generalized(s.A_h, s.B_h);
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(std::string("solve_pencil: inf-sup failure, B_h numerically singular (") +
                                    e.what() + ")");
    }
    PencilSolution out;
    out.values = std::move(ge.values);
    out.coords = std::move(ge.right);
    out.vectors = s.Phi * out.coords;
    return out;
}

// Eigenpairs of the shifted pencil (A_h, B_h + tau A_h). Eigenvectors agree
// with the unshifted pencil; eigenvalues move by 1/value = 1/lambda + tau.
inline PencilSolution shifted_pencil(const GalerkinSetup& s, Complex tau) {
    EigResult ge;
    try {
        ge = eig_generalized(s.A_h, s.B_h + tau * s.A_h);
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(std::string("shifted_pencil: shifted mass matrix numerically singular (") +
                                    e.what() + ")");
    }
    PencilSolution out;
    out.values = std::move(ge.values);
    out.coords = std::move(ge.right);
    out.vectors = s.Phi * out.coords;
    return out;
}

struct InfSupConstants {
    double beta = 0.0;       // a-form constant over G_V-orthonormalized frames
    double betaRing = 0.0;   // base-form constant over G_H-orthonormalized frames
};

namespace detail {

inline double smallest_singular_value(const Matrix& M) {
    if (M.size() == 0) return 0.0;
    const RealVector sigma = singular_values(M);
    return sigma(sigma.size() - 1);
}

}  // namespace detail

inline InfSupConstants infsup_constants(const GalerkinSetup& s) {
    const ReferenceProblem& ref = *s.reference;
    InfSupConstants out;

    const Subspace trialH = orthonormalize(s.Phi, ref.gramH);
    const Subspace testH = orthonormalize(s.Psi, ref.gramH);
    const Matrix crossH =
        ref.gramH->to_euclidean(testH.frame).adjoint() * ref.gramH->to_euclidean(trialH.frame);
    out.betaRing = detail::smallest_singular_value(crossH);

    const Subspace trialV = orthonormalize(s.Phi, ref.gramV);
    const Subspace testV = orthonormalize(s.Psi, ref.gramV);
    Matrix aform;
    if (ref.gramH->is_identity())
        aform = testV.frame.adjoint() * (ref.A_ref * trialV.frame);
    else
        aform = testV.frame.adjoint() * (ref.gramH->matrix() * (ref.A_ref * trialV.frame));
    out.beta = detail::smallest_singular_value(aform);
    return out;
}

namespace detail {

inline void check_projector(const Matrix& Q, const Matrix& pairing, const char* who) {
    const double qn = spectral_norm_estimate(Q);
    const double idem = spectral_norm_estimate(Q * Q - Q);
    if (!(idem <= 1e-10 * std::max(1.0, qn)))
        throw std::runtime_error(std::string(who) + ": projector not idempotent, defect " +
                                 std::to_string(idem));
    // Defining orthogonality: the test pairing annihilates I - Q.
    const Matrix r = pairing - pairing * Q;
    const double rn = spectral_norm_estimate(r);
    const double scale = std::max(1.0, spectral_norm_estimate(pairing) * std::max(1.0, qn));
    if (!(rn <= 1e-10 * scale))
        throw std::runtime_error(std::string(who) + ": defining orthogonality residual " +
                                 std::to_string(rn));
}

}  // namespace detail

// Oblique projector onto the trial space along the G_H-orthogonal complement
// of the test space: Q_h = Phi B_h^-1 Psi^H G_H.
inline Matrix build_Qh(const GalerkinSetup& s) {
    const Matrix pairing = detail::test_pairing(s);
    Matrix X;
    try {
        X = solve_linear(s.B_h, pairing);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string("build_Qh: inf-sup failure, B_h ill conditioned (") +
                                 e.what() + ")");
    }
    Matrix Q = s.Phi * X;
    detail::check_projector(Q, pairing, "build_Qh");
    return Q;
}

// Oblique projector onto the trial space determined by the a-form:
// P_h = Phi A_h^-1 Psi^H G_H A_ref, so that a(u - P_h u, psi) = 0 for all
// test functions psi.
inline Matrix build_Ph(const GalerkinSetup& s) {
    const Matrix pairing = detail::test_pairing(s) * s.reference->A_ref;
    Matrix X;
    try {
        X = solve_linear(s.A_h, pairing);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string("build_Ph: projected form matrix A_h ill conditioned (") +
                                 e.what() + ")");
    }
    Matrix P = s.Phi * X;
    detail::check_projector(P, pairing, "build_Ph");
    return P;
}

// Isolated eigenvalue cluster of the reference operator: the invariant
// subspace U (G_H-orthonormal frame), its left counterpart, the cluster
// center, and an isolating contour containing the cluster and no other
// spectrum.
struct TargetEigenpair {
    Complex lambda;
    Subspace U;
    Subspace Ustar;
    Index m = 0;
    Contour contour{Complex(0.0, 0.0), 1.0};
};

inline void validate_target(const ReferenceProblem& ref, const TargetEigenpair& t,
                            double operator_norm_hint = -1.0) {
    if (t.m < 1 || t.U.dim() != t.m || t.Ustar.dim() != t.m)
        throw std::invalid_argument("target: cluster dimension mismatch");
    if (t.U.ambient() != ref.dim() || t.Ustar.ambient() != ref.dim())
        throw std::invalid_argument("target: ambient dimension mismatch");
    if (!same_geometry(*t.U.gram, *ref.gramH) || !same_geometry(*t.Ustar.gram, *ref.gramH))
        throw std::invalid_argument("target: frames must be orthonormal in the reference base geometry");
    if (!(std::abs(t.lambda - t.contour.center) < t.contour.radius))
        throw std::invalid_argument("target: cluster center lies outside its contour");

    const double anorm =
        operator_norm_hint >= 0.0 ? operator_norm_hint : spectral_norm_estimate(ref.A_ref);
    const Matrix AU = ref.A_ref * t.U.frame;
    const Matrix coeff = ref.gramH->to_euclidean(t.U.frame).adjoint() * ref.gramH->to_euclidean(AU);
    const double resid = ref.gramH->to_euclidean(AU - t.U.frame * coeff).norm();
    if (!(resid <= 1e-9 * std::max(1.0, anorm)))
        throw std::invalid_argument("target: invariance residual " + std::to_string(resid) +
                                    " too large for the right subspace");
    const Matrix AHUs = ref.gramH->adjoint_apply(ref.A_ref, t.Ustar.frame);
    const Matrix coeffL =
        ref.gramH->to_euclidean(t.Ustar.frame).adjoint() * ref.gramH->to_euclidean(AHUs);
    const double residL = ref.gramH->to_euclidean(AHUs - t.Ustar.frame * coeffL).norm();
    if (!(residL <= 1e-9 * std::max(1.0, anorm)))
        throw std::invalid_argument("target: invariance residual " + std::to_string(residL) +
                                    " too large for the left subspace");
}

// Ratios sup ||N u|| / ||D u|| over the cluster, realized as an m x m
// generalized Hermitian eigenproblem of the two quadratic forms. Directions
// on which the denominator form vanishes (relative threshold 1e-12) are
// deflated; if everything deflates the trial space captures the cluster
// exactly and the ratio is undefined.
struct EpsFunctionals {
    std::optional<double> epsH;
    std::optional<double> epsRingH;
    std::optional<double> epsV;
    bool exact_capture = false;
    Index deflated = 0;
};

namespace detail {

struct FormRatio {
    std::optional<double> value;
    Index deflated = 0;
};

// scale is the squared G-norm of the largest parametrization direction; a
// denominator eigenvalue below (1e-12)^2 of it means the corresponding
// direction is captured to working precision.
inline FormRatio form_ratio(const Matrix& num_cols, const Matrix& den_cols, const Gram& gram,
                            double scale) {
    const Matrix Ne = gram.to_euclidean(num_cols);
    const Matrix De = gram.to_euclidean(den_cols);
    const Matrix Nq = Ne.adjoint() * Ne;
    const Matrix Dq = De.adjoint() * De;
    Eigen::SelfAdjointEigenSolver<Matrix> es(Dq);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("form_ratio: denominator form eigendecomposition failed");
    const RealVector d = es.eigenvalues();
    const double dmax = d.size() > 0 ? d(d.size() - 1) : 0.0;
    const double thr = 1e-24 * std::max(scale, dmax);
    std::vector<Index> keep;
    for (Index i = 0; i < d.size(); ++i)
        if (d(i) > thr && d(i) > 0.0) keep.push_back(i);
    FormRatio out;
    out.deflated = d.size() - static_cast<Index>(keep.size());
    if (keep.empty()) return out;
    Matrix W(d.size(), static_cast<Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j)
        W.col(static_cast<Index>(j)) = es.eigenvectors().col(keep[j]) / std::sqrt(d(keep[j]));
    const Matrix R = W.adjoint() * Nq * W;
    Eigen::SelfAdjointEigenSolver<Matrix> er(R);
    if (er.info() != Eigen::Success)
        throw std::runtime_error("form_ratio: reduced form eigendecomposition failed");
    const double top = er.eigenvalues().size() > 0 ? er.eigenvalues().maxCoeff() : 0.0;
    out.value = std::sqrt(std::max(0.0, top));
    return out;
}

// Residual of the G-orthogonal projection of the columns of X onto the
// subspace spanned by sub (frame assumed G-orthonormal).
inline Matrix orth_residual(const Subspace& sub, const Matrix& X, const Gram& gram) {
    const Matrix coeff = gram.to_euclidean(sub.frame).adjoint() * gram.to_euclidean(X);
    return X - sub.frame * coeff;
}

inline EpsFunctionals functionals_impl(const GalerkinSetup& s, const TargetEigenpair& t,
                                       const Matrix& Qh, const Matrix& Ph) {
    const ReferenceProblem& ref = *s.reference;
    const Matrix& Uf = t.U.frame;

    const Subspace S1H = orthonormalize(s.Phi, ref.gramH);
    const Matrix denH = orth_residual(S1H, Uf, *ref.gramH);
    const double scaleH = std::pow(spectral_norm(ref.gramH->to_euclidean(Uf)), 2);

    EpsFunctionals out;
    const Matrix numH = Qh * (ref.A_ref * (Uf - Qh * Uf));
    const FormRatio rH = form_ratio(numH, denH, *ref.gramH, scaleH);
    out.epsH = rH.value;
    out.deflated = rH.deflated;
    out.exact_capture = !rH.value.has_value();

    const Matrix numRing = Ph * Uf - Qh * Uf;
    out.epsRingH = form_ratio(numRing, denH, *ref.gramH, scaleH).value;

    const Subspace S1V = orthonormalize(s.Phi, ref.gramV);
    const Matrix denV = orth_residual(S1V, Uf, *ref.gramV);
    const double scaleV = std::pow(spectral_norm(ref.gramV->to_euclidean(Uf)), 2);
    const Matrix residual = Uf - Ph * Uf;
    const Matrix numV = Ph * solve_linear(ref.A_ref, residual);
    out.epsV = form_ratio(numV, denV, *ref.gramV, scaleV).value;
    return out;
}

}  // namespace detail

inline EpsFunctionals superconvergence_functionals(const GalerkinSetup& s,
                                                   const TargetEigenpair& t) {
    validate_target(*s.reference, t);
    const Matrix Qh = build_Qh(s);
    const Matrix Ph = build_Ph(s);
    return detail::functionals_impl(s, t, Qh, Ph);
}

// One row of a convergence study: gaps, projector defects, functionals, and
// the ingredients of the necessary-condition sandwiches, in both geometries.
struct StudyRecord {
    double h = 0.0;
    Index N = 0;
    double beta = 0.0;
    double betaRing = 0.0;
    double gapUS_H = 0.0;
    double gapUUh_H = 0.0;
    double projDefect_H = 0.0;
    std::optional<double> epsH;
    std::optional<double> epsRingH;
    double gapUS_V = 0.0;
    double gapUUh_V = 0.0;
    double projDefect_V = 0.0;
    std::optional<double> epsV;
    double eigErr = 0.0;
    Index clusterSize = 0;
    std::vector<std::string> flags;

    // Sandwich / correction ingredients for the necessary-condition checks.
    double necMiddle_H = 0.0;  // max over G_H-unit u in U of ||Q_h A (I - Q_h) u||_H
    double uhNorm_H = 0.0;     // max over G_H-unit u in U of ||E_h u||_H
    double leftGap_H = 0.0;    // delta_H(U*, S_2h)
    double normPh_V = 0.0;     // ||P_h||_V
    double aformBound_V = 0.0; // continuity constant of the a-form in the V geometry
};

namespace detail {

// Largest G-norm of M u over G-unit u in the subspace carried by frame
// (assumed G-orthonormal).
inline double restricted_norm(const Matrix& M, const Matrix& frame, const Gram& gram) {
    return spectral_norm(gram.to_euclidean(M * frame));
}

// Spectral projector of the coordinate matrix via its eigenbasis, used when
// no isolating contour exists around the requested cluster.
inline Matrix eigen_projector(const PencilSolution& sol, const std::vector<Index>& sel) {
    const Index N = sol.coords.rows();
    Matrix inv = Matrix::Identity(N, N);
    inv = Eigen::PartialPivLU<Matrix>(sol.coords).solve(inv);
    Matrix E = Matrix::Zero(N, N);
    for (Index idx : sel) E += sol.coords.col(idx) * inv.row(idx);
    return E;
}

}  // namespace detail

// Full per-mesh diagnostics for one target cluster. The discrete cluster is
// the set of pencil eigenvalues inside the target contour; when its size
// differs from m the record is flagged and the m eigenvalues nearest the
// cluster center are used instead (with an adapted contour when one exists).
inline StudyRecord cluster_and_diagnose(const GalerkinSetup& s, const TargetEigenpair& t,
                                        double h_label = 0.0) {
    const ReferenceProblem& ref = *s.reference;
    const double anorm = spectral_norm_estimate(ref.A_ref);
    validate_target(ref, t, anorm);

    StudyRecord rec;
    rec.h = h_label;
    rec.N = s.trial_dim();

    const InfSupConstants is = infsup_constants(s);
    rec.beta = is.beta;
    rec.betaRing = is.betaRing;

    const PencilSolution sol = solve_pencil(s);
    std::vector<Index> inside;
    for (Index i = 0; i < sol.values.size(); ++i)
        if (std::abs(sol.values(i) - t.contour.center) < t.contour.radius) inside.push_back(i);
    rec.clusterSize = static_cast<Index>(inside.size());

    // Select the discrete cluster and decide how to realize its spectral
    // projector in pencil coordinates.
    std::vector<Index> sel;
    enum class Route { contour, adapted, eigenbasis } route = Route::contour;
    Contour projector_contour = t.contour;
    if (rec.clusterSize == t.m) {
        sel = inside;
    } else {
        rec.flags.push_back("clusterCount=" + std::to_string(rec.clusterSize));
        std::vector<Index> order(static_cast<std::size_t>(sol.values.size()));
        for (Index i = 0; i < sol.values.size(); ++i) order[static_cast<std::size_t>(i)] = i;
        std::sort(order.begin(), order.end(), [&](Index a, Index b) {
            return std::abs(sol.values(a) - t.lambda) < std::abs(sol.values(b) - t.lambda);
        });
        sel.assign(order.begin(), order.begin() + t.m);
        std::vector<Complex> excluded;
        for (std::size_t i = t.m; i < order.size(); ++i)
            excluded.push_back(sol.values(order[i]));
        route = Route::eigenbasis;
        try {
            const Contour adapted = place_contour(t.lambda, excluded, t.contour.nodes);
            bool covers = true;
            for (Index idx : sel)
                if (!(std::abs(sol.values(idx) - adapted.center) < adapted.radius)) covers = false;
            if (covers) {
                projector_contour = adapted;
                route = Route::adapted;
                rec.flags.push_back("adaptedContour");
            }
        } catch (const std::exception&) {
            // fall through to the eigenbasis route
        }
        if (route == Route::eigenbasis) rec.flags.push_back("eigenbasisProjector");
    }

    std::sort(sel.begin(), sel.end());
    Matrix cluster_vectors(s.ambient(), t.m);
    rec.eigErr = 0.0;
    for (Index j = 0; j < t.m; ++j) {
        cluster_vectors.col(j) = sol.vectors.col(sel[static_cast<std::size_t>(j)]);
        rec.eigErr = std::max(rec.eigErr,
                              std::abs(sol.values(sel[static_cast<std::size_t>(j)]) - t.lambda));
    }

    // Coordinate spectral projector for the discrete cluster, lifted to the
    // ambient space through the two pencil inverses.
    Matrix E_C;
    if (route == Route::eigenbasis) {
        E_C = detail::eigen_projector(sol, sel);
    } else {
        const Matrix C = solve_linear(s.B_h, s.A_h);
        E_C = dunford_projector(C, projector_contour, *Gram::identity(s.trial_dim()));
    }

    const Matrix pairing = detail::test_pairing(s);
    const Matrix Qh = build_Qh(s);
    const Matrix Ph = build_Ph(s);
    const Matrix XB = solve_linear(s.B_h, pairing);
    const Matrix XA = solve_linear(s.A_h, pairing * ref.A_ref);
    const Matrix Eh = s.Phi * (E_C * XB);
    const Matrix EhV = s.Phi * (E_C * XA);

    const Subspace S1H = orthonormalize(s.Phi, ref.gramH);
    const Subspace S2H = orthonormalize(s.Psi, ref.gramH);
    const Subspace S1V = orthonormalize(s.Phi, ref.gramV);
    const Subspace UhH = orthonormalize(cluster_vectors, ref.gramH);
    const Subspace UhV = orthonormalize(cluster_vectors, ref.gramV);
    const Subspace UV = orthonormalize(t.U.frame, ref.gramV);

    rec.gapUS_H = containment_gap(t.U, S1H);
    rec.gapUUh_H = containment_gap(t.U, UhH);
    rec.gapUS_V = containment_gap(UV, S1V);
    rec.gapUUh_V = containment_gap(UV, UhV);
    rec.leftGap_H = containment_gap(t.Ustar, S2H);

    rec.projDefect_H = detail::restricted_norm(Eh - Qh, t.U.frame, *ref.gramH);
    rec.projDefect_V = detail::restricted_norm(EhV - Ph, UV.frame, *ref.gramV);
    rec.necMiddle_H =
        detail::restricted_norm(Qh * ref.A_ref * (Matrix::Identity(s.ambient(), s.ambient()) - Qh),
                                t.U.frame, *ref.gramH);
    rec.uhNorm_H = detail::restricted_norm(Eh, t.U.frame, *ref.gramH);

    const EpsFunctionals eps = detail::functionals_impl(s, t, Qh, Ph);
    rec.epsH = eps.epsH;
    rec.epsRingH = eps.epsRingH;
    rec.epsV = eps.epsV;
    if (eps.exact_capture) rec.flags.push_back("exactCapture");

    rec.normPh_V = ref.gramV->is_identity()
                       ? spectral_norm_estimate(Ph)
                       : spectral_norm_estimate(ref.gramV->weighted_operator(Ph));
    Matrix form = ref.gramH->is_identity() ? ref.A_ref : Matrix(ref.gramH->matrix() * ref.A_ref);
    rec.aformBound_V = spectral_norm_estimate(ref.gramV->congruence(form));

    // The discrete cluster spans a subspace of the trial space, so
    // approximating from it can only be worse than from the trial space.
    if (!(rec.gapUS_H <= rec.gapUUh_H + 1e-12))
        throw std::runtime_error("cluster_and_diagnose: gap ordering violated in the base geometry");
    if (!(rec.gapUS_V <= rec.gapUUh_V + 1e-12))
        throw std::runtime_error("cluster_and_diagnose: gap ordering violated in the form geometry");
    return rec;
}

}  // namespace eiglab
