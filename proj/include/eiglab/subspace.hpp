#pragma once

// Subspaces under a declared inner product: canonical angles, containment
// gap, oblique projectors, and the constructive nearest-frame bound.

#include <eiglab/dense.hpp>

#include <cmath>
#include <memory>
#include <string>
#include <utility>

namespace eiglab {

// Hermitian positive definite inner-product matrix with its Cholesky factor
// cached. All norms and angles downstream are measured through one of these.
class Gram {
public:
    static std::shared_ptr<const Gram> identity(Index n, std::string label = "Euclidean") {
        return std::shared_ptr<const Gram>(new Gram(n, std::move(label)));
    }

    static std::shared_ptr<const Gram> make(Matrix G, std::string label) {
        return std::make_shared<const Gram>(std::move(G), std::move(label));
    }

    Gram(Matrix G, std::string label) : G_(std::move(G)), label_(std::move(label)) {
        require_finite(G_, "Gram");
        if (G_.rows() != G_.cols())
            throw std::invalid_argument("Gram: matrix must be square");
        const double scale = G_.cwiseAbs().maxCoeff();
        if (!((G_ - G_.adjoint()).cwiseAbs().maxCoeff() <= 1e-13 * std::max(1.0, scale)))
            throw std::invalid_argument("Gram: matrix not Hermitian");
        Eigen::LLT<Matrix> llt(G_);
        if (llt.info() != Eigen::Success)
            throw std::invalid_argument("Gram: matrix not positive definite");
        L_ = llt.matrixL();
    }

    Index dim() const { return G_.rows(); }
    bool is_identity() const { return identity_; }
    const std::string& label() const { return label_; }
    const Matrix& matrix() const { return G_; }

    // L^H X: maps G-geometry into Euclidean coordinates.
    Matrix to_euclidean(const Matrix& X) const {
        if (identity_) return X;
        return L_.adjoint() * X;
    }

    // L^-H Y: inverse of the map above.
    Matrix from_euclidean(const Matrix& Y) const {
        if (identity_) return Y;
        return L_.adjoint().template triangularView<Eigen::Upper>().solve(Y);
    }

    double norm(const Vector& x) const {
        if (identity_) return x.norm();
        return (L_.adjoint() * x).norm();
    }

    Complex inner(const Vector& x, const Vector& y) const {
        if (identity_) return x.dot(y);
        return x.dot(G_ * y);
    }

    // L^H M L^-H: the Euclidean representative of M acting on the G-geometry.
    // Its singular values are the G-weighted singular values of M.
    Matrix weighted_operator(const Matrix& M) const {
        if (identity_) return M;
        const Matrix MLinvH =
            L_.template triangularView<Eigen::Lower>().solve(M.adjoint()).adjoint();
        return L_.adjoint() * MLinvH;
    }

    // G-operator norm of M as a map of the G-geometry into itself.
    double op_norm(const Matrix& M) const {
        if (identity_) return spectral_norm(M);
        return spectral_norm(weighted_operator(M));
    }

    // L^-1 M L^-H: a sesquilinear form M expressed in G-orthonormal
    // coordinates. Its largest singular value bounds |x^H M y| over pairs of
    // G-unit vectors.
    Matrix congruence(const Matrix& M) const {
        if (identity_) return M;
        const Matrix LinvM = L_.template triangularView<Eigen::Lower>().solve(M);
        return L_.template triangularView<Eigen::Lower>().solve(LinvM.adjoint()).adjoint();
    }

    // Columns of (G^-1 M^H G) X: the G-adjoint of the operator M applied to X.
    Matrix adjoint_apply(const Matrix& M, const Matrix& X) const {
        if (identity_) return M.adjoint() * X;
        const Matrix rhs = M.adjoint() * (G_ * X);
        const Matrix half = L_.template triangularView<Eigen::Lower>().solve(rhs);
        return L_.adjoint().template triangularView<Eigen::Upper>().solve(half);
    }

private:
    Gram(Index n, std::string label)
        : G_(Matrix::Identity(n, n)),
          L_(Matrix::Identity(n, n)),
          label_(std::move(label)),
          identity_(true) {}

    Matrix G_;
    Matrix L_;  // lower Cholesky factor, G = L L^H
    std::string label_;
    bool identity_ = false;
};

using GramPtr = std::shared_ptr<const Gram>;

inline bool same_geometry(const Gram& a, const Gram& b) {
    if (&a == &b) return true;
    if (a.dim() != b.dim() || a.label() != b.label()) return false;
    const double scale = std::max(1.0, a.matrix().cwiseAbs().maxCoeff());
    return (a.matrix() - b.matrix()).cwiseAbs().maxCoeff() <= 1e-14 * scale;
}

// A column frame orthonormal with respect to its Gram.
struct Subspace {
    Matrix frame;
    GramPtr gram;

    Index dim() const { return frame.cols(); }
    Index ambient() const { return frame.rows(); }
};

// G-orthonormal basis of span(raw). Rank deficiency under G is rejected.
inline Subspace orthonormalize(const Matrix& raw, GramPtr gram) {
    require_finite(raw, "orthonormalize");
    if (!gram || gram->dim() != raw.rows())
        throw std::invalid_argument("orthonormalize: Gram dimension mismatch");
    if (raw.cols() == 0) return Subspace{Matrix(raw.rows(), 0), std::move(gram)};
    const Matrix C = gram->to_euclidean(raw);
    const SvdResult s = svd(C);
    const Index k = raw.cols();
    if (!(s.sigma(k - 1) > 1e-12 * s.sigma(0))) {
        Index r = 0;
        while (r < k && s.sigma(r) > 1e-12 * s.sigma(0)) ++r;
        throw std::invalid_argument("orthonormalize: frame rank deficient (numerical rank " +
                                    std::to_string(r) + " of " + std::to_string(k) + ")");
    }
    return Subspace{gram->from_euclidean(s.U.leftCols(k)), std::move(gram)};
}

// Containment gap delta(M, N) = sin of the largest canonical angle from M
// into N; exactly 1 when N is too small to contain M. Computed from the
// principal-angle cosines for wide angles; for angles below 45 degrees the
// sine is taken directly from the projected residual, which stays accurate
// where 1 - cos^2 cancels.
inline double containment_gap(const Subspace& M, const Subspace& N) {
    if (!same_geometry(*M.gram, *N.gram))
        throw std::invalid_argument("containment_gap: subspaces use different inner products");
    if (M.dim() == 0) return 0.0;
    if (N.dim() < M.dim()) return 1.0;
    const Matrix Mw = M.gram->to_euclidean(M.frame);
    const Matrix Nw = N.gram->to_euclidean(N.frame);
    const RealVector cosines = singular_values(Mw.adjoint() * Nw);
    const double c = std::clamp(cosines(M.dim() - 1), 0.0, 1.0);
    if (c * c <= 0.5) return std::sqrt(std::max(0.0, 1.0 - c * c));
    const double s = spectral_norm(Mw - Nw * (Nw.adjoint() * Mw));
    return std::clamp(s, 0.0, 1.0);
}

// Projector with Ran(Q) = range and test-space orthogonality <t, v - Qv> = 0.
inline Matrix oblique_projector(const Subspace& range, const Subspace& test) {
    if (!same_geometry(*range.gram, *test.gram))
        throw std::invalid_argument("oblique_projector: mixed inner products");
    if (range.dim() != test.dim())
        throw std::invalid_argument("oblique_projector: range and test dimensions differ");
    const Matrix cross = test.gram->to_euclidean(test.frame).adjoint() *
                         range.gram->to_euclidean(range.frame);
    const RealVector sv = singular_values(cross);
    const double tol = rank_tolerance(sv, cross.rows(), cross.cols());
    if (sv.size() == 0 || !(sv(sv.size() - 1) > tol))
        throw std::invalid_argument(
            "oblique_projector: test/range pairing singular, smallest singular value " +
            std::to_string(sv.size() ? sv(sv.size() - 1) : 0.0));
    const Matrix testG = test.gram->is_identity()
                             ? Matrix(test.frame.adjoint())
                             : Matrix(test.frame.adjoint() * test.gram->matrix());
    const Matrix Q = range.frame * Eigen::PartialPivLU<Matrix>(cross).solve(testG);
    const double qn = spectral_norm(Q);
    if (!(spectral_norm(Q * Q - Q) <= 1e-11 * std::max(1.0, qn)))
        throw std::runtime_error("oblique_projector: result failed idempotency check");
    return Q;
}

// G-operator norms of an idempotent and its complement. For nontrivial
// projectors the two agree; callers assert that, this just measures.
inline std::pair<double, double> projector_norms(const Matrix& Z, const Gram& gram) {
    require_finite(Z, "projector_norms");
    if (Z.rows() != Z.cols() || Z.rows() != gram.dim())
        throw std::invalid_argument("projector_norms: shape mismatch");
    const double zn = spectral_norm(Z);
    if (!(spectral_norm(Z * Z - Z) <= 1e-10 * zn || zn == 0.0))
        throw std::invalid_argument("projector_norms: input is not idempotent");
    const Matrix I = Matrix::Identity(Z.rows(), Z.cols());
    return {gram.op_norm(Z), gram.op_norm(I - Z)};
}

// Orthonormal frame inside T at spectral distance <= sqrt(2) * gap(S, T)
// from S.frame. Principal pairs (the CS decomposition of the cross-Gram)
// realize the bound constructively; cosines above 1 - 1e-10 are the
// numerically detected intersection and come out as (nearly) shared columns.
inline Matrix nearest_frame(const Subspace& S, const Subspace& T) {
    if (!S.gram->is_identity() || !T.gram->is_identity())
        throw std::invalid_argument("nearest_frame: Euclidean inner product required");
    if (T.dim() < S.dim())
        throw std::invalid_argument("nearest_frame: target space too small to hold a frame of this size");
    if (S.dim() == 0) return Matrix(S.ambient(), 0);
    const SvdResult cs = svd(Matrix(S.frame.adjoint() * T.frame));
    // Columns of T.frame * V pair with columns of S.frame * U angle by angle;
    // rotating back by U^H aligns the output with S.frame column-wise. Any
    // shared directions (cosine at the 1 - 1e-10 intersection threshold)
    // come out as exact copies of the corresponding S columns, so the split
    // into intersection and strictly tilted parts needs no separate branch.
    const Matrix principal = T.frame * cs.V.leftCols(S.dim());
    return principal * cs.U.adjoint();
}

}  // namespace eiglab
