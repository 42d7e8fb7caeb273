#pragma once

// Dense complex kernels shared by every other header: SVD, eigensolvers,
// linear solves, numerical rank. All contracts are residual-based, so the
// Eigen backends stay swappable.

#include <Eigen/Dense>
#include <algorithm>
#include <complex>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace eiglab {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using Index = Eigen::Index;

inline bool all_finite(const Matrix& M) { return M.allFinite(); }

inline void require_finite(const Matrix& M, const char* who) {
    if (!M.allFinite())
        throw std::invalid_argument(std::string(who) + ": input has non-finite entries");
}

struct SvdResult {
    Matrix U;          // thin left frame
    RealVector sigma;  // descending, nonnegative
    Matrix V;          // thin right frame; M = U * sigma.asDiagonal() * V^H
};

inline SvdResult svd(const Matrix& M) {
    require_finite(M, "svd");
    SvdResult out;
    if (std::min(M.rows(), M.cols()) <= 16) {
        Eigen::JacobiSVD<Matrix> solver(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
        out.U = solver.matrixU();
        out.sigma = solver.singularValues();
        out.V = solver.matrixV();
    } else {
        Eigen::BDCSVD<Matrix> solver(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
        out.U = solver.matrixU();
        out.sigma = solver.singularValues();
        out.V = solver.matrixV();
    }
    return out;
}

inline RealVector singular_values(const Matrix& M) {
    require_finite(M, "singular_values");
    if (std::min(M.rows(), M.cols()) <= 16)
        return Eigen::JacobiSVD<Matrix>(M).singularValues();
    return Eigen::BDCSVD<Matrix>(M).singularValues();
}

// Largest singular value.
inline double spectral_norm(const Matrix& M) {
    if (M.size() == 0) return 0.0;
    return singular_values(M)(0);
}

// Power iteration on M^H M. Used for tolerance scales and residual guards on
// matrices too large for a full SVD; falls back to the exact value when small.
// Deterministic start vector so repeated runs agree to the bit.
inline double spectral_norm_estimate(const Matrix& M, int iters = 80) {
    if (M.size() == 0) return 0.0;
    if (std::min(M.rows(), M.cols()) <= 256) return spectral_norm(M);
    Vector v = Vector::Ones(M.cols());
    for (Index i = 0; i < v.size(); ++i)
        v(i) += Complex(0.0, 1e-3 * static_cast<double>(i % 97) / 97.0);
    v /= v.norm();
    double s = 0.0;
    double prev = -1.0;
    for (int it = 0; it < iters; ++it) {
        const Vector w = M * v;
        s = w.norm();
        if (s == 0.0) return 0.0;
        v.noalias() = M.adjoint() * w;
        const double t = v.norm();
        if (t == 0.0) return s;
        v /= t;
        if (it > 4 && std::abs(s - prev) <= 1e-13 * std::max(1.0, s)) break;
        prev = s;
    }
    return s;
}

// Standard numerical-rank tolerance: 1e-12 * sigma_max * max(rows, cols).
inline double rank_tolerance(const RealVector& sigma, Index rows, Index cols) {
    if (sigma.size() == 0) return 0.0;
    return 1e-12 * sigma(0) * static_cast<double>(std::max(rows, cols));
}

inline Index numerical_rank(const RealVector& sigma, Index rows, Index cols) {
    const double tol = rank_tolerance(sigma, rows, cols);
    Index r = 0;
    while (r < sigma.size() && sigma(r) > tol) ++r;
    return r;
}

inline Index numerical_rank(const Matrix& M) {
    return numerical_rank(singular_values(M), M.rows(), M.cols());
}

struct EigResult {
    Vector values;
    Matrix right;                 // unit-norm columns
    std::optional<Matrix> left;   // rows of right^-1, conjugated into columns
};

namespace detail {

inline void check_eig_residual(const Matrix& M, const EigResult& r, double scale,
                               const char* who) {
    const double tol = 1e-10 * std::max(1.0, scale);
    for (Index i = 0; i < r.values.size(); ++i) {
        const double res = (M * r.right.col(i) - r.values(i) * r.right.col(i)).norm();
        if (!(res <= tol))
            throw std::runtime_error(std::string(who) + ": eigenpair residual " +
                                     std::to_string(res) + " exceeds tolerance");
    }
}

}  // namespace detail

// Dense eigensolver. Left vectors, when requested, come from the inverse of
// the right-vector matrix and are only available for numerically
// diagonalizable input.
inline EigResult eig_dense(const Matrix& M, bool with_left = false) {
    require_finite(M, "eig_dense");
    if (M.rows() != M.cols())
        throw std::invalid_argument("eig_dense: matrix must be square");
    Eigen::ComplexEigenSolver<Matrix> solver(M, true);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("eig_dense: eigensolver did not converge");
    EigResult out;
    out.values = solver.eigenvalues();
    out.right = solver.eigenvectors();
    for (Index i = 0; i < out.right.cols(); ++i) {
        const double nrm = out.right.col(i).norm();
        if (nrm > 0) out.right.col(i) /= nrm;
    }
    detail::check_eig_residual(M, out, spectral_norm(M), "eig_dense");
    if (with_left) {
        const RealVector sv = singular_values(out.right);
        if (sv(sv.size() - 1) <= rank_tolerance(sv, M.rows(), M.cols()))
            throw std::runtime_error(
                "eig_dense: right eigenvector matrix numerically singular, "
                "left vectors unavailable (matrix may be defective)");
        // w_i^H = row i of V^-1, so w_i^H M = lambda_i w_i^H.
        out.left = out.right.inverse().adjoint();
    }
    return out;
}

// Pencil A y = lambda B y via the B^-1 A reduction (B must be decently
// conditioned, which the inf-sup preconditions upstream guarantee).
inline EigResult eig_generalized(const Matrix& A, const Matrix& B) {
    require_finite(A, "eig_generalized");
    require_finite(B, "eig_generalized");
    if (A.rows() != A.cols() || B.rows() != B.cols() || A.rows() != B.rows())
        throw std::invalid_argument("eig_generalized: need square matrices of equal size");
    const RealVector sb = singular_values(B);
    if (sb.size() == 0 || !(sb(sb.size() - 1) > 1e-13 * sb(0)))
        throw std::invalid_argument(
            "eig_generalized: B numerically singular (smallest singular value " +
            std::to_string(sb.size() ? sb(sb.size() - 1) : 0.0) + ")");
    Eigen::PartialPivLU<Matrix> lu(B);
    EigResult out = eig_dense(lu.solve(A));
    out.left.reset();
    const double scale = spectral_norm(A) + spectral_norm(B);
    const double tol = 1e-10 * std::max(1.0, scale);
    for (Index i = 0; i < out.values.size(); ++i) {
        const double res =
            (A * out.right.col(i) - out.values(i) * (B * out.right.col(i))).norm();
        if (!(res <= tol))
            throw std::runtime_error("eig_generalized: pencil residual " +
                                     std::to_string(res) + " exceeds tolerance");
    }
    return out;
}

// LU solve with a condition estimate; numerically singular systems are
// rejected rather than silently producing garbage.
inline Matrix solve_linear(const Matrix& A, const Matrix& RHS) {
    require_finite(A, "solve_linear");
    require_finite(RHS, "solve_linear");
    if (A.rows() != A.cols())
        throw std::invalid_argument("solve_linear: matrix must be square");
    if (A.rows() != RHS.rows())
        throw std::invalid_argument("solve_linear: dimension mismatch");
    Eigen::PartialPivLU<Matrix> lu(A);
    const double rcond = lu.rcond();
    if (!(rcond > 1e-14))
        throw std::runtime_error("solve_linear: matrix numerically singular, estimated condition " +
                                 std::to_string(rcond > 0 ? 1.0 / rcond : std::numeric_limits<double>::infinity()));
    return lu.solve(RHS);
}

}  // namespace eiglab
