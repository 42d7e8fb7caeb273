#pragma once

// Sylvester equation solvers (linearized, contour, semigroup), the sep
// functional in its Frobenius linearization, and two computable lower
// bounds: pseudospectral contour levels and numerical-range separation.

#include <eiglab/contour.hpp>
#include <eiglab/dense.hpp>
#include <eiglab/rng.hpp>
#include <eiglab/subspace.hpp>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace eiglab {

namespace detail {

// Kronecker linearization of S -> L1 S - S L2 acting on column-major vec(S).
inline Matrix sylvester_matrix(const Matrix& L1, const Matrix& L2) {
    const Index n1 = L1.rows();
    const Index n2 = L2.rows();
    Matrix K = Matrix::Zero(n1 * n2, n1 * n2);
    for (Index j = 0; j < n2; ++j)
        K.block(j * n1, j * n1, n1, n1) += L1;
    for (Index j = 0; j < n2; ++j)
        for (Index l = 0; l < n2; ++l)
            K.block(j * n1, l * n1, n1, n1).diagonal().array() -= L2(l, j);
    return K;
}

inline void require_square_pair(const Matrix& L1, const Matrix& L2, const char* who) {
    require_finite(L1, who);
    require_finite(L2, who);
    if (L1.rows() != L1.cols() || L2.rows() != L2.cols())
        throw std::invalid_argument(std::string(who) + ": square matrices required");
}

inline double spectra_distance(const Matrix& L1, const Matrix& L2) {
    const Vector a = eig_dense(L1).values;
    const Vector b = eig_dense(L2).values;
    double dist = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < a.size(); ++i)
        for (Index j = 0; j < b.size(); ++j) dist = std::min(dist, std::abs(a(i) - b(j)));
    return dist;
}

// The contour must swallow every eigenvalue of L2 and leave every
// eigenvalue of L1 outside; violations are reported with the offender.
inline void require_enclosure(const Matrix& L1, const Matrix& L2, const Contour& contour,
                              const char* who) {
    const Vector inner = eig_dense(L2).values;
    for (Index j = 0; j < inner.size(); ++j) {
        if (std::abs(inner(j) - contour.center) >= contour.radius)
            throw std::invalid_argument(std::string(who) + ": eigenvalue (" +
                                        std::to_string(inner(j).real()) + ", " +
                                        std::to_string(inner(j).imag()) +
                                        ") of the enclosed matrix lies outside the contour");
    }
    const Vector outer = eig_dense(L1).values;
    for (Index j = 0; j < outer.size(); ++j) {
        if (std::abs(outer(j) - contour.center) <= contour.radius)
            throw std::invalid_argument(std::string(who) + ": eigenvalue (" +
                                        std::to_string(outer(j).real()) + ", " +
                                        std::to_string(outer(j).imag()) +
                                        ") of the excluded matrix lies inside the contour");
    }
}

}  // namespace detail

// Smallest singular value of S -> L1 S - S L2 over matrices with the
// Frobenius norm. This is the certified linearized sep; the operator-norm
// convention can only be sampled (see sep_opnorm_sampled).
inline double sep_bruteforce(const Matrix& L1, const Matrix& L2) {
    detail::require_square_pair(L1, L2, "sep_bruteforce");
    if (L1.rows() * L2.rows() > 10000)
        throw std::invalid_argument("sep_bruteforce: linearized dimension exceeds 10000");
    const RealVector s = singular_values(detail::sylvester_matrix(L1, L2));
    return s(s.size() - 1);
}

// Sampled upper bound on the operator-norm sep: the Frobenius minimizer
// (via a linearized solve) plus random directions, each renormalized to
// unit spectral norm before measuring the image.
inline double sep_opnorm_sampled(const Matrix& L1, const Matrix& L2, int trials = 32,
                                 std::uint64_t seed = 12345) {
    detail::require_square_pair(L1, L2, "sep_opnorm_sampled");
    const Index n1 = L1.rows();
    const Index n2 = L2.rows();
    if (n1 * n2 > 10000)
        throw std::invalid_argument("sep_opnorm_sampled: linearized dimension exceeds 10000");
    const Matrix K = detail::sylvester_matrix(L1, L2);
    const SvdResult ks = svd(K);

    std::vector<Matrix> candidates;
    const Vector vmin = ks.V.col(ks.V.cols() - 1);
    candidates.push_back(Eigen::Map<const Matrix>(vmin.data(), n1, n2));
    Rng rng(seed);
    for (int t = 0; t < trials; ++t) candidates.push_back(rng.gaussian_matrix(n1, n2));

    double best = std::numeric_limits<double>::infinity();
    for (const Matrix& raw : candidates) {
        const double nrm = spectral_norm(raw);
        if (!(nrm > 0.0)) continue;
        const Matrix S = raw / nrm;
        best = std::min(best, spectral_norm(L1 * S - S * L2));
    }
    return best;
}

// Direct solve of L1 S - S L2 = M through the linearization.
inline Matrix sylvester_oracle(const Matrix& L1, const Matrix& L2, const Matrix& M) {
    detail::require_square_pair(L1, L2, "sylvester_oracle");
    require_finite(M, "sylvester_oracle");
    if (M.rows() != L1.rows() || M.cols() != L2.rows())
        throw std::invalid_argument("sylvester_oracle: right-hand side shape mismatch");
    const double dist = detail::spectra_distance(L1, L2);
    if (!(dist > 1e-8))
        throw std::invalid_argument("sylvester_oracle: spectra not separated (distance " +
                                    std::to_string(dist) + ")");
    const Index n1 = L1.rows();
    const Index n2 = L2.rows();
    const Eigen::Map<const Vector> m(M.data(), n1 * n2);
    const Matrix x = solve_linear(detail::sylvester_matrix(L1, L2), Matrix(m));
    const Matrix S = Eigen::Map<const Matrix>(x.data(), n1, n2);
    const double scale = (spectral_norm(L1) + spectral_norm(L2)) * spectral_norm(S);
    if (!(spectral_norm(L1 * S - S * L2 - M) <= 1e-10 * std::max(scale, spectral_norm(M))))
        throw std::runtime_error("sylvester_oracle: residual exceeded tolerance");
    return S;
}

// Contour representation: (1/2 pi i) times the integral of
// (L1 - z)^-1 M (z - L2)^-1 around a circle enclosing the spectrum of L2.
inline Matrix sylvester_contour(const Matrix& L1, const Matrix& L2, const Matrix& M,
                                const Contour& contour) {
    detail::require_square_pair(L1, L2, "sylvester_contour");
    require_finite(M, "sylvester_contour");
    if (M.rows() != L1.rows() || M.cols() != L2.rows())
        throw std::invalid_argument("sylvester_contour: right-hand side shape mismatch");
    detail::require_enclosure(L1, L2, contour, "sylvester_contour");

    const Index n1 = L1.rows();
    const Index n2 = L2.rows();
    const Matrix I1 = Matrix::Identity(n1, n1);
    const Matrix I2 = Matrix::Identity(n2, n2);
    const auto term = [&](double theta) {
        const Complex phase = std::polar(1.0, theta);
        const Complex z = contour.center + contour.radius * phase;
        const Matrix left = solve_linear(Matrix(L1 - z * I1), M);
        const Matrix right = solve_linear(Matrix((z * I2 - L2).transpose()), Matrix(left.transpose()));
        return Matrix(phase * right.transpose());
    };

    int q = contour.nodes;
    Matrix sum = Matrix::Zero(n1, n2);
    for (int j = 0; j < q; ++j) sum += term(2.0 * std::numbers::pi * double(j) / double(q));
    Matrix S = (contour.radius / double(q)) * sum;
    while (q < 1024) {
        for (int j = 0; j < q; ++j)
            sum += term(2.0 * std::numbers::pi * (double(j) + 0.5) / double(q));
        q *= 2;
        const Matrix refined = (contour.radius / double(q)) * sum;
        const double delta = (refined - S).norm();
        S = refined;
        if (delta <= 1e-10 * std::max(1.0, S.norm())) return S;
    }
    throw std::runtime_error(
        "sylvester_contour: quadrature did not converge by q = 1024; spectra may touch the contour");
}

// Support function of the numerical range: largest eigenvalue of the
// Hermitian part of e^{-i theta} L.
inline double numerical_range_support(const Matrix& L, double theta) {
    require_finite(L, "numerical_range_support");
    if (L.rows() != L.cols())
        throw std::invalid_argument("numerical_range_support: square matrix required");
    const Matrix rotated = std::polar(1.0, -theta) * L;
    Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix(0.5 * (rotated + rotated.adjoint())));
    return es.eigenvalues().maxCoeff();
}

struct NumrangeGap {
    double delta = 0.0;  // separation of the two numerical ranges, 0 = overlapping/unknown
    double theta = 0.0;  // maximizing direction
    bool separated() const { return delta > 0.0; }
};

// Largest gap between parallel supporting half-planes of the two numerical
// ranges over sampled directions. By convexity this never exceeds the true
// distance, so a positive value is a certificate of separation.
inline NumrangeGap numrange_distance(const Matrix& L1, const Matrix& L2, int samples = 512) {
    detail::require_square_pair(L1, L2, "numrange_distance");
    if (samples < 64) throw std::invalid_argument("numrange_distance: at least 64 samples");
    NumrangeGap best;
    double raw_best = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < samples; ++j) {
        const double theta = 2.0 * std::numbers::pi * double(j) / double(samples);
        const double gap = -numerical_range_support(L1, theta + std::numbers::pi) -
                           numerical_range_support(L2, theta);
        if (gap > raw_best) {
            raw_best = gap;
            best.theta = theta;
        }
    }
    best.delta = std::max(0.0, raw_best);
    return best;
}

// Pseudospectral lower bound on sep: with the contour outside the epsilon1
// pseudospectrum of L1 and the epsilon2 one of L2, sep is at least
// 2 pi epsilon1 epsilon2 / arc length. Certified at the quadrature nodes.
inline double sep_lower_pseudo(const Matrix& L1, const Matrix& L2, const Contour& contour) {
    detail::require_square_pair(L1, L2, "sep_lower_pseudo");
    detail::require_enclosure(L1, L2, contour, "sep_lower_pseudo");
    const GramPtr g1 = Gram::identity(L1.rows());
    const GramPtr g2 = Gram::identity(L2.rows());
    const double eps1 = epsilon_on_contour(L1, contour, *g1);
    const double eps2 = epsilon_on_contour(L2, contour, *g2);
    return 2.0 * std::numbers::pi * eps1 * eps2 / contour.arc_length();
}

namespace detail {

// 8-point Gauss-Legendre rule on [-1, 1].
inline constexpr double kGaussNode[8] = {
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
    0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
inline constexpr double kGaussWeight[8] = {
    0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
    0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};

}  // namespace detail

// Semigroup representation of the Sylvester solution: rotate and shift both
// matrices by the numerical-range geometry so one semigroup is a
// contraction and the other decays at rate delta, then integrate
// e^{-t L1'} M e^{t L2'} with composite Gauss-Legendre panels up to the
// point where the analytic tail bound drops below tail_target.
inline Matrix sylvester_semigroup(const Matrix& L1, const Matrix& L2, const Matrix& M,
                                  double t_max, int steps, double tail_target = 1e-10) {
    detail::require_square_pair(L1, L2, "sylvester_semigroup");
    require_finite(M, "sylvester_semigroup");
    if (M.rows() != L1.rows() || M.cols() != L2.rows())
        throw std::invalid_argument("sylvester_semigroup: right-hand side shape mismatch");
    if (steps < 1 || !(t_max > 0.0) || !(tail_target > 0.0))
        throw std::invalid_argument("sylvester_semigroup: bad integration parameters");
    if (M.isZero(0.0)) return Matrix::Zero(M.rows(), M.cols());

    const NumrangeGap gap = numrange_distance(L1, L2);
    if (!gap.separated())
        throw std::invalid_argument(
            "sylvester_semigroup: numerical ranges overlap or separation was not detected");

    // Contact point of the L1 numerical range in the separating direction:
    // the Rayleigh quotient at the extreme eigenvector of the rotated
    // Hermitian part. Shifting by it puts the L1 range in Re >= 0 and the
    // L2 range in Re <= -delta after rotation.
    const Complex rot = std::polar(1.0, -gap.theta);
    const Matrix back_rotated = std::polar(1.0, -(gap.theta + std::numbers::pi)) * L1;
    Eigen::SelfAdjointEigenSolver<Matrix> es(
        Matrix(0.5 * (back_rotated + back_rotated.adjoint())));
    Index top = 0;
    es.eigenvalues().maxCoeff(&top);
    const Vector contact = es.eigenvectors().col(top);
    const Complex z1 = contact.dot(L1 * contact);

    const Matrix L1hat = rot * (L1 - z1 * Matrix::Identity(L1.rows(), L1.cols()));
    const Matrix L2hat = rot * (L2 - z1 * Matrix::Identity(L2.rows(), L2.cols()));

    const double needed =
        std::log(std::max(1.0, M.norm() / (gap.delta * tail_target))) / gap.delta;
    if (needed > t_max)
        throw std::invalid_argument("sylvester_semigroup: t_max " + std::to_string(t_max) +
                                    " below the horizon " + std::to_string(needed) +
                                    " required for the tail target");

    Matrix S = Matrix::Zero(M.rows(), M.cols());
    const double width = needed / double(steps);
    for (int p = 0; p < steps; ++p) {
        const double mid = (double(p) + 0.5) * width;
        for (int i = 0; i < 8; ++i) {
            const double t = mid + 0.5 * width * detail::kGaussNode[i];
            const Matrix left = (-t * L1hat).exp();
            const Matrix right = (t * L2hat).exp();
            S += (0.5 * width * detail::kGaussWeight[i]) * (left * M * right);
        }
    }
    return rot * S;
}

// The combined separation report: certified Frobenius sep, sampled
// operator-norm sep, and the two lower bounds with their certificates.
struct SepReport {
    double sep_exact = 0.0;
    double sep_opnorm = 0.0;
    double bound_pseudo = 0.0;
    std::optional<double> bound_numrange;
    Contour contour_used;
    double epsilon1 = 0.0;
    double epsilon2 = 0.0;
};

inline SepReport sep_report(const Matrix& L1, const Matrix& L2, const Contour& contour) {
    SepReport r{0.0, 0.0, 0.0, std::nullopt, contour, 0.0, 0.0};
    r.sep_exact = sep_bruteforce(L1, L2);
    r.sep_opnorm = sep_opnorm_sampled(L1, L2);
    detail::require_enclosure(L1, L2, contour, "sep_report");
    const GramPtr g1 = Gram::identity(L1.rows());
    const GramPtr g2 = Gram::identity(L2.rows());
    r.epsilon1 = epsilon_on_contour(L1, contour, *g1);
    r.epsilon2 = epsilon_on_contour(L2, contour, *g2);
    r.bound_pseudo = 2.0 * std::numbers::pi * r.epsilon1 * r.epsilon2 / contour.arc_length();
    const NumrangeGap gap = numrange_distance(L1, L2);
    if (gap.separated()) r.bound_numrange = gap.delta;
    if (r.bound_pseudo > r.sep_exact + 1e-9)
        throw std::runtime_error("sep_report: pseudospectral bound exceeded the certified sep");
    if (r.bound_numrange && *r.bound_numrange > r.sep_exact + 1e-9)
        throw std::runtime_error("sep_report: numerical-range bound exceeded the certified sep");
    return r;
}

}  // namespace eiglab
