#pragma once

// Circular contours, resolvent norms, and Dunford integral spectral
// projectors evaluated by trapezoidal quadrature.

#include <eiglab/dense.hpp>
#include <eiglab/subspace.hpp>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace eiglab {

// Circle in the complex plane with a starting quadrature node count.
struct Contour {
    Complex center;
    double radius = 0.0;
    int nodes = 32;

    Contour(Complex c, double r, int q = 32) : center(c), radius(r), nodes(q) {
        if (!(radius > 0.0)) throw std::invalid_argument("Contour: radius must be positive");
        if (nodes < 4) throw std::invalid_argument("Contour: at least 4 quadrature nodes");
    }

    // j-th of q equispaced nodes, counterclockwise from angle 0.
    Complex node(int j, int q) const {
        const double theta = 2.0 * std::numbers::pi * double(j) / double(q);
        return center + radius * std::polar(1.0, theta);
    }

    double arc_length() const { return 2.0 * std::numbers::pi * radius; }
};

// Circle around a target eigenvalue with radius half the distance to the
// nearest excluded point. The origin is always excluded so that the
// enclosed spectrum stays identifiable across the inverse transform.
inline Contour place_contour(Complex target, const std::vector<Complex>& excluded,
                             int nodes = 32) {
    double dist = std::abs(target);
    for (const Complex& mu : excluded) dist = std::min(dist, std::abs(target - mu));
    if (!(dist > 0.0))
        throw std::invalid_argument(
            "place_contour: target coincides with an excluded point or the origin");
    return Contour(target, 0.5 * dist, nodes);
}

// G-operator norm of (z - L)^-1, computed from the smallest G-weighted
// singular value of z - L. A weighted singular value at or below 1e-13
// means z sits on the spectrum as far as double precision can tell.
inline double resolvent_norm(const Matrix& L, Complex z, const Gram& gram) {
    require_finite(L, "resolvent_norm");
    if (L.rows() != L.cols() || L.rows() != gram.dim())
        throw std::invalid_argument("resolvent_norm: shape mismatch");
    Matrix M = -L;
    M.diagonal().array() += z;
    const RealVector s = singular_values(gram.weighted_operator(M));
    const double smin = s(s.size() - 1);
    if (!(smin > 1e-13))
        throw std::runtime_error("resolvent_norm: spectral hit, distance to spectrum <= " +
                                 std::to_string(smin) + " at z = (" + std::to_string(z.real()) +
                                 ", " + std::to_string(z.imag()) + ")");
    return 1.0 / smin;
}

namespace detail {

// Resolvent (z - L)^-1 with a cheap guard: the largest column norm bounds
// the spectral norm from below, so a huge value flags an eigenvalue within
// quadrature reach of the contour.
inline Matrix resolvent_guarded(const Matrix& L, Complex z, double radius) {
    Matrix M = -L;
    M.diagonal().array() += z;
    Matrix R;
    try {
        R = solve_linear(M, Matrix::Identity(L.rows(), L.cols()));
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(
            std::string("dunford_projector: resolvent solve failed on the contour "
                        "(eigenvalue within quadrature reach): ") +
            e.what());
    }
    const double colnorm = R.colwise().norm().maxCoeff();
    if (colnorm * radius >= 1e10)
        throw std::runtime_error(
            "dunford_projector: eigenvalue within 1e-10 of the contour radius scale");
    return R;
}

}  // namespace detail

// Number of eigenvalues enclosed by the contour, counted as the winding
// number of det(z - L) along the discretized circle. Determinants enter only
// through their argument, accumulated from an LU factorization per node, so
// magnitude overflow cannot occur at any dimension. The phase step between
// consecutive nodes must stay clearly below pi for the count to be alias-free;
// violations throw rather than returning a guess.
inline Index enclosed_count(const Matrix& L, const Contour& contour, int nodes = 96) {
    require_finite(L, "enclosed_count");
    if (L.rows() != L.cols()) throw std::invalid_argument("enclosed_count: square matrix required");
    if (nodes < 8) throw std::invalid_argument("enclosed_count: need at least 8 nodes");
    const Index n = L.rows();
    std::vector<double> phase(static_cast<std::size_t>(nodes));
    for (int j = 0; j < nodes; ++j) {
        Matrix M = -L;
        M.diagonal().array() += contour.node(j, nodes);
        const Eigen::PartialPivLU<Matrix> lu(M);
        double arg = lu.permutationP().determinant() < 0 ? std::numbers::pi : 0.0;
        for (Index i = 0; i < n; ++i) {
            const Complex d = lu.matrixLU()(i, i);
            if (!(std::abs(d) > 0.0))
                throw std::runtime_error("enclosed_count: contour node hit an eigenvalue");
            arg += std::arg(d);
        }
        phase[static_cast<std::size_t>(j)] = arg;
    }
    double winding = 0.0;
    for (int j = 0; j < nodes; ++j) {
        const double step = std::remainder(
            phase[static_cast<std::size_t>((j + 1) % nodes)] - phase[static_cast<std::size_t>(j)],
            2.0 * std::numbers::pi);
        if (std::abs(step) > 0.9 * std::numbers::pi)
            throw std::runtime_error(
                "enclosed_count: determinant phase step exceeded the alias guard; rerun with "
                "more nodes");
        winding += step;
    }
    const double turns = winding / (2.0 * std::numbers::pi);
    const double nearest = std::round(turns);
    if (std::abs(turns - nearest) > 0.05)
        throw std::runtime_error("enclosed_count: winding did not close to an integer");
    return static_cast<Index>(nearest);
}

// Fixed-order trapezoidal evaluation of (1/2 pi i) times the contour
// integral of the resolvent. Exposed so convergence studies can pin q.
inline Matrix dunford_quadrature(const Matrix& L, const Contour& contour, int q) {
    require_finite(L, "dunford_quadrature");
    if (L.rows() != L.cols())
        throw std::invalid_argument("dunford_quadrature: square matrix required");
    if (q < 4) throw std::invalid_argument("dunford_quadrature: at least 4 nodes");
    Matrix sum = Matrix::Zero(L.rows(), L.cols());
    for (int j = 0; j < q; ++j) {
        const double theta = 2.0 * std::numbers::pi * double(j) / double(q);
        const Complex phase = std::polar(1.0, theta);
        sum += phase * detail::resolvent_guarded(L, contour.center + contour.radius * phase,
                                                 contour.radius);
    }
    return (contour.radius / double(q)) * sum;
}

// Spectral projector onto the eigenspace enclosed by the contour. Starts at
// the contour's node count and doubles, reusing previous nodes, until two
// consecutive levels agree to 1e-10 in the G-operator norm.
inline Matrix dunford_projector(const Matrix& L, const Contour& contour, const Gram& gram) {
    require_finite(L, "dunford_projector");
    if (L.rows() != L.cols() || L.rows() != gram.dim())
        throw std::invalid_argument("dunford_projector: shape mismatch");

    int q = contour.nodes;
    Matrix sum = Matrix::Zero(L.rows(), L.cols());
    for (int j = 0; j < q; ++j) {
        const Complex phase = std::polar(1.0, 2.0 * std::numbers::pi * double(j) / double(q));
        sum += phase * detail::resolvent_guarded(L, contour.center + contour.radius * phase,
                                                 contour.radius);
    }
    Matrix E = (contour.radius / double(q)) * sum;

    double delta = std::numeric_limits<double>::infinity();
    while (q < 1024) {
        // Midpoints of the current grid are the new nodes of the doubled one.
        for (int j = 0; j < q; ++j) {
            const Complex phase =
                std::polar(1.0, 2.0 * std::numbers::pi * (double(j) + 0.5) / double(q));
            sum += phase * detail::resolvent_guarded(L, contour.center + contour.radius * phase,
                                                     contour.radius);
        }
        q *= 2;
        const Matrix refined = (contour.radius / double(q)) * sum;
        delta = gram.op_norm(refined - E);
        E = refined;
        if (delta <= 1e-10) return E;
    }
    throw std::runtime_error(
        "dunford_projector: quadrature did not converge by q = 1024 (last delta " +
        std::to_string(delta) + "); an eigenvalue may sit near the contour");
}

// G-orthonormal basis of the range of a spectral projector. The dimension
// is the multiplicity of the enclosed eigenvalue cluster.
inline Subspace invariant_subspace(const Matrix& E, GramPtr gram) {
    require_finite(E, "invariant_subspace");
    if (!gram || E.rows() != E.cols() || E.rows() != gram->dim())
        throw std::invalid_argument("invariant_subspace: shape mismatch");
    const double en = spectral_norm(E);
    if (!(spectral_norm(E * E - E) <= 1e-9 * std::max(1.0, en)))
        throw std::invalid_argument("invariant_subspace: input is not idempotent");
    const SvdResult s = svd(E);
    const double tol = rank_tolerance(s.sigma, E.rows(), E.cols());
    Index r = 0;
    while (r < s.sigma.size() && s.sigma(r) > tol) ++r;
    if (tol > 0.0) {
        for (Index i = 0; i < s.sigma.size(); ++i) {
            if (s.sigma(i) > 0.1 * tol && s.sigma(i) < 10.0 * tol)
                throw std::runtime_error(
                    "invariant_subspace: rank ambiguous, singular value " +
                    std::to_string(s.sigma(i)) + " within a factor 10 of the threshold " +
                    std::to_string(tol));
        }
    }
    if (r == 0) return Subspace{Matrix(E.rows(), 0), std::move(gram)};
    return orthonormalize(s.U.leftCols(r), std::move(gram));
}

// 1 / (largest resolvent norm over the contour's own nodes): the largest
// epsilon for which the sampled contour stays outside the epsilon
// pseudospectrum. Certification is at the nodes only, so the node count
// travels with any report quoting this value.
inline double epsilon_on_contour(const Matrix& L, const Contour& contour, const Gram& gram) {
    double worst = 0.0;
    for (int j = 0; j < contour.nodes; ++j)
        worst = std::max(worst, resolvent_norm(L, contour.node(j, contour.nodes), gram));
    return 1.0 / worst;
}

}  // namespace eiglab
