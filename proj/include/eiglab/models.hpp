#pragma once
// Finite-dimensional reference problems: a convection-diffusion operator on
// the unit square discretized in an L2-orthonormal sine product basis, and
// randomized nonnormal test operators with exactly known eigenstructure.

#include <eiglab/dense.hpp>
#include <eiglab/galerkin.hpp>
#include <eiglab/krylov.hpp>
#include <eiglab/rng.hpp>
#include <eiglab/subspace.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace eiglab {

struct SineIndex {
    int k1 = 0;
    int k2 = 0;
};

inline bool operator==(SineIndex a, SineIndex b) { return a.k1 == b.k1 && a.k2 == b.k2; }

// Laplacian eigenvalue of the basis function with this index.
inline double sine_eigenvalue(SineIndex k) {
    const double pi2 = std::numbers::pi * std::numbers::pi;
    return static_cast<double>(k.k1 * k.k1 + k.k2 * k.k2) * pi2;
}

// Index set {k : (k1 + k2) h < 1, k1, k2 >= 1}, ordered by total order then
// first component. The strict inequality carries a small guard so that mesh
// sizes written as 1/m keep exactly the intended set.
inline std::vector<SineIndex> sine_indices(double h) {
    if (!(h > 0.0) || h > 0.5)
        throw std::invalid_argument("sine_indices: mesh size must satisfy 0 < h <= 1/2");
    const double guard = 1.0 - 1e-12;
    std::vector<SineIndex> out;
    for (int k1 = 1; (k1 + 1) * h < guard; ++k1)
        for (int k2 = 1; (k1 + k2) * h < guard; ++k2) out.push_back({k1, k2});
    std::sort(out.begin(), out.end(), [](SineIndex a, SineIndex b) {
        if (a.k1 + a.k2 != b.k1 + b.k2) return a.k1 + a.k2 < b.k1 + b.k2;
        return a.k1 < b.k1;
    });
    return out;
}

using ScalarField = std::function<double(double, double)>;

struct ModelCoefficients {
    ScalarField b1;
    ScalarField b2;
    ScalarField c;
    std::string name = "custom";
};

// One term of the fixed expression grammar for config-supplied coefficients:
// coef * x^px * y^py * sin(sx pi x) * sin(sy pi y) * cos(cx pi x) * cos(cy pi y),
// where a zero frequency drops the corresponding trigonometric factor.
struct FieldTerm {
    double coef = 0.0;
    int px = 0, py = 0;
    int sx = 0, sy = 0;
    int cx = 0, cy = 0;
};

inline ScalarField field_from_terms(std::vector<FieldTerm> terms) {
    for (const FieldTerm& t : terms)
        if (t.px < 0 || t.py < 0 || t.sx < 0 || t.sy < 0 || t.cx < 0 || t.cy < 0)
            throw std::invalid_argument("field_from_terms: negative powers/frequencies not supported");
    return [terms = std::move(terms)](double x, double y) {
        const double pi = std::numbers::pi;
        double v = 0.0;
        for (const FieldTerm& t : terms) {
            double f = t.coef;
            for (int i = 0; i < t.px; ++i) f *= x;
            for (int i = 0; i < t.py; ++i) f *= y;
            if (t.sx > 0) f *= std::sin(t.sx * pi * x);
            if (t.sy > 0) f *= std::sin(t.sy * pi * y);
            if (t.cx > 0) f *= std::cos(t.cx * pi * x);
            if (t.cy > 0) f *= std::cos(t.cy * pi * y);
            v += f;
        }
        return v;
    };
}

inline ModelCoefficients model_from_terms(std::vector<FieldTerm> b1, std::vector<FieldTerm> b2,
                                          std::vector<FieldTerm> c,
                                          std::string name = "custom") {
    ModelCoefficients co;
    co.b1 = field_from_terms(std::move(b1));
    co.b2 = field_from_terms(std::move(b2));
    co.c = field_from_terms(std::move(c));
    co.name = std::move(name);
    return co;
}

namespace detail {

// Sine ladder S(t) = sum_{2<=m<=64} s_m m^{-21/10} sin(m pi t) and its
// derivative. The slow m^{-21/10} decay places energy at every frequency a
// desk-scale reference can represent, so a field built from S has only about
// one derivative of effective smoothness across that range. Fields built
// from polynomials or single sines are far smoother, and eigenvectors of the
// resulting operators shed their high modes too quickly to exercise the
// generic truncation rates the convergence studies are meant to measure.
// Multiplying S by a single sine keeps every product frequency aligned with
// a basis frequency, so the ladder feeds the assembled interaction matrix at
// full strength instead of leaking away through envelope sidebands. The
// period-4 sign pattern s_m = +,+,-,- flips the sign between modes m and
// m+2; without it, differentiating the stream function leaves only the
// difference c_{m+1} - c_{m-1} of same-parity coefficients at each product
// frequency, which cancels a smooth ladder down by a full power of m.
constexpr int kLadderModes = 64;

inline double ladder_sign(int m) {
    return (m % 4 == 0 || m % 4 == 1) ? 1.0 : -1.0;
}

inline double ladder(double t) {
    const double pi = std::numbers::pi;
    double v = 0.0;
    for (int m = 2; m <= kLadderModes; ++m)
        v += ladder_sign(m) * std::pow(double(m), -2.1) * std::sin(m * pi * t);
    return v;
}

inline double ladder_deriv(double t) {
    const double pi = std::numbers::pi;
    double v = 0.0;
    for (int m = 2; m <= kLadderModes; ++m)
        v += ladder_sign(m) * pi * std::pow(double(m), -1.1) * std::cos(m * pi * t);
    return v;
}

}  // namespace detail

// Built-in coefficient registry. "default" is the rough divergence-free
// choice the convergence studies run with: b = (d/dy, -d/dx) of the stream
// function a [S(x) sin(pi x) g(y) + S(y) sin(pi y) g(x)] with g(t) =
// sin(pi t) sin(2 pi t) and S the sine ladder above. Every factor has a
// double zero on the boundary, so b and its first derivatives vanish there.
// "smooth" is a gentle polynomial/sine choice; "rotation" is divergence-free
// with c = 0 so the interaction matrix is skew-adjoint; "zero" makes the
// operator normal.
inline ModelCoefficients model_coefficients(const std::string& name) {
    ModelCoefficients co;
    co.name = name;
    const double pi = std::numbers::pi;
    if (name == "default") {
        const double a = 0.4;
        auto g = [pi](double t) { return std::sin(pi * t) * std::sin(2.0 * pi * t); };
        auto gp = [pi](double t) {
            return pi * std::cos(pi * t) * std::sin(2.0 * pi * t) +
                   2.0 * pi * std::sin(pi * t) * std::cos(2.0 * pi * t);
        };
        co.b1 = [a, pi, g, gp](double x, double y) {
            return a * (detail::ladder(x) * std::sin(pi * x) * gp(y) +
                        (detail::ladder_deriv(y) * std::sin(pi * y) +
                         detail::ladder(y) * pi * std::cos(pi * y)) *
                            g(x));
        };
        co.b2 = [a, pi, g, gp](double x, double y) {
            return -a * ((detail::ladder_deriv(x) * std::sin(pi * x) +
                          detail::ladder(x) * pi * std::cos(pi * x)) *
                             g(y) +
                         detail::ladder(y) * std::sin(pi * y) * gp(x));
        };
        co.c = [](double x, double y) { return 1.0 + x * y; };
    } else if (name == "smooth") {
        co.b1 = [](double x, double y) { return x * (1.0 - x) * y * (1.0 - y); };
        co.b2 = [pi](double x, double y) { return -0.5 * std::sin(pi * x) * std::sin(pi * y); };
        co.c = [](double x, double y) { return 1.0 + x * y; };
    } else if (name == "zero") {
        co.b1 = co.b2 = co.c = [](double, double) { return 0.0; };
    } else if (name == "reaction") {
        co.b1 = co.b2 = [](double, double) { return 0.0; };
        co.c = [](double, double) { return 1.0; };
    } else if (name == "rotation") {
        co.b1 = [](double, double y) { return 0.5 - y; };
        co.b2 = [](double x, double) { return x - 0.5; };
        co.c = [](double, double) { return 0.0; };
    } else {
        throw std::invalid_argument("model_coefficients: unknown name \"" + name + "\"");
    }
    return co;
}

namespace detail {

struct Quadrature {
    RealVector nodes;    // on [0, 1]
    RealVector weights;
};

// Gauss-Legendre rule mapped to [0, 1], computed from the Jacobi matrix.
inline Quadrature gauss_legendre_01(int q) {
    if (q < 1) throw std::invalid_argument("gauss_legendre_01: need at least one node");
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(q, q);
    for (int k = 1; k < q; ++k) {
        const double b = k / std::sqrt(4.0 * k * k - 1.0);
        J(k, k - 1) = b;
        J(k - 1, k) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("gauss_legendre_01: Jacobi eigendecomposition failed");
    Quadrature out;
    out.nodes = (es.eigenvalues().array() + 1.0) / 2.0;
    out.weights = es.eigenvectors().row(0).array().square();  // already sums to 1 on [0, 1]
    return out;
}

struct SineTables {
    Eigen::MatrixXd S;   // S(a, k-1) = sqrt(2) sin(k pi x_a)
    Eigen::MatrixXd D;   // D(a, k-1) = sqrt(2) k pi cos(k pi x_a)
};

inline SineTables sine_tables(const RealVector& nodes, int kmax) {
    const double pi = std::numbers::pi;
    const double rt2 = std::numbers::sqrt2;
    SineTables t;
    t.S.resize(nodes.size(), kmax);
    t.D.resize(nodes.size(), kmax);
    for (Index a = 0; a < nodes.size(); ++a)
        for (int k = 1; k <= kmax; ++k) {
            t.S(a, k - 1) = rt2 * std::sin(k * pi * nodes(a));
            t.D(a, k - 1) = rt2 * k * pi * std::cos(k * pi * nodes(a));
        }
    return t;
}

// <phi_j, b . grad phi_k + c phi_k> over all index pairs by tensor
// Gauss-Legendre quadrature, accumulated one x1-slice at a time so memory
// stays at O(q N).
inline Eigen::MatrixXd interaction_matrix(const std::vector<SineIndex>& idx,
                                          const ModelCoefficients& co, int q) {
    const Index N = static_cast<Index>(idx.size());
    int kmax = 1;
    for (const SineIndex& k : idx) kmax = std::max({kmax, k.k1, k.k2});
    const Quadrature quad = gauss_legendre_01(q);
    const SineTables tab = sine_tables(quad.nodes, kmax);

    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(N, N);
    Eigen::MatrixXd L(q, N), R(q, N);
    RealVector wb1(q), wb2(q), wc(q);
    for (int a = 0; a < q; ++a) {
        const double x = quad.nodes(a);
        for (int b = 0; b < q; ++b) {
            const double y = quad.nodes(b);
            const double wy = quad.weights(b);
            wb1(b) = wy * co.b1(x, y);
            wb2(b) = wy * co.b2(x, y);
            wc(b) = wy * co.c(x, y);
        }
        const double wx = quad.weights(a);
        for (Index j = 0; j < N; ++j) {
            const int j1 = idx[static_cast<std::size_t>(j)].k1;
            const int j2 = idx[static_cast<std::size_t>(j)].k2;
            L.col(j) = tab.S(a, j1 - 1) * tab.S.col(j2 - 1);
            R.col(j) = wx * (tab.D(a, j1 - 1) * wb1.cwiseProduct(tab.S.col(j2 - 1)) +
                             tab.S(a, j1 - 1) * wb2.cwiseProduct(tab.D.col(j2 - 1)) +
                             tab.S(a, j1 - 1) * wc.cwiseProduct(tab.S.col(j2 - 1)));
        }
        B.noalias() += L.transpose() * R;
    }
    return B;
}

}  // namespace detail

// Quadrature realization of the basis mass matrix; equals the identity up to
// quadrature error once the rule resolves the highest sine product.
inline Matrix mass_matrix(const std::vector<SineIndex>& idx, int q) {
    const Index N = static_cast<Index>(idx.size());
    int kmax = 1;
    for (const SineIndex& k : idx) kmax = std::max({kmax, k.k1, k.k2});
    const detail::Quadrature quad = detail::gauss_legendre_01(q);
    const detail::SineTables tab = detail::sine_tables(quad.nodes, kmax);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(N, N);
    Eigen::MatrixXd L(q, N);
    for (int a = 0; a < q; ++a) {
        for (Index j = 0; j < N; ++j) {
            const int j1 = idx[static_cast<std::size_t>(j)].k1;
            const int j2 = idx[static_cast<std::size_t>(j)].k2;
            L.col(j) = tab.S(a, j1 - 1) * tab.S.col(j2 - 1);
        }
        M.noalias() += quad.weights(a) * L.transpose() * quad.weights.asDiagonal() * L;
    }
    return M.cast<Complex>();
}

// Assembled model: the reference operator diag(lambda0) + B in the sine
// basis, plus the index bookkeeping needed to form nested trial spaces.
struct ModelProblem {
    ReferencePtr reference;
    std::vector<SineIndex> indices;
    std::string coefficients;
    double h_ref = 0.0;
    int quad = 0;
};

// Assembles the reference operator at mesh parameter h_ref. The interaction
// matrix is computed at quadrature orders q and 2q; if any entry moves by
// more than 1e-10 the rule has not converged and assembly fails rather than
// returning polluted data.
inline ModelProblem assemble_model(double h_ref, const ModelCoefficients& co, int q = 40) {
    if (!co.b1 || !co.b2 || !co.c)
        throw std::invalid_argument("assemble_model: all three coefficient fields must be set");
    const std::vector<SineIndex> idx = sine_indices(h_ref);
    if (idx.empty()) throw std::invalid_argument("assemble_model: no basis functions at this mesh size");
    if (static_cast<Index>(idx.size()) > 2500)
        throw std::invalid_argument("assemble_model: reference dimension " +
                                    std::to_string(idx.size()) + " exceeds the dense-solver budget");
    if (q < 2) throw std::invalid_argument("assemble_model: quadrature order too small");

    const Eigen::MatrixXd B1 = detail::interaction_matrix(idx, co, q);
    const Eigen::MatrixXd B2 = detail::interaction_matrix(idx, co, 2 * q);
    const double drift = (B1 - B2).cwiseAbs().maxCoeff();
    if (!(drift <= 1e-10))
        throw std::runtime_error("assemble_model: quadrature not converged at order " +
                                 std::to_string(q) + " (entry drift " + std::to_string(drift) +
                                 " under doubling); increase the order");

    const Index N = static_cast<Index>(idx.size());
    RealVector lambda0(N);
    for (Index j = 0; j < N; ++j) lambda0(j) = sine_eigenvalue(idx[static_cast<std::size_t>(j)]);

    auto ref = std::make_shared<ReferenceProblem>();
    ref->A_ref = B2.cast<Complex>();
    ref->A_ref += lambda0.cast<Complex>().asDiagonal();
    ref->gramH = Gram::identity(N, "L2");
    ref->gramV = Gram::make(Matrix(lambda0.cast<Complex>().asDiagonal()), "H1");
    ref->A0_diag = lambda0;
    validate_reference(*ref);

    ModelProblem m;
    m.reference = std::move(ref);
    m.indices = idx;
    m.coefficients = co.name;
    m.h_ref = h_ref;
    m.quad = q;
    return m;
}

// Positions (within the reference index list) of the basis functions kept at
// the coarser mesh parameter h.
inline std::vector<Index> trial_positions(const ModelProblem& m, double h) {
    const std::vector<SineIndex> sub = sine_indices(h);
    std::map<std::pair<int, int>, Index> where;
    for (Index j = 0; j < static_cast<Index>(m.indices.size()); ++j)
        where[{m.indices[static_cast<std::size_t>(j)].k1,
               m.indices[static_cast<std::size_t>(j)].k2}] = j;
    std::vector<Index> out;
    out.reserve(sub.size());
    for (const SineIndex& k : sub) {
        auto it = where.find({k.k1, k.k2});
        if (it == where.end())
            throw std::invalid_argument("trial_positions: mesh " + std::to_string(h) +
                                        " is not nested in the reference");
        out.push_back(it->second);
    }
    return out;
}

// 0/1 selection frame embedding the coarse sine basis into the reference one.
inline Matrix trial_frame(const ModelProblem& m, double h) {
    const std::vector<Index> pos = trial_positions(m, h);
    Matrix Phi = Matrix::Zero(static_cast<Index>(m.indices.size()), static_cast<Index>(pos.size()));
    for (Index j = 0; j < static_cast<Index>(pos.size()); ++j)
        Phi(pos[static_cast<std::size_t>(j)], j) = Complex(1.0, 0.0);
    return Phi;
}

// ||(I - Q_h) B* A0^-1 Q_h|| for the coordinate truncation keeping the given
// positions, with B the nonnormal interaction part. This is the quantity
// whose decay in h drives the superconvergence functionals for the model.
inline double gamma_ring(const ReferenceProblem& ref, const std::vector<Index>& included) {
    validate_reference(ref);
    if (!ref.A0_diag)
        throw std::invalid_argument("gamma_ring: reference lacks a principal-part diagonal");
    if (!ref.gramH->is_identity())
        throw std::invalid_argument("gamma_ring: coordinate truncations require the identity geometry");
    const Index n = ref.dim();
    std::vector<bool> in(static_cast<std::size_t>(n), false);
    for (Index p : included) {
        if (p < 0 || p >= n) throw std::invalid_argument("gamma_ring: position out of range");
        in[static_cast<std::size_t>(p)] = true;
    }
    std::vector<Index> inc, exc;
    for (Index i = 0; i < n; ++i) (in[static_cast<std::size_t>(i)] ? inc : exc).push_back(i);
    if (inc.empty()) throw std::invalid_argument("gamma_ring: empty trial space");
    if (exc.empty()) return 0.0;

    // Entries of (I - Q) B^H A0^-1 Q restricted to excluded rows and included
    // columns; everything else vanishes.
    Matrix M(static_cast<Index>(exc.size()), static_cast<Index>(inc.size()));
    const RealVector& d = *ref.A0_diag;
    for (Index jc = 0; jc < static_cast<Index>(inc.size()); ++jc) {
        const Index j = inc[static_cast<std::size_t>(jc)];
        for (Index ic = 0; ic < static_cast<Index>(exc.size()); ++ic) {
            const Index i = exc[static_cast<std::size_t>(ic)];
            M(ic, jc) = std::conj(ref.A_ref(j, i)) / d(j);
        }
    }
    return spectral_norm(M);
}

inline double gamma_ring(const ModelProblem& m, double h) {
    return gamma_ring(*m.reference, trial_positions(m, h));
}

// Target eigenpair continuing from the principal sine eigenvalue 2 pi^2 under
// the interaction perturbation, computed by shift-and-invert iteration with
// the isolation radius certified through the normal-plus-perturbation
// eigenvalue enclosure.
inline TargetEigenpair model_target(const ModelProblem& m, int nodes = 32, double factor = 0.5) {
    if (!(factor > 0.0) || !(factor < 1.0))
        throw std::invalid_argument("model_target: contour radius factor must lie in (0, 1)");
    const ReferenceProblem& ref = *m.reference;
    const Index n = ref.dim();
    Index p = -1;
    for (Index j = 0; j < static_cast<Index>(m.indices.size()); ++j)
        if (m.indices[static_cast<std::size_t>(j)] == SineIndex{1, 1}) p = j;
    if (p < 0) throw std::invalid_argument("model_target: principal index missing from the basis");

    const RealVector& lambda0 = *ref.A0_diag;
    const double target0 = lambda0(p);
    double gap0 = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < n; ++j)
        if (j != p) gap0 = std::min(gap0, std::abs(lambda0(j) - target0));

    // Fast certificate: if the interaction is small against the unperturbed
    // spectral gap, every eigenvalue stays within ||B|| of a diagonal one and
    // isolation follows globally. First-order coefficient terms grow with the
    // basis size, so fine references fall back to a counting certificate below.
    Matrix Bpert = ref.A_ref;
    Bpert -= lambda0.cast<Complex>().asDiagonal();
    const double bnorm = spectral_norm_estimate(Bpert);
    const bool small_perturbation = bnorm < 0.5 * gap0;

    Matrix shifted = ref.A_ref;
    shifted.diagonal().array() -= Complex(target0, 0.0);
    const Eigen::PartialPivLU<Matrix> lu(shifted);
    const double anorm = spectral_norm_estimate(ref.A_ref);
    const double tol = 1e-12 * std::max(1.0, anorm);

    // When the interaction leaves the principal basis vector an exact
    // eigenvector (zero or diagonal coefficients), the shift above is exactly
    // singular, so accept that candidate before ever touching the solver.
    Vector v = Vector::Zero(n);
    v(p) = Complex(1.0, 0.0);
    Complex theta(target0, 0.0);
    bool ok = false;
    {
        const Vector Av = ref.A_ref * v;
        theta = v.dot(Av);
        ok = (Av - theta * v).norm() <= tol;
    }
    for (int it = 0; !ok && it < 200; ++it) {
        v = lu.solve(v);
        v /= v.norm();
        const Vector Av = ref.A_ref * v;
        theta = v.dot(Av);
        if ((Av - theta * v).norm() <= tol) ok = true;
    }
    if (!ok) throw std::runtime_error("model_target: shift-and-invert iteration stalled");

    Vector w = Vector::Zero(n);
    w(p) = Complex(1.0, 0.0);
    ok = (ref.A_ref.adjoint() * w - std::conj(theta) * w).norm() <= tol;
    for (int it = 0; !ok && it < 200; ++it) {
        w = lu.adjoint().solve(w);
        w /= w.norm();
        const Vector Aw = ref.A_ref.adjoint() * w;
        if ((Aw - std::conj(theta) * w).norm() <= tol) ok = true;
    }
    if (!ok) throw std::runtime_error("model_target: adjoint iteration stalled");

    double isolation = std::abs(theta);
    if (small_perturbation) {
        for (Index j = 0; j < n; ++j)
            if (j != p)
                isolation = std::min(isolation, std::abs(theta - Complex(lambda0(j), 0.0)) - bnorm);
    } else {
        // Neighbor placement: the dense inverse of the shift makes nearby
        // eigenvalues dominant, so a short one-sided run resolves them to
        // machine residuals. Only converged Ritz values are trusted.
        const Matrix Minv = lu.solve(Matrix::Identity(n, n));
        const double minv_norm = spectral_norm_estimate(Minv);
        const KrylovRun probe = arnoldi(Minv, Vector::Ones(n), std::min<Index>(n, 40));
        const RitzPairs rp = ritz_pairs(probe, probe.steps);
        bool found_neighbor = false;
        for (Index i = 0; i < rp.values.size(); ++i) {
            const Vector y = rp.vectors.col(i);
            if ((Minv * y - rp.values(i) * y).norm() > 1e-10 * minv_norm) continue;
            if (std::abs(rp.values(i)) < 1e-10 * minv_norm) continue;
            const Complex mu = Complex(target0, 0.0) + 1.0 / rp.values(i);
            if (std::abs(mu - theta) <= 1e-6 * std::max(1.0, anorm)) continue;  // theta itself
            isolation = std::min(isolation, std::abs(theta - mu));
            found_neighbor = true;
        }
        if (!found_neighbor)
            throw std::runtime_error("model_target: no converged neighbor eigenvalue to place "
                                     "the contour against");
    }
    const double radius = factor * isolation;
    if (!(radius > 0.0))
        throw std::runtime_error("model_target: could not certify a positive isolation radius");

    TargetEigenpair t;
    t.lambda = theta;
    t.m = 1;
    t.U = orthonormalize(v, ref.gramH);
    t.Ustar = orthonormalize(w, ref.gramH);
    t.contour = Contour{theta, radius, nodes};
    if (!small_perturbation) {
        // Certify the placement: exactly one eigenvalue may live inside.
        const Index count = enclosed_count(ref.A_ref, t.contour, 96);
        if (count != 1)
            throw std::runtime_error("model_target: contour encloses " + std::to_string(count) +
                                     " eigenvalues instead of 1");
    }
    validate_target(ref, t, anorm);
    return t;
}

// Unitarily rotated triangular operator A = Q (D + departure T) Q^H with a
// strictly upper random part of unit spectral norm; eigen decomposition is
// recovered exactly through triangular solves, giving both eigenvector
// families for diagnostics.
struct Testbed {
    ReferencePtr reference;
    Vector values;
    Matrix right_vectors;  // unit columns
    Matrix left_vectors;   // biorthonormal: left^H right = I
    double departure = 0.0;
    std::uint64_t seed = 0;
};

inline Testbed nonnormal_testbed(Index n, double departure, std::uint64_t seed,
                                 std::optional<RealVector> spectrum = {}) {
    if (n < 2) throw std::invalid_argument("nonnormal_testbed: need dimension at least 2");
    if (!(departure >= 0.0)) throw std::invalid_argument("nonnormal_testbed: departure must be >= 0");
    RealVector d;
    if (spectrum) {
        if (spectrum->size() != n)
            throw std::invalid_argument("nonnormal_testbed: spectrum size mismatch");
        d = *spectrum;
    } else {
        d.resize(n);
        for (Index i = 0; i < n; ++i) d(i) = static_cast<double>(i + 1);
    }
    double scale = std::max(1.0, d.cwiseAbs().maxCoeff());
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j)
            if (std::abs(d(i) - d(j)) <= 1e-8 * scale)
                throw std::invalid_argument("nonnormal_testbed: spectrum entries must be distinct");

    Rng rng(seed);
    const Matrix Q = rng.haar_unitary(n);
    Matrix Nstrict = rng.gaussian_matrix(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j <= i; ++j) Nstrict(i, j) = Complex(0.0, 0.0);
    const double nn = spectral_norm(Nstrict);
    if (nn > 0.0) Nstrict /= nn;

    Matrix T = Matrix(d.cast<Complex>().asDiagonal());
    T += departure * Nstrict;

    // Unit-upper eigenvector matrix of T by back substitution.
    Matrix X = Matrix::Identity(n, n);
    for (Index j = 1; j < n; ++j)
        for (Index i = j - 1; i >= 0; --i) {
            Complex acc(0.0, 0.0);
            for (Index k = i + 1; k <= j; ++k) acc += T(i, k) * X(k, j);
            X(i, j) = acc / (Complex(d(j), 0.0) - T(i, i));
        }
    for (Index j = 0; j < n; ++j) X.col(j) /= X.col(j).norm();
    const Matrix Y = X.template triangularView<Eigen::Upper>().solve(Matrix::Identity(n, n));

    Testbed tb;
    tb.departure = departure;
    tb.seed = seed;
    tb.values = d.cast<Complex>();
    tb.right_vectors = Q * X;
    tb.left_vectors = Q * Y.adjoint();

    auto ref = std::make_shared<ReferenceProblem>();
    ref->A_ref = Q * T * Q.adjoint();
    ref->gramH = Gram::identity(n, "Euclidean");
    ref->gramV = Gram::identity(n, "Euclidean");
    tb.reference = std::move(ref);

    const double anorm = spectral_norm(tb.reference->A_ref);
    for (Index j = 0; j < n; ++j) {
        const double res =
            (tb.reference->A_ref * tb.right_vectors.col(j) - tb.values(j) * tb.right_vectors.col(j))
                .norm();
        const double wn = tb.left_vectors.col(j).norm();
        const double resL = (tb.reference->A_ref.adjoint() * tb.left_vectors.col(j) -
                             std::conj(tb.values(j)) * tb.left_vectors.col(j))
                                .norm();
        if (!(res <= 1e-10 * std::max(1.0, anorm)) || !(resL <= 1e-10 * std::max(1.0, anorm) * wn))
            throw std::runtime_error("nonnormal_testbed: eigenpair residual check failed");
    }
    return tb;
}

// Target cluster assembled from exactly known testbed eigenpairs.
inline TargetEigenpair testbed_target(const Testbed& tb, const std::vector<Index>& sel,
                                      int nodes = 32) {
    if (sel.empty()) throw std::invalid_argument("testbed_target: empty selection");
    const Index n = tb.reference->dim();
    std::vector<bool> chosen(static_cast<std::size_t>(n), false);
    for (Index i : sel) {
        if (i < 0 || i >= n) throw std::invalid_argument("testbed_target: selection out of range");
        if (chosen[static_cast<std::size_t>(i)])
            throw std::invalid_argument("testbed_target: repeated selection");
        chosen[static_cast<std::size_t>(i)] = true;
    }
    Complex lambda(0.0, 0.0);
    for (Index i : sel) lambda += tb.values(i);
    lambda /= static_cast<double>(sel.size());

    std::vector<Complex> excluded;
    for (Index i = 0; i < n; ++i)
        if (!chosen[static_cast<std::size_t>(i)]) excluded.push_back(tb.values(i));
    const Contour contour = place_contour(lambda, excluded, nodes);
    for (Index i : sel)
        if (!(std::abs(tb.values(i) - contour.center) < contour.radius))
            throw std::invalid_argument("testbed_target: selected cluster is not isolated");

    Matrix Uraw(n, static_cast<Index>(sel.size()));
    Matrix Wraw(n, static_cast<Index>(sel.size()));
    for (Index j = 0; j < static_cast<Index>(sel.size()); ++j) {
        Uraw.col(j) = tb.right_vectors.col(sel[static_cast<std::size_t>(j)]);
        Wraw.col(j) = tb.left_vectors.col(sel[static_cast<std::size_t>(j)]);
    }

    TargetEigenpair t;
    t.lambda = lambda;
    t.m = static_cast<Index>(sel.size());
    t.U = orthonormalize(Uraw, tb.reference->gramH);
    t.Ustar = orthonormalize(Wraw, tb.reference->gramH);
    t.contour = contour;
    validate_target(*tb.reference, t);
    return t;
}

}  // namespace eiglab
