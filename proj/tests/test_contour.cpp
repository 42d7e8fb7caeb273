#include <catch2/catch_amalgamated.hpp>

#include <eiglab/contour.hpp>
#include <eiglab/dense.hpp>
#include <eiglab/rng.hpp>
#include <eiglab/subspace.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <vector>

using namespace eiglab;

namespace {

Matrix diag2(double a, double b) {
    Vector d(2);
    d << a, b;
    return Matrix(d.asDiagonal());
}

// Jordan block at 2 coupled with a simple eigenvalue at 7, conjugated by a
// fixed well-conditioned basis so nothing is axis-aligned.
struct JordanExample {
    Matrix L;
    Matrix X;     // columns: principal vectors of the block at 2, then eigvec at 7
    Matrix oracle_projector;  // X * diag(1,1,0) * X^-1
};

JordanExample jordan_example() {
    Matrix J = Matrix::Zero(3, 3);
    J(0, 0) = 2.0;
    J(0, 1) = 1.0;
    J(1, 1) = 2.0;
    J(2, 2) = 7.0;
    Matrix X(3, 3);
    X << 1.0, 0.5, 0.25, 0.0, 1.0, 0.5, 0.5, 0.0, 1.0;
    const Matrix Xinv = solve_linear(X, Matrix::Identity(3, 3));
    Matrix indicator = Matrix::Zero(3, 3);
    indicator(0, 0) = indicator(1, 1) = 1.0;
    return {X * J * Xinv, X, X * indicator * Xinv};
}

}  // namespace

TEST_CASE("contour validation and node layout", "[contour]") {
    REQUIRE_THROWS_AS(Contour(Complex(0.0), -1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(Contour(Complex(0.0), 1.0, 3), std::invalid_argument);
    const Contour c(Complex(2.0, 1.0), 0.5, 8);
    REQUIRE(std::abs(c.node(0, 8) - Complex(2.5, 1.0)) <= 1e-15);
    REQUIRE(std::abs(c.node(4, 8) - Complex(1.5, 1.0)) <= 1e-14);
    REQUIRE(c.arc_length() == Catch::Approx(std::numbers::pi).margin(1e-15));
}

TEST_CASE("contour placement halves the distance to the nearest excluded point", "[contour]") {
    const Contour c = place_contour(Complex(2.0), {Complex(6.0)});
    REQUIRE(c.center == Complex(2.0));
    REQUIRE(c.radius == Catch::Approx(1.0).margin(1e-15));  // origin is the nearest exclusion

    const Contour far = place_contour(Complex(10.0), {Complex(11.0), Complex(-3.0)});
    REQUIRE(far.radius == Catch::Approx(0.5).margin(1e-15));

    REQUIRE_THROWS_AS(place_contour(Complex(0.0), {}), std::invalid_argument);
    REQUIRE_THROWS_AS(place_contour(Complex(3.0), {Complex(3.0)}), std::invalid_argument);
}

TEST_CASE("resolvent norm on normal matrices equals inverse distance", "[contour]") {
    const GramPtr id2 = Gram::identity(2);
    REQUIRE(resolvent_norm(diag2(1.0, 3.0), Complex(2.0), *id2) ==
            Catch::Approx(1.0).margin(1e-13));
    const GramPtr id1 = Gram::identity(1);
    REQUIRE(resolvent_norm(Matrix::Zero(1, 1), Complex(4.0), *id1) ==
            Catch::Approx(0.25).margin(1e-15));
}

TEST_CASE("resolvent norm of a nonnormal matrix matches the inverse svd", "[contour]") {
    Matrix L = Matrix::Zero(2, 2);
    L(0, 1) = 100.0;
    // (I - L)^-1 written out by hand.
    Matrix Rinv(2, 2);
    Rinv << 1.0, 100.0, 0.0, 1.0;
    const double oracle = spectral_norm(Rinv);
    const GramPtr id2 = Gram::identity(2);
    REQUIRE(std::abs(resolvent_norm(L, Complex(1.0), *id2) - oracle) <= 1e-10 * oracle);
}

TEST_CASE("resolvent norm under a weighted inner product", "[contour]") {
    Rng rng(83);
    const Matrix R = rng.gaussian_matrix(5, 5);
    const Matrix G = R * R.adjoint() + 5.0 * Matrix::Identity(5, 5);
    const GramPtr gram = Gram::make(G, "H");
    const Matrix L = rng.gaussian_matrix(5, 5);
    const Complex z(4.0, 2.0);

    Matrix M = -L;
    M.diagonal().array() += z;
    const Matrix Rz = solve_linear(M, Matrix::Identity(5, 5));
    Eigen::SelfAdjointEigenSolver<Matrix> es(G);
    const double oracle = spectral_norm(es.operatorSqrt() * Rz * es.operatorInverseSqrt());
    REQUIRE(resolvent_norm(L, z, *gram) == Catch::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("resolvent norm flags spectral hits", "[contour]") {
    const GramPtr id2 = Gram::identity(2);
    REQUIRE_THROWS_AS(resolvent_norm(diag2(1.0, 3.0), Complex(1.0), *id2), std::runtime_error);
}

TEST_CASE("dunford projector isolates a simple eigenvalue", "[contour]") {
    const GramPtr id2 = Gram::identity(2);
    const Matrix E = dunford_projector(diag2(1.0, 5.0), Contour(Complex(1.0), 1.0), *id2);
    Matrix expect = Matrix::Zero(2, 2);
    expect(0, 0) = 1.0;
    REQUIRE(spectral_norm(E - expect) <= 1e-10);
}

TEST_CASE("empty contour integrates to zero", "[contour]") {
    const GramPtr id2 = Gram::identity(2);
    const Matrix E = dunford_projector(diag2(1.0, 5.0), Contour(Complex(3.0), 0.5), *id2);
    REQUIRE(spectral_norm(E) <= 1e-10);
}

TEST_CASE("contour enclosing the whole spectrum yields the identity", "[contour]") {
    const GramPtr id3 = Gram::identity(3);
    const JordanExample ex = jordan_example();
    const Matrix E = dunford_projector(ex.L, Contour(Complex(4.0), 8.0), *id3);
    REQUIRE(spectral_norm(E - Matrix::Identity(3, 3)) <= 1e-9);
}

TEST_CASE("dunford projector around a defective eigenvalue", "[contour]") {
    const GramPtr id3 = Gram::identity(3);
    const JordanExample ex = jordan_example();
    const Matrix E = dunford_projector(ex.L, Contour(Complex(2.0), 1.0), *id3);
    REQUIRE(spectral_norm(E - ex.oracle_projector) <= 1e-9);
    REQUIRE(spectral_norm(E * E - E) <= 1e-9);
    REQUIRE(spectral_norm(E * ex.L - ex.L * E) <= 1e-9 * spectral_norm(ex.L));
}

TEST_CASE("eigenvalue sitting on the contour is rejected", "[contour]") {
    const GramPtr id2 = Gram::identity(2);
    // The first quadrature node lands exactly on the eigenvalue at 1.
    REQUIRE_THROWS_AS(dunford_projector(diag2(1.0, 5.0), Contour(Complex(0.0), 1.0), *id2),
                      std::runtime_error);
}

TEST_CASE("adaptive doubling recovers from a coarse starting grid", "[contour]") {
    const GramPtr id2 = Gram::identity(2);
    const Matrix L = diag2(0.6, 1.8);
    const Matrix E = dunford_projector(L, Contour(Complex(0.0), 1.0, 4), *id2);
    Matrix expect = Matrix::Zero(2, 2);
    expect(0, 0) = 1.0;
    REQUIRE(spectral_norm(E - expect) <= 1e-9);
}

TEST_CASE("quadrature error decays geometrically on a normal matrix", "[contour]") {
    const Matrix L = diag2(0.6, 1.8);
    Matrix exact = Matrix::Zero(2, 2);
    exact(0, 0) = 1.0;
    const Contour c(Complex(0.0), 1.0);
    double prev = spectral_norm(dunford_quadrature(L, c, 8) - exact);
    for (int q = 16; q <= 128; q *= 2) {
        const double err = spectral_norm(dunford_quadrature(L, c, q) - exact);
        if (prev > 1e-11) REQUIRE((err <= 0.1 * prev || err <= 1e-12));
        prev = err;
    }
    REQUIRE(prev <= 1e-12);
}

TEST_CASE("projector commutes with its matrix", "[contour]") {
    Rng rng(89);
    const Matrix U = rng.haar_unitary(6);
    Vector d(6);
    d << 1.0, 1.1, 3.0, 3.2, 5.0, 8.0;
    const Matrix L = U * d.asDiagonal() * U.adjoint();
    const GramPtr id6 = Gram::identity(6);
    const Matrix E = dunford_projector(L, Contour(Complex(3.1), 0.9), *id6);
    REQUIRE(spectral_norm(E * L - L * E) <= 1e-9 * spectral_norm(L));
    // The enclosed pair {3.0, 3.2} gives a rank-2 orthogonal projector here.
    REQUIRE(spectral_norm(E - E.adjoint()) <= 1e-9);
    REQUIRE(numerical_rank(E) == 2);
}

TEST_CASE("invariant subspace frames and multiplicities", "[contour]") {
    const GramPtr id2 = Gram::identity(2);
    const Subspace one = invariant_subspace(diag2(1.0, 0.0), id2);
    REQUIRE(one.dim() == 1);
    REQUIRE((one.frame.col(0) - Vector::Unit(2, 0)).norm() <= 1e-13);

    const Subspace none = invariant_subspace(Matrix::Zero(2, 2), id2);
    REQUIRE(none.dim() == 0);

    const GramPtr id3 = Gram::identity(3);
    const JordanExample ex = jordan_example();
    const Matrix E = dunford_projector(ex.L, Contour(Complex(2.0), 1.0), *id3);
    const Subspace inv = invariant_subspace(E, id3);
    REQUIRE(inv.dim() == 2);
    const Subspace oracle = orthonormalize(ex.X.leftCols(2), id3);
    REQUIRE(containment_gap(oracle, inv) <= 1e-8);
}

TEST_CASE("invariant subspace rejects non-idempotents", "[contour]") {
    const GramPtr id2 = Gram::identity(2);
    REQUIRE_THROWS_AS(invariant_subspace(diag2(2.0, 0.0), id2), std::invalid_argument);
}

TEST_CASE("epsilon certificates on normal matrices", "[contour]") {
    const GramPtr id1 = Gram::identity(1);
    REQUIRE(epsilon_on_contour(Matrix::Zero(1, 1), Contour(Complex(3.0), 1.0), *id1) ==
            Catch::Approx(2.0).margin(1e-12));
    const GramPtr id2 = Gram::identity(2);
    REQUIRE(epsilon_on_contour(diag2(1.0, 5.0), Contour(Complex(3.0), 1.0), *id2) ==
            Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("epsilon equals nearest node distance for normal matrices", "[contour]") {
    Rng rng(97);
    const Matrix U = rng.haar_unitary(5);
    Vector d(5);
    d << Complex(0.2, 0.1), Complex(1.5, -0.4), Complex(2.0, 2.0), Complex(-1.0, 0.3),
        Complex(4.0, 0.0);
    const Matrix L = U * d.asDiagonal() * U.adjoint();
    const Contour c(Complex(0.9, 0.4), 0.55, 64);
    double nearest = std::numeric_limits<double>::infinity();
    for (int j = 0; j < c.nodes; ++j)
        for (int i = 0; i < 5; ++i) nearest = std::min(nearest, std::abs(c.node(j, 64) - d(i)));
    const GramPtr id5 = Gram::identity(5);
    REQUIRE(std::abs(epsilon_on_contour(L, c, *id5) - nearest) <= 1e-10);
}

TEST_CASE("epsilon never exceeds the distance to the spectrum", "[contour]") {
    // Upper triangular, so the diagonal is the spectrum but the resolvent is
    // inflated by the coupling.
    Matrix L = Matrix::Zero(4, 4);
    L.diagonal() << Complex(0.0), Complex(0.5, 0.2), Complex(2.0), Complex(2.5);
    L(0, 1) = 3.0;
    L(1, 2) = 4.0;
    L(0, 3) = 2.0;
    const Contour c(Complex(1.2, 0.1), 0.8, 32);
    double nearest = std::numeric_limits<double>::infinity();
    for (int j = 0; j < c.nodes; ++j)
        for (int i = 0; i < 4; ++i)
            nearest = std::min(nearest, std::abs(c.node(j, 32) - L(i, i)));
    const GramPtr id4 = Gram::identity(4);
    REQUIRE(epsilon_on_contour(L, c, *id4) <= nearest + 1e-12);
}
