#pragma once

// Deterministic random inputs for studies and tests. The generator and the
// Gaussian transform are fixed here so that a given seed produces the same
// matrices on every platform, which the byte-identical CSV guarantee needs.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

namespace eiglab {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller (no cached spare, keeps the stream
    // position independent of call history).
    double gaussian() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    std::complex<double> cgaussian() {
        const double re = gaussian();
        const double im = gaussian();
        return {re * M_SQRT1_2, im * M_SQRT1_2};
    }

    Eigen::MatrixXcd gaussian_matrix(Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXcd M(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i)
                M(i, j) = cgaussian();
        return M;
    }

    Eigen::VectorXcd gaussian_vector(Eigen::Index n) {
        Eigen::VectorXcd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = cgaussian();
        return v;
    }

    // Haar-distributed unitary: QR of a Gaussian matrix with the phase of the
    // R diagonal absorbed into Q.
    Eigen::MatrixXcd haar_unitary(Eigen::Index n) {
        const Eigen::MatrixXcd G = gaussian_matrix(n, n);
        Eigen::HouseholderQR<Eigen::MatrixXcd> qr(G);
        Eigen::MatrixXcd Q = qr.householderQ();
        const Eigen::MatrixXcd R = qr.matrixQR().triangularView<Eigen::Upper>();
        for (Eigen::Index j = 0; j < n; ++j) {
            const std::complex<double> d = R(j, j);
            const double a = std::abs(d);
            Q.col(j) *= (a > 0.0) ? d / a : 1.0;
        }
        return Q;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace eiglab
