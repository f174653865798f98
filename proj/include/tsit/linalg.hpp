#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace tsit {

// Cyclic Jacobi eigendecomposition of a symmetric matrix (double precision).
// a: n*n row-major, symmetric (only the input values are read; the buffer is
// destroyed). Outputs eigenvalues (unsorted) and eigenvectors as COLUMNS of
// the row-major matrix V: A = V diag(e) V^T.
inline void jacobi_eigen_sym(std::vector<double> a, std::size_t n, std::vector<double>& eigvals,
                             std::vector<double>& eigvecs, std::size_t max_sweeps = 64) {
    if (a.size() != n * n) throw std::invalid_argument("jacobi_eigen_sym: bad buffer size");
    eigvecs.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) eigvecs[i * n + i] = 1.0;

    auto off_norm = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += a[i * n + j] * a[i * n + j];
        return std::sqrt(2.0 * s);
    };
    double fro = 0.0;
    for (double v : a) fro += v * v;
    fro = std::sqrt(fro);
    const double tol = 1e-14 * (fro > 0 ? fro : 1.0);

    for (std::size_t sweep = 0; sweep < max_sweeps && off_norm() > tol; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (std::abs(apq) <= tol / double(n)) continue;
                const double app = a[p * n + p];
                const double aqq = a[q * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p];
                    const double akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k];
                    const double aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = eigvecs[k * n + p];
                    const double vkq = eigvecs[k * n + q];
                    eigvecs[k * n + p] = c * vkp - s * vkq;
                    eigvecs[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    eigvals.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) eigvals[i] = a[i * n + i];
}

// Largest singular value of an m x n row-major matrix via the eigenvalues of
// the smaller Gram matrix. Independent of any power-iteration code path.
inline double largest_singular_value(const std::vector<double>& w, std::size_t m, std::size_t n) {
    const bool small_rows = m <= n;
    const std::size_t d = small_rows ? m : n;
    std::vector<double> gram(d * d, 0.0);
    if (small_rows) {
        // G = W W^T
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = i; j < m; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < n; ++k) s += w[i * n + k] * w[j * n + k];
                gram[i * m + j] = gram[j * m + i] = s;
            }
    } else {
        // G = W^T W
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < m; ++k) s += w[k * n + i] * w[k * n + j];
                gram[i * n + j] = gram[j * n + i] = s;
            }
    }
    std::vector<double> vals, vecs;
    jacobi_eigen_sym(std::move(gram), d, vals, vecs);
    double lmax = 0.0;
    for (double v : vals) lmax = std::max(lmax, v);
    return std::sqrt(std::max(0.0, lmax));
}

}  // namespace tsit
