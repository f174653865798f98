#pragma once

#include <cstddef>

namespace tsit {

// Row-major GEMM kernels. Accumulation over k is sequential per output
// element, so results are independent of any outer-loop partitioning.

// C[m x n] += A[m x k] * B[k x n]
template <typename T>
inline void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* A, const T* B, T* C) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* a_row = A + i * k;
        T* c_row = C + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T a = a_row[kk];
            if (a == T(0)) continue;
            const T* b_row = B + kk * n;
            for (std::size_t j = 0; j < n; ++j) c_row[j] += a * b_row[j];
        }
    }
}

// C[m x n] += A[m x k] * B[n x k]^T  (i.e. C[i][j] += sum_t A[i][t] * B[j][t])
template <typename T>
inline void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T* A, const T* B, T* C) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* a_row = A + i * k;
        T* c_row = C + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const T* b_row = B + j * k;
            T acc = T(0);
            for (std::size_t t = 0; t < k; ++t) acc += a_row[t] * b_row[t];
            c_row[j] += acc;
        }
    }
}

// out[n x m] = in[m x n]^T
template <typename T>
inline void transpose(std::size_t m, std::size_t n, const T* in, T* out) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = in[i * n + j];
    }
}

}  // namespace tsit
