#include "dance/kernels.hpp"

#include <cstring>

namespace dance::kernels::scalar {

// Broadcast-over-columns ordering: C[i,j] accumulates A[i,l]*B[l,j] for
// l = 0..k-1 in that exact order. The AVX2 variant keeps the same ordering
// per element, which is what makes the two backends bit-identical.
void gemm(std::size_t m, std::size_t k, std::size_t n,
          const double* a, const double* b, double* c, bool accumulate) {
    if (!accumulate && m * n > 0) std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = a[i * k + l];
            const double* brow = b + l * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void relu(std::size_t n, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(std::size_t n, const double* x, const double* dy, double* dx) {
    for (std::size_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(std::size_t n, double alpha, double* x) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void add(std::size_t n, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

} // namespace dance::kernels::scalar
