#include "dance/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cstring>

namespace dance::kernels::avx2 {

// Vector lanes carry independent output columns; the reduction over l runs
// in the same order as the scalar kernel, with separate mul and add
// (no FMA), so every C[i,j] sees an identical rounding sequence.
void gemm(std::size_t m, std::size_t k, std::size_t n,
          const double* a, const double* b, double* c, bool accumulate) {
    if (!accumulate && m * n > 0) std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = a[i * k + l];
            const __m256d avv = _mm256_set1_pd(av);
            const double* brow = b + l * n;
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d cv = _mm256_loadu_pd(crow + j);
                __m256d bv = _mm256_loadu_pd(brow + j);
                cv = _mm256_add_pd(cv, _mm256_mul_pd(avv, bv));
                _mm256_storeu_pd(crow + j, cv);
            }
            for (; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void relu(std::size_t n, const double* x, double* y) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(std::size_t n, const double* x, const double* dy, double* dx) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        _mm256_storeu_pd(dx + i, _mm256_and_pd(_mm256_loadu_pd(dy + i), mask));
    }
    for (; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_add_pd(yv, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale(std::size_t n, double alpha, double* x) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), av));
    }
    for (; i < n; ++i) x[i] *= alpha;
}

void add(std::size_t n, const double* x, double* y) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) y[i] += x[i];
}

} // namespace dance::kernels::avx2

#else // non-x86: stubs, never dispatched to (avx2_supported() is false)

namespace dance::kernels::avx2 {

void gemm(std::size_t m, std::size_t k, std::size_t n,
          const double* a, const double* b, double* c, bool accumulate) {
    scalar::gemm(m, k, n, a, b, c, accumulate);
}
void relu(std::size_t n, const double* x, double* y) { scalar::relu(n, x, y); }
void relu_backward(std::size_t n, const double* x, const double* dy, double* dx) {
    scalar::relu_backward(n, x, dy, dx);
}
void axpy(std::size_t n, double alpha, const double* x, double* y) {
    scalar::axpy(n, alpha, x, y);
}
void scale(std::size_t n, double alpha, double* x) { scalar::scale(n, alpha, x); }
void add(std::size_t n, const double* x, double* y) { scalar::add(n, x, y); }

} // namespace dance::kernels::avx2

#endif
