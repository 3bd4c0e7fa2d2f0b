#pragma once

#include <cstddef>

namespace dance::kernels {

/// Kernel backends. Avx2 variants are written so that every output element
/// is produced by the same sequence of IEEE mul/add operations as the scalar
/// reference (vectorization only across independent lanes, no FMA, no
/// reassociation), so the two backends agree bit-for-bit. The equivalence
/// suite in tests/test_kernels.cpp asserts exactly that.
enum class Backend { Scalar, Avx2 };

bool avx2_supported();

/// Active backend. Resolved once from DANCE_KERNELS=scalar|avx2|auto
/// (default auto) and CPU detection; tests may override via set_backend.
Backend active_backend();
void set_backend(Backend b);
const char* backend_name(Backend b);

// C (m x n) = A (m x k) * B (k x n); accumulate adds into C instead.
void gemm(std::size_t m, std::size_t k, std::size_t n,
          const double* a, const double* b, double* c, bool accumulate = false);

void relu(std::size_t n, const double* x, double* y);
// dx = dy where x > 0, else 0.
void relu_backward(std::size_t n, const double* x, const double* dy, double* dx);
// y += alpha * x
void axpy(std::size_t n, double alpha, const double* x, double* y);
// x *= alpha
void scale(std::size_t n, double alpha, double* x);
// y += x
void add(std::size_t n, const double* x, double* y);

namespace scalar {
void gemm(std::size_t m, std::size_t k, std::size_t n,
          const double* a, const double* b, double* c, bool accumulate);
void relu(std::size_t n, const double* x, double* y);
void relu_backward(std::size_t n, const double* x, const double* dy, double* dx);
void axpy(std::size_t n, double alpha, const double* x, double* y);
void scale(std::size_t n, double alpha, double* x);
void add(std::size_t n, const double* x, double* y);
} // namespace scalar

namespace avx2 {
// Compiled only on x86-64; callers must check avx2_supported() first.
void gemm(std::size_t m, std::size_t k, std::size_t n,
          const double* a, const double* b, double* c, bool accumulate);
void relu(std::size_t n, const double* x, double* y);
void relu_backward(std::size_t n, const double* x, const double* dy, double* dx);
void axpy(std::size_t n, double alpha, const double* x, double* y);
void scale(std::size_t n, double alpha, double* x);
void add(std::size_t n, const double* x, double* y);
} // namespace avx2

} // namespace dance::kernels
