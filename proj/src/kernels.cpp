#include "dance/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace dance::kernels {

bool avx2_supported() {
#if (defined(__x86_64__) || defined(_M_X64)) && defined(__GNUC__)
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

namespace {

Backend resolve_initial() {
    if (const char* env = std::getenv("DANCE_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::Scalar;
        if (std::strcmp(env, "avx2") == 0 && avx2_supported()) return Backend::Avx2;
    }
    return avx2_supported() ? Backend::Avx2 : Backend::Scalar;
}

Backend& backend_slot() {
    static Backend b = resolve_initial();
    return b;
}

} // namespace

Backend active_backend() { return backend_slot(); }

void set_backend(Backend b) {
    if (b == Backend::Avx2 && !avx2_supported()) b = Backend::Scalar;
    backend_slot() = b;
}

const char* backend_name(Backend b) {
    return b == Backend::Avx2 ? "avx2" : "scalar";
}

void gemm(std::size_t m, std::size_t k, std::size_t n,
          const double* a, const double* b, double* c, bool accumulate) {
    if (active_backend() == Backend::Avx2) {
        avx2::gemm(m, k, n, a, b, c, accumulate);
    } else {
        scalar::gemm(m, k, n, a, b, c, accumulate);
    }
}

void relu(std::size_t n, const double* x, double* y) {
    if (active_backend() == Backend::Avx2) {
        avx2::relu(n, x, y);
    } else {
        scalar::relu(n, x, y);
    }
}

void relu_backward(std::size_t n, const double* x, const double* dy, double* dx) {
    if (active_backend() == Backend::Avx2) {
        avx2::relu_backward(n, x, dy, dx);
    } else {
        scalar::relu_backward(n, x, dy, dx);
    }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
    if (active_backend() == Backend::Avx2) {
        avx2::axpy(n, alpha, x, y);
    } else {
        scalar::axpy(n, alpha, x, y);
    }
}

void scale(std::size_t n, double alpha, double* x) {
    if (active_backend() == Backend::Avx2) {
        avx2::scale(n, alpha, x);
    } else {
        scalar::scale(n, alpha, x);
    }
}

void add(std::size_t n, const double* x, double* y) {
    if (active_backend() == Backend::Avx2) {
        avx2::add(n, x, y);
    } else {
        scalar::add(n, x, y);
    }
}

} // namespace dance::kernels
