#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "dance/kernels.hpp"
#include "dance/rng.hpp"
#include "testutil.hpp"

using namespace dance;
namespace k = dance::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-2.0, 2.0);
    return v;
}

} // namespace

TEST_CASE("backend dispatch honors overrides") {
    const k::Backend original = k::active_backend();
    k::set_backend(k::Backend::Scalar);
    CHECK(k::active_backend() == k::Backend::Scalar);
    if (k::avx2_supported()) {
        k::set_backend(k::Backend::Avx2);
        CHECK(k::active_backend() == k::Backend::Avx2);
    }
    k::set_backend(original);
}

TEST_CASE("avx2 gemm is bit-identical to the scalar reference") {
    if (!k::avx2_supported()) return; // nothing to compare on this host
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const auto m = static_cast<std::size_t>(rng.uniform_int(1, 17));
        const auto kk = static_cast<std::size_t>(rng.uniform_int(1, 17));
        const auto n = static_cast<std::size_t>(rng.uniform_int(1, 17));
        const auto a = random_vec(m * kk, rng);
        const auto b = random_vec(kk * n, rng);
        std::vector<double> c0(m * n, 0.5), c1(m * n, 0.5);
        const bool acc = trial % 2 == 0;
        k::scalar::gemm(m, kk, n, a.data(), b.data(), c0.data(), acc);
        k::avx2::gemm(m, kk, n, a.data(), b.data(), c1.data(), acc);
        CHECK(std::memcmp(c0.data(), c1.data(), m * n * sizeof(double)) == 0);
    }
}

TEST_CASE("avx2 elementwise kernels are bit-identical to scalar") {
    if (!k::avx2_supported()) return;
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const auto n = static_cast<std::size_t>(rng.uniform_int(1, 70));
        const auto x = random_vec(n, rng);
        const auto dy = random_vec(n, rng);
        const double alpha = rng.uniform(-3.0, 3.0);

        std::vector<double> y0(n), y1(n);
        k::scalar::relu(n, x.data(), y0.data());
        k::avx2::relu(n, x.data(), y1.data());
        CHECK(std::memcmp(y0.data(), y1.data(), n * sizeof(double)) == 0);

        k::scalar::relu_backward(n, x.data(), dy.data(), y0.data());
        k::avx2::relu_backward(n, x.data(), dy.data(), y1.data());
        CHECK(std::memcmp(y0.data(), y1.data(), n * sizeof(double)) == 0);

        auto a0 = random_vec(n, rng);
        auto a1 = a0;
        k::scalar::axpy(n, alpha, x.data(), a0.data());
        k::avx2::axpy(n, alpha, x.data(), a1.data());
        CHECK(std::memcmp(a0.data(), a1.data(), n * sizeof(double)) == 0);

        k::scalar::scale(n, alpha, a0.data());
        k::avx2::scale(n, alpha, a1.data());
        CHECK(std::memcmp(a0.data(), a1.data(), n * sizeof(double)) == 0);

        k::scalar::add(n, x.data(), a0.data());
        k::avx2::add(n, x.data(), a1.data());
        CHECK(std::memcmp(a0.data(), a1.data(), n * sizeof(double)) == 0);
    }
}

TEST_CASE("gemm matches a naive triple loop exactly") {
    Rng rng(3);
    const std::size_t m = 5, kk = 7, n = 3;
    const auto a = random_vec(m * kk, rng);
    const auto b = random_vec(kk * n, rng);
    std::vector<double> c(m * n);
    k::gemm(m, kk, n, a.data(), b.data(), c.data());
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t l = 0; l < kk; ++l) acc += a[i * kk + l] * b[l * n + j];
            CHECK(c[i * n + j] == acc);
        }
    }
}
