#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dance/numkernel.hpp"
#include "testutil.hpp"

using namespace dance;
using namespace dance::test;

TEST_CASE("matmul identity and hand examples") {
    Matrix eye(2, 2);
    eye(0, 0) = eye(1, 1) = 1.0;
    Rng rng(1);
    Matrix m = random_matrix(2, 3, rng);
    CHECK(matmul(eye, m) == m);

    Matrix a(2, 2, {1, 2, 3, 4});
    Matrix b(2, 1, {0, 1});
    Matrix c = matmul(a, b);
    CHECK(c(0, 0) == 2.0);
    CHECK(c(1, 0) == 4.0);

    CHECK_THROWS_AS(matmul(a, Matrix(3, 2)), ShapeError);
}

TEST_CASE("matmul transpose variants agree with explicit transposition") {
    Rng rng(2);
    Matrix a = random_matrix(4, 6, rng);
    Matrix b = random_matrix(5, 6, rng);
    CHECK(matmul_nt(a, b) == matmul(a, transpose(b)));
    Matrix c = random_matrix(4, 5, rng);
    CHECK(matmul_tn(a, c) == matmul(transpose(a), c));
}

TEST_CASE("l2_normalize_rows basics") {
    Matrix x(1, 2, {3.0, 4.0});
    auto [xh, norms] = l2_normalize_rows(x);
    CHECK(xh(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(xh(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(norms[0] == doctest::Approx(5.0).epsilon(1e-15));

    Matrix unit(1, 3, {1.0, 0.0, 0.0});
    auto [uh, un] = l2_normalize_rows(unit);
    CHECK(uh == unit);
    CHECK(un[0] == 1.0);

    CHECK_THROWS_AS(l2_normalize_rows(Matrix(2, 3)), ValueError);
}

TEST_CASE("l2_normalize_backward projection identities") {
    // unit-norm input, upstream orthogonal to x_hat -> gradient passes through
    Matrix x(1, 2, {1.0, 0.0});
    auto [xh, norms] = l2_normalize_rows(x);
    Matrix d_orth(1, 2, {0.0, 0.7});
    CHECK(l2_normalize_backward(x, norms, d_orth) == d_orth);

    // upstream parallel to x_hat -> zero gradient
    Matrix d_par(1, 2, {2.5, 0.0});
    Matrix g = l2_normalize_backward(x, norms, d_par);
    CHECK(g(0, 0) == 0.0);
    CHECK(g(0, 1) == 0.0);
}

TEST_CASE("l2_normalize_backward matches finite differences") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix x = random_matrix(3, 4, rng, 0.2, 1.5); // bounded away from zero norm
        Matrix w = random_matrix(3, 4, rng);
        auto objective = [&]() {
            auto [xh, n] = l2_normalize_rows(x);
            double s = 0.0;
            for (std::size_t i = 0; i < xh.size(); ++i) {
                s += w.data()[i] * xh.data()[i] * xh.data()[i];
            }
            return s;
        };
        auto [xh, norms] = l2_normalize_rows(x);
        Matrix d_xhat(3, 4);
        for (std::size_t i = 0; i < xh.size(); ++i) {
            d_xhat.data()[i] = 2.0 * w.data()[i] * xh.data()[i];
        }
        Matrix analytic = l2_normalize_backward(x, norms, d_xhat);
        auto numeric = fd_gradient(objective, x.data(), x.size());
        CHECK(max_rel_err(analytic.storage(), numeric) < 1e-4);
    }
}

TEST_CASE("softmax_rows properties and closed forms") {
    Matrix equal(1, 5, std::vector<double>(5, 1.3));
    Matrix p = softmax_rows(equal, 1.0);
    for (std::size_t j = 0; j < 5; ++j) CHECK(p(0, j) == doctest::Approx(0.2).epsilon(1e-14));

    Matrix z(1, 2, {1.0, 0.0});
    Matrix q = softmax_rows(z, 1.0);
    CHECK(q(0, 0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
    CHECK(q(0, 1) == doctest::Approx(0.2689414213699951).epsilon(1e-12));

    CHECK_THROWS_AS(softmax_rows(z, 0.0), ValueError);
    CHECK_THROWS_AS(softmax_rows(z, -1.0), ValueError);

    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix logits = random_matrix(4, 6, rng, -3.0, 3.0);
        for (double tau : {0.01, 0.05, 1.0, 10.0}) {
            Matrix pt = softmax_rows(logits, tau);
            const bool sharp = tau < 0.5; // entries may round to exactly 0 or 1
            for (std::size_t i = 0; i < 4; ++i) {
                double sum = 0.0;
                std::size_t arg_in = 0, arg_out = 0;
                for (std::size_t j = 0; j < 6; ++j) {
                    sum += pt(i, j);
                    if (sharp) {
                        CHECK(pt(i, j) >= 0.0);
                        CHECK(pt(i, j) <= 1.0);
                    } else {
                        CHECK(pt(i, j) > 0.0);
                        CHECK(pt(i, j) < 1.0);
                    }
                    if (logits(i, j) > logits(i, arg_in)) arg_in = j;
                    if (pt(i, j) > pt(i, arg_out)) arg_out = j;
                }
                CHECK(std::fabs(sum - 1.0) <= 1e-12);
                CHECK(arg_in == arg_out);
            }
        }
    }
    // small tau concentrates mass on a clear argmax
    Matrix gap(1, 4, {0.9, 0.4, 0.1, -0.2});
    Matrix sharp = softmax_rows(gap, 0.01);
    CHECK(sharp(0, 0) > 0.99);
    Matrix soft = softmax_rows(gap, 10.0);
    CHECK(soft(0, 0) < 0.5);
}

TEST_CASE("softmax_rows_backward matches finite differences") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix z = random_matrix(3, 5, rng, -2.0, 2.0);
        Matrix w = random_matrix(3, 5, rng);
        const double tau = trial % 2 == 0 ? 1.0 : 0.31;
        auto objective = [&]() {
            Matrix p = softmax_rows(z, tau);
            double s = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) s += w.data()[i] * p.data()[i];
            return s;
        };
        Matrix p = softmax_rows(z, tau);
        Matrix analytic = softmax_rows_backward(p, w, tau);
        auto numeric = fd_gradient(objective, z.data(), z.size());
        CHECK(max_rel_err(analytic.storage(), numeric) < 1e-4);
    }
}

TEST_CASE("relu forward and backward") {
    Matrix neg(2, 2, {-1.0, -0.5, -2.0, -0.1});
    Matrix zeros = relu_forward(neg);
    for (double v : zeros.storage()) CHECK(v == 0.0);

    Matrix pos(2, 2, {1.0, 0.5, 2.0, 0.1});
    CHECK(relu_forward(pos) == pos);
    Matrix dy(2, 2, {0.3, -0.4, 0.5, 0.6});
    CHECK(relu_backward(pos, dy) == dy);

    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix x = random_matrix(3, 4, rng);
        for (double& v : x.storage()) {
            if (std::fabs(v) < 0.05) v = 0.1; // keep away from the kink
        }
        Matrix w = random_matrix(3, 4, rng);
        auto objective = [&]() {
            Matrix y = relu_forward(x);
            double s = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) s += w.data()[i] * y.data()[i];
            return s;
        };
        Matrix analytic = relu_backward(x, w);
        auto numeric = fd_gradient(objective, x.data(), x.size());
        CHECK(max_rel_err(analytic.storage(), numeric) < 1e-4);
    }
}

TEST_CASE("affine forward/backward against finite differences") {
    Rng rng(9);
    Matrix x = random_matrix(4, 3, rng);
    Matrix w = random_matrix(5, 3, rng);
    Matrix b = random_matrix(1, 5, rng);
    Matrix up = random_matrix(4, 5, rng);
    auto objective = [&]() {
        Matrix y = affine_forward(x, w, b);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += up.data()[i] * y.data()[i];
        return s;
    };
    AffineGrads g = affine_backward(x, w, up);
    CHECK(max_rel_err(g.d_x.storage(), fd_gradient(objective, x.data(), x.size())) < 1e-4);
    CHECK(max_rel_err(g.d_w.storage(), fd_gradient(objective, w.data(), w.size())) < 1e-4);
    CHECK(max_rel_err(g.d_b.storage(), fd_gradient(objective, b.data(), b.size())) < 1e-4);
}

TEST_CASE("batchnorm forward basics") {
    // zero-mean unit-variance column stays put (up to the epsilon correction)
    Matrix x(4, 1, {-1.3416407864998738, -0.4472135954999579, 0.4472135954999579,
                    1.3416407864998738});
    BatchNormState st = BatchNormState::make(1);
    Matrix y = batchnorm_forward(x, st, true);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(y(i, 0) == doctest::Approx(x(i, 0)).epsilon(1e-4));
    }

    // constant column collapses to beta
    Matrix c(3, 2, std::vector<double>(6, 7.5));
    BatchNormState st2 = BatchNormState::make(2);
    st2.beta(0, 0) = -0.25;
    st2.beta(0, 1) = 1.5;
    Matrix yc = batchnorm_forward(c, st2, true);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(yc(i, 0) == doctest::Approx(-0.25).epsilon(1e-12));
        CHECK(yc(i, 1) == doctest::Approx(1.5).epsilon(1e-12));
    }

    CHECK_THROWS_AS(batchnorm_forward(Matrix(1, 2, {1.0, 2.0}), st2, true), ValueError);
}

TEST_CASE("batchnorm running statistics follow the momentum rule") {
    Rng rng(10);
    Matrix x = random_matrix(6, 2, rng);
    BatchNormState st = BatchNormState::make(2, 1e-5, 0.1);
    batchnorm_forward(x, st, true);
    for (std::size_t j = 0; j < 2; ++j) {
        double mu = 0.0;
        for (std::size_t i = 0; i < 6; ++i) mu += x(i, j);
        mu /= 6.0;
        double var = 0.0;
        for (std::size_t i = 0; i < 6; ++i) var += (x(i, j) - mu) * (x(i, j) - mu);
        const double unbiased = var / 5.0;
        CHECK(st.running_mean(0, j) == doctest::Approx(0.1 * mu).epsilon(1e-12));
        CHECK(st.running_var(0, j) == doctest::Approx(0.9 + 0.1 * unbiased).epsilon(1e-12));
    }
    // inference mode uses running stats and leaves them alone
    const Matrix rm = st.running_mean, rv = st.running_var;
    batchnorm_forward(x, st, false);
    CHECK(st.running_mean == rm);
    CHECK(st.running_var == rv);
}

TEST_CASE("batchnorm backward matches finite differences") {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        Matrix x = random_matrix(5, 3, rng);
        BatchNormState st = BatchNormState::make(3);
        for (double& v : st.gamma.storage()) v = rng.uniform(0.5, 1.5);
        for (double& v : st.beta.storage()) v = rng.uniform(-0.5, 0.5);
        Matrix up = random_matrix(5, 3, rng);
        auto objective = [&]() {
            BatchNormState local = st; // forward mutates running stats
            Matrix y = batchnorm_forward(x, local, true);
            double s = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) s += up.data()[i] * y.data()[i];
            return s;
        };
        BatchNormState local = st;
        BatchNormCache cache;
        batchnorm_forward(x, local, true, &cache);
        BatchNormGrads g = batchnorm_backward(cache, st, up);
        CHECK(max_rel_err(g.d_x.storage(), fd_gradient(objective, x.data(), x.size())) < 1e-4);
        CHECK(max_rel_err(g.d_gamma.storage(),
                          fd_gradient(objective, st.gamma.data(), st.gamma.size())) < 1e-4);
        CHECK(max_rel_err(g.d_beta.storage(),
                          fd_gradient(objective, st.beta.data(), st.beta.size())) < 1e-4);
    }
}

TEST_CASE("lr_schedule closed forms") {
    OptimizerState opt; // base_lr 0.01, gamma 10, p 0.75, total 10000
    CHECK(lr_schedule(0, opt) == 0.01);
    CHECK(lr_schedule(10000, opt) == doctest::Approx(0.01 * std::pow(11.0, -0.75)).epsilon(1e-12));
    CHECK(lr_schedule(10000, opt) == doctest::Approx(0.0016556).epsilon(1e-4));

    OptimizerState flat = opt;
    flat.gamma_sched = 0.0;
    CHECK(lr_schedule(0, flat) == 0.01);
    CHECK(lr_schedule(5000, flat) == 0.01);
    CHECK(lr_schedule(10000, flat) == 0.01);

    double prev = lr_schedule(0, opt);
    for (std::size_t i = 1; i <= 10000; i += 97) {
        const double cur = lr_schedule(i, opt);
        CHECK(cur <= prev);
        prev = cur;
    }
}

TEST_CASE("sgd_step degenerate and oracle cases") {
    // momentum 0, weight decay 0 -> plain gradient descent
    OptimizerState opt;
    opt.momentum = 0.0;
    opt.weight_decay = 0.0;
    std::vector<double> p{1.0, -2.0};
    std::vector<double> g{0.5, 0.25};
    sgd_step({{p.data(), 2}}, {{g.data(), 2}}, opt, 0.1);
    CHECK(p[0] == doctest::Approx(1.0 - 0.1 * 0.5).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(-2.0 - 0.1 * 0.25).epsilon(1e-15));

    // zero gradient, zero velocity, zero weight decay -> parameters unchanged
    OptimizerState opt2;
    opt2.weight_decay = 0.0;
    std::vector<double> p2{3.0};
    std::vector<double> g2{0.0};
    sgd_step({{p2.data(), 1}}, {{g2.data(), 1}}, opt2, 0.1);
    CHECK(p2[0] == 3.0);

    // two steps on f(x) = x^2 / 2 against a scalar hand simulation
    OptimizerState opt3;
    opt3.momentum = 0.9;
    opt3.weight_decay = 0.0;
    opt3.nesterov = true;
    double x = 1.0;
    double x_ref = 1.0, v_ref = 0.0;
    const double lr = 0.1;
    for (int step = 0; step < 2; ++step) {
        double grad = x;
        sgd_step({{&x, 1}}, {{&grad, 1}}, opt3, lr);
        const double g_ref = x_ref;
        v_ref = 0.9 * v_ref + g_ref;
        x_ref -= lr * (g_ref + 0.9 * v_ref);
    }
    CHECK(x == x_ref);

    CHECK_THROWS_AS(sgd_step({{&x, 1}}, {{&x, 1}, {&x, 1}}, opt3, lr), ShapeError);
}
