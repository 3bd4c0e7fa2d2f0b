#include "dance/numkernel.hpp"

#include <cmath>
#include <string>

#include "dance/kernels.hpp"

namespace dance {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + shape_str(a) + " * " + shape_str(b));
    }
    Matrix c(a.rows(), b.cols());
    kernels::gemm(a.rows(), a.cols(), b.cols(), a.data(), b.data(), c.data());
    ensure_finite(c, "matmul");
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) { return matmul(a, transpose(b)); }

Matrix matmul_tn(const Matrix& a, const Matrix& b) { return matmul(transpose(a), b); }

std::pair<Matrix, std::vector<double>> l2_normalize_rows(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    std::vector<double> norms(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) sq += x(i, j) * x(i, j);
        const double norm = std::sqrt(sq);
        if (norm == 0.0) {
            throw ValueError("l2_normalize_rows: zero-norm row " + std::to_string(i));
        }
        norms[i] = norm;
        for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j) / norm;
    }
    ensure_finite(out, "l2_normalize_rows");
    return {std::move(out), std::move(norms)};
}

Matrix l2_normalize_backward(const Matrix& x, const std::vector<double>& norms,
                             const Matrix& d_xhat) {
    if (!x.same_shape(d_xhat) || norms.size() != x.rows()) {
        throw ShapeError("l2_normalize_backward: inconsistent shapes");
    }
    Matrix d_x(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double norm = norms[i];
        double dot = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) {
            dot += (x(i, j) / norm) * d_xhat(i, j);
        }
        for (std::size_t j = 0; j < x.cols(); ++j) {
            const double xhat = x(i, j) / norm;
            d_x(i, j) = (d_xhat(i, j) - xhat * dot) / norm;
        }
    }
    ensure_finite(d_x, "l2_normalize_backward");
    return d_x;
}

Matrix softmax_rows(const Matrix& z, double tau) {
    if (!(tau > 0.0)) throw ValueError("softmax_rows: tau must be positive");
    Matrix p(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        double mx = z(i, 0);
        for (std::size_t j = 1; j < z.cols(); ++j) mx = std::max(mx, z(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < z.cols(); ++j) {
            const double e = std::exp((z(i, j) - mx) / tau);
            p(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < z.cols(); ++j) p(i, j) /= sum;
    }
    ensure_finite(p, "softmax_rows");
    return p;
}

Matrix softmax_rows_backward(const Matrix& p, const Matrix& d_p, double tau) {
    if (!p.same_shape(d_p)) throw ShapeError("softmax_rows_backward: shape mismatch");
    Matrix d_z(p.rows(), p.cols());
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < p.cols(); ++j) dot += d_p(i, j) * p(i, j);
        for (std::size_t j = 0; j < p.cols(); ++j) {
            d_z(i, j) = p(i, j) * (d_p(i, j) - dot) / tau;
        }
    }
    return d_z;
}

Matrix relu_forward(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    kernels::relu(x.size(), x.data(), y.data());
    return y;
}

Matrix relu_backward(const Matrix& x, const Matrix& d_y) {
    if (!x.same_shape(d_y)) throw ShapeError("relu_backward: shape mismatch");
    Matrix d_x(x.rows(), x.cols());
    kernels::relu_backward(x.size(), x.data(), d_y.data(), d_x.data());
    return d_x;
}

Matrix affine_forward(const Matrix& x, const Matrix& w, const Matrix& b) {
    if (x.cols() != w.cols()) {
        throw ShapeError("affine_forward: input " + shape_str(x) + " vs weight " + shape_str(w));
    }
    ensure_shape(b, 1, w.rows(), "affine_forward bias");
    Matrix y = matmul_nt(x, w);
    for (std::size_t i = 0; i < y.rows(); ++i) {
        kernels::add(y.cols(), b.data(), y.row(i));
    }
    ensure_finite(y, "affine_forward");
    return y;
}

AffineGrads affine_backward(const Matrix& x, const Matrix& w, const Matrix& d_y) {
    if (d_y.rows() != x.rows() || d_y.cols() != w.rows()) {
        throw ShapeError("affine_backward: upstream " + shape_str(d_y));
    }
    AffineGrads g;
    g.d_x = matmul(d_y, w);
    g.d_w = matmul_tn(d_y, x);
    g.d_b = Matrix(1, w.rows());
    for (std::size_t i = 0; i < d_y.rows(); ++i) {
        kernels::add(d_y.cols(), d_y.row(i), g.d_b.data());
    }
    return g;
}

BatchNormState BatchNormState::make(std::size_t features, double epsilon, double momentum_bn) {
    BatchNormState s;
    s.gamma = Matrix(1, features, 1.0);
    s.beta = Matrix(1, features, 0.0);
    s.running_mean = Matrix(1, features, 0.0);
    s.running_var = Matrix(1, features, 1.0);
    s.epsilon = epsilon;
    s.momentum_bn = momentum_bn;
    return s;
}

Matrix batchnorm_forward(const Matrix& x, BatchNormState& state, bool training,
                         BatchNormCache* cache) {
    const std::size_t n = x.rows(), f = x.cols();
    ensure_shape(state.gamma, 1, f, "batchnorm gamma");
    if (training && n < 2) {
        throw ValueError("batchnorm_forward: training requires batch size >= 2");
    }
    Matrix y(n, f);
    Matrix x_hat(n, f);
    std::vector<double> mean(f), inv_std(f);
    for (std::size_t j = 0; j < f; ++j) {
        double mu, var;
        if (training) {
            mu = 0.0;
            for (std::size_t i = 0; i < n; ++i) mu += x(i, j);
            mu /= static_cast<double>(n);
            var = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = x(i, j) - mu;
                var += d * d;
            }
            var /= static_cast<double>(n);
            const double m = state.momentum_bn;
            const double var_unbiased = var * static_cast<double>(n) / static_cast<double>(n - 1);
            state.running_mean(0, j) = (1.0 - m) * state.running_mean(0, j) + m * mu;
            state.running_var(0, j) = (1.0 - m) * state.running_var(0, j) + m * var_unbiased;
        } else {
            mu = state.running_mean(0, j);
            var = state.running_var(0, j);
        }
        const double istd = 1.0 / std::sqrt(var + state.epsilon);
        mean[j] = mu;
        inv_std[j] = istd;
        for (std::size_t i = 0; i < n; ++i) {
            const double xh = (x(i, j) - mu) * istd;
            x_hat(i, j) = xh;
            y(i, j) = state.gamma(0, j) * xh + state.beta(0, j);
        }
    }
    ensure_finite(y, "batchnorm_forward");
    if (cache) {
        cache->x = x;
        cache->x_hat = std::move(x_hat);
        cache->mean = std::move(mean);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const BatchNormState& state,
                                  const Matrix& d_y) {
    const std::size_t n = cache.x.rows(), f = cache.x.cols();
    if (!d_y.same_shape(cache.x)) throw ShapeError("batchnorm_backward: shape mismatch");
    BatchNormGrads g;
    g.d_x = Matrix(n, f);
    g.d_gamma = Matrix(1, f);
    g.d_beta = Matrix(1, f);
    const double nn = static_cast<double>(n);
    for (std::size_t j = 0; j < f; ++j) {
        double d_gamma = 0.0, d_beta = 0.0, sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dy = d_y(i, j);
            d_gamma += dy * cache.x_hat(i, j);
            d_beta += dy;
            const double dxh = dy * state.gamma(0, j);
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * cache.x_hat(i, j);
        }
        g.d_gamma(0, j) = d_gamma;
        g.d_beta(0, j) = d_beta;
        for (std::size_t i = 0; i < n; ++i) {
            const double dxh = d_y(i, j) * state.gamma(0, j);
            g.d_x(i, j) = cache.inv_std[j] *
                          (dxh - sum_dxhat / nn - cache.x_hat(i, j) * sum_dxhat_xhat / nn);
        }
    }
    return g;
}

double lr_schedule(std::size_t iter, const OptimizerState& opt) {
    const double frac = opt.total_iters > 0
                            ? static_cast<double>(iter) / static_cast<double>(opt.total_iters)
                            : 0.0;
    return opt.base_lr * std::pow(1.0 + opt.gamma_sched * frac, -opt.power_sched);
}

void sgd_step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads,
              OptimizerState& opt, double lr) {
    if (params.size() != grads.size()) {
        throw ShapeError("sgd_step: parameter/gradient tensor count mismatch");
    }
    if (opt.velocity.empty()) {
        opt.velocity.resize(params.size());
        for (std::size_t t = 0; t < params.size(); ++t) {
            opt.velocity[t].assign(params[t].n, 0.0);
        }
    }
    if (opt.velocity.size() != params.size()) {
        throw ShapeError("sgd_step: velocity tensor count mismatch");
    }
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (params[t].n != grads[t].n || opt.velocity[t].size() != params[t].n) {
            throw ShapeError("sgd_step: shape mismatch in tensor " + std::to_string(t));
        }
        double* p = params[t].data;
        const double* gr = grads[t].data;
        double* v = opt.velocity[t].data();
        for (std::size_t i = 0; i < params[t].n; ++i) {
            const double g = gr[i] + opt.weight_decay * p[i];
            v[i] = opt.momentum * v[i] + g;
            const double step = opt.nesterov ? g + opt.momentum * v[i] : v[i];
            p[i] -= lr * step;
        }
    }
}

} // namespace dance
