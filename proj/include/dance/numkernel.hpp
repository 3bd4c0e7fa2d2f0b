#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "dance/matrix.hpp"

namespace dance {

// ---------------------------------------------------------------------------
// Dense products. Backward-pass variants materialize the transpose and reuse
// the single gemm kernel, keeping every product on the same code path.
// ---------------------------------------------------------------------------

Matrix matmul(const Matrix& a, const Matrix& b);
/// a (m x k) * b^T where b is (n x k) -> (m x n)
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// a^T (k x m transposed) * b (m x n) -> (k x n)
Matrix matmul_tn(const Matrix& a, const Matrix& b);

// ---------------------------------------------------------------------------
// Row normalization
// ---------------------------------------------------------------------------

/// Scales each row to unit Euclidean norm; returns the original norms.
/// Throws ValueError on a zero-norm row.
std::pair<Matrix, std::vector<double>> l2_normalize_rows(const Matrix& x);

/// Per row: dL/dx = (dL/dx_hat - x_hat * (x_hat . dL/dx_hat)) / ||x||.
Matrix l2_normalize_backward(const Matrix& x, const std::vector<double>& norms,
                             const Matrix& d_xhat);

// ---------------------------------------------------------------------------
// Softmax and activations
// ---------------------------------------------------------------------------

/// Row softmax of z / tau, stabilized by row-max subtraction. tau > 0.
Matrix softmax_rows(const Matrix& z, double tau);

/// Given probabilities p = softmax_rows(z, tau) and dL/dp, returns dL/dz.
Matrix softmax_rows_backward(const Matrix& p, const Matrix& d_p, double tau);

Matrix relu_forward(const Matrix& x);
Matrix relu_backward(const Matrix& x, const Matrix& d_y);

// ---------------------------------------------------------------------------
// Affine layer, weights stored (out x in), bias (1 x out): y = x W^T + b
// ---------------------------------------------------------------------------

Matrix affine_forward(const Matrix& x, const Matrix& w, const Matrix& b);

struct AffineGrads {
    Matrix d_x;
    Matrix d_w;
    Matrix d_b;
};
AffineGrads affine_backward(const Matrix& x, const Matrix& w, const Matrix& d_y);

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

struct BatchNormState {
    Matrix gamma;        // 1 x features
    Matrix beta;         // 1 x features
    Matrix running_mean; // 1 x features
    Matrix running_var;  // 1 x features
    double epsilon = 1e-5;
    double momentum_bn = 0.1;

    static BatchNormState make(std::size_t features, double epsilon = 1e-5,
                               double momentum_bn = 0.1);
};

struct BatchNormCache {
    Matrix x;        // input batch
    Matrix x_hat;    // normalized pre gamma/beta
    std::vector<double> mean;
    std::vector<double> inv_std;
};

/// Training mode normalizes with batch statistics and updates running stats
/// (momentum_bn convention: running <- (1-m)*running + m*batch, unbiased
/// variance in the running estimate). Inference mode uses running stats.
/// Training requires batch size >= 2.
Matrix batchnorm_forward(const Matrix& x, BatchNormState& state, bool training,
                         BatchNormCache* cache = nullptr);

struct BatchNormGrads {
    Matrix d_x;
    Matrix d_gamma;
    Matrix d_beta;
};
BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const BatchNormState& state,
                                  const Matrix& d_y);

// ---------------------------------------------------------------------------
// Optimizer: Nesterov momentum SGD with polynomial learning-rate decay
// ---------------------------------------------------------------------------

struct ParamRef {
    double* data;
    std::size_t n;
};

struct OptimizerState {
    std::vector<std::vector<double>> velocity; // lazily sized to the params
    double base_lr = 0.01;
    double momentum = 0.9;
    bool nesterov = true;
    double weight_decay = 5e-4;
    double gamma_sched = 10.0;
    double power_sched = 0.75;
    std::size_t total_iters = 10000;
};

/// base_lr * (1 + gamma * i / total_iters)^(-power)
double lr_schedule(std::size_t iter, const OptimizerState& opt);

/// In-place update: g = grad + wd*p; v = mu*v + g; step = nesterov ? g + mu*v : v;
/// p -= lr*step. Velocity buffers are allocated on first use and shape-checked after.
void sgd_step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads,
              OptimizerState& opt, double lr);

} // namespace dance
