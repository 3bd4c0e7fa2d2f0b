#include "dance/losses.hpp"

#include <cmath>
#include <string>

#include "dance/kernels.hpp"
#include "dance/numkernel.hpp"

namespace dance {

double resolve_rho(std::size_t num_classes) {
    if (num_classes < 2) throw ValueError("resolve_rho: need at least 2 classes");
    return std::log(static_cast<double>(num_classes)) / 2.0;
}

double LossConfig::bind_rho(std::size_t num_classes) const {
    if (rho.has_value()) {
        if (!(*rho > 0.0)) throw ValueError("LossConfig: rho must be positive");
        return *rho;
    }
    return resolve_rho(num_classes);
}

double entropy_row(const double* p, std::size_t n) {
    double h = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (p[j] > 0.0) h -= p[j] * std::log(p[j]);
    }
    return h;
}

std::vector<double> entropy_rows(const Matrix& p) {
    std::vector<double> h(p.rows());
    for (std::size_t i = 0; i < p.rows(); ++i) h[i] = entropy_row(p.row(i), p.cols());
    return h;
}

ClsLossResult cls_loss(const Matrix& logits, const std::vector<int>& labels) {
    const std::size_t batch = logits.rows(), k = logits.cols();
    if (labels.size() != batch) throw ShapeError("cls_loss: label count mismatch");
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= k) {
            throw ValueError("cls_loss: label " + std::to_string(y) + " out of range");
        }
    }
    Matrix p = softmax_rows(logits, 1.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        // log p_y via the stabilized log-sum-exp, not log of the softmax output
        double mx = logits(i, 0);
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, logits(i, j));
        double lse = 0.0;
        for (std::size_t j = 0; j < k; ++j) lse += std::exp(logits(i, j) - mx);
        loss -= logits(i, static_cast<std::size_t>(labels[i])) - mx - std::log(lse);
    }
    loss /= static_cast<double>(batch);

    Matrix d_logits = std::move(p);
    for (std::size_t i = 0; i < batch; ++i) {
        d_logits(i, static_cast<std::size_t>(labels[i])) -= 1.0;
    }
    kernels::scale(d_logits.size(), 1.0 / static_cast<double>(batch), d_logits.data());
    return {loss, std::move(d_logits)};
}

Matrix nc_distribution(const Matrix& f_hat, const Matrix& f, double tau_nc,
                       const std::vector<std::size_t>& self_index, std::size_t n_bank) {
    if (!(tau_nc > 0.0)) throw ValueError("nc_distribution: tau must be positive");
    if (f_hat.cols() != f.cols()) throw ShapeError("nc_distribution: feature width mismatch");
    if (self_index.size() != f_hat.rows()) {
        throw ShapeError("nc_distribution: one self index per batch row required");
    }
    for (std::size_t s : self_index) {
        if (s >= n_bank) {
            throw ValueError("nc_distribution: self index " + std::to_string(s) +
                             " is not a bank slot");
        }
    }
    const std::size_t batch = f_hat.rows(), m = f.rows();
    Matrix sim = matmul_nt(f_hat, f); // batch x m cosine similarities
    Matrix p(batch, m);
    for (std::size_t i = 0; i < batch; ++i) {
        const std::size_t self = self_index[i];
        double mx = -HUGE_VAL;
        for (std::size_t j = 0; j < m; ++j) {
            if (j != self) mx = std::max(mx, sim(i, j));
        }
        double z = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            if (j == self) continue;
            const double e = std::exp((sim(i, j) - mx) / tau_nc);
            p(i, j) = e;
            z += e;
        }
        for (std::size_t j = 0; j < m; ++j) {
            p(i, j) = (j == self) ? 0.0 : p(i, j) / z;
        }
    }
    ensure_finite(p, "nc_distribution");
    return p;
}

NcLossResult nc_loss(const Matrix& f_hat, const Matrix& f, std::size_t n_bank, double tau_nc,
                     const std::vector<std::size_t>& self_index, bool detach_prototypes) {
    const std::size_t batch = f_hat.rows(), m = f.rows(), d = f.cols();
    const std::size_t k = m - n_bank;
    Matrix p = nc_distribution(f_hat, f, tau_nc, self_index, n_bank);

    // L = mean_i H(p_i); dL/ds_ij = -p_ij (ln p_ij + H_i) / batch,
    // with s the pre-softmax similarities. p -> 0 kills the term.
    double loss = 0.0;
    Matrix d_sim(batch, m);
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        const double h = entropy_row(p.row(i), m);
        loss += h;
        for (std::size_t j = 0; j < m; ++j) {
            const double pij = p(i, j);
            d_sim(i, j) = pij > 0.0 ? -pij * (std::log(pij) + h) * inv_b : 0.0;
        }
    }
    loss *= inv_b;

    NcLossResult out;
    out.value = loss;
    // s = f_hat F^T / tau
    kernels::scale(d_sim.size(), 1.0 / tau_nc, d_sim.data());
    out.d_f_hat = matmul(d_sim, f);
    out.d_w_hat = Matrix(k, d);
    if (!detach_prototypes && k > 0) {
        // only the prototype rows of F are parameters
        Matrix d_f_full = matmul_tn(d_sim, f_hat); // m x d
        for (std::size_t r = 0; r < k; ++r) {
            kernels::add(d, d_f_full.row(n_bank + r), out.d_w_hat.row(r));
        }
    }
    out.p = std::move(p);
    return out;
}

namespace {

struct EsCore {
    double value;
    std::vector<double> entropy;
    std::vector<bool> active;
    std::vector<double> d_h; // dL/dH per sample
};

EsCore es_core(const Matrix& p, double rho, double margin) {
    if (!(rho > 0.0)) throw ValueError("es_loss: rho must be positive");
    if (margin < 0.0) throw ValueError("es_loss: margin must be non-negative");
    const std::size_t batch = p.rows();
    EsCore core;
    core.entropy = entropy_rows(p);
    core.active.assign(batch, false);
    core.d_h.assign(batch, 0.0);
    double loss = 0.0;
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        const double dist = core.entropy[i] - rho;
        if (std::fabs(dist) > margin) {
            core.active[i] = true;
            loss -= std::fabs(dist);
            core.d_h[i] = (dist > 0.0 ? -1.0 : 1.0) * inv_b;
        }
    }
    core.value = loss * inv_b;
    return core;
}

} // namespace

EsLossResult es_loss(const Matrix& p, double rho, double margin) {
    EsCore core = es_core(p, rho, margin);
    EsLossResult out;
    out.value = core.value;
    out.d_p = Matrix(p.rows(), p.cols());
    for (std::size_t i = 0; i < p.rows(); ++i) {
        if (!core.active[i]) continue;
        for (std::size_t j = 0; j < p.cols(); ++j) {
            // dH/dp_j = -(ln p_j + 1); zero-probability entries keep zero grad
            if (p(i, j) > 0.0) {
                out.d_p(i, j) = core.d_h[i] * -(std::log(p(i, j)) + 1.0);
            }
        }
    }
    out.entropy = std::move(core.entropy);
    out.active = std::move(core.active);
    return out;
}

EsOnLogitsResult es_loss_on_logits(const Matrix& logits, double rho, double margin) {
    Matrix p = softmax_rows(logits, 1.0);
    EsCore core = es_core(p, rho, margin);
    EsOnLogitsResult out;
    out.value = core.value;
    out.d_logits = Matrix(p.rows(), p.cols());
    for (std::size_t i = 0; i < p.rows(); ++i) {
        if (!core.active[i]) continue;
        // dH/ds_j = -p_j (ln p_j + H) through the softmax
        const double h = core.entropy[i];
        for (std::size_t j = 0; j < p.cols(); ++j) {
            const double pij = p(i, j);
            if (pij > 0.0) {
                out.d_logits(i, j) = core.d_h[i] * -pij * (std::log(pij) + h);
            }
        }
    }
    out.entropy = std::move(core.entropy);
    out.active = std::move(core.active);
    return out;
}

EntropyObjective entropy_mean_on_logits(const Matrix& logits) {
    Matrix p = softmax_rows(logits, 1.0);
    EntropyObjective out;
    out.d_logits = Matrix(p.rows(), p.cols());
    double loss = 0.0;
    const double inv_b = 1.0 / static_cast<double>(p.rows());
    for (std::size_t i = 0; i < p.rows(); ++i) {
        const double h = entropy_row(p.row(i), p.cols());
        loss += h;
        for (std::size_t j = 0; j < p.cols(); ++j) {
            const double pij = p(i, j);
            if (pij > 0.0) out.d_logits(i, j) = -pij * (std::log(pij) + h) * inv_b;
        }
    }
    out.value = loss * inv_b;
    return out;
}

LossBreakdown total_loss(double cls, double nc, double es, double lambda) {
    if (lambda < 0.0) throw ValueError("total_loss: lambda must be non-negative");
    LossBreakdown b;
    b.cls = cls;
    b.nc = nc;
    b.es = es;
    b.total = cls + lambda * (nc + es);
    return b;
}

} // namespace dance
