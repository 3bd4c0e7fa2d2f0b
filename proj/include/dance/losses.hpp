#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "dance/matrix.hpp"

namespace dance {

struct LossConfig {
    double lambda = 0.05;
    double margin = 0.5;
    std::optional<double> rho; // nullopt = resolve to ln(K)/2 at bind time
    double tau_nc = 0.05;

    double bind_rho(std::size_t num_classes) const;
};

struct LossBreakdown {
    double cls = 0.0;
    double nc = 0.0;
    double es = 0.0;
    double total = 0.0;
};

/// ln(K)/2, the entropy threshold between confident-known and
/// confident-unknown. Natural log throughout.
double resolve_rho(std::size_t num_classes);

/// Shannon entropy of each row, natural log, 0*ln(0) = 0.
std::vector<double> entropy_rows(const Matrix& p);
double entropy_row(const double* p, std::size_t n);

// ---------------------------------------------------------------------------
// Source cross-entropy
// ---------------------------------------------------------------------------

struct ClsLossResult {
    double value;
    Matrix d_logits; // (softmax - onehot) / batch
};

/// Mean negative log-likelihood over the batch; labels in [0, K).
ClsLossResult cls_loss(const Matrix& logits, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Neighborhood clustering
// ---------------------------------------------------------------------------

/// Similarity distribution of each batch feature over the candidate rows of
/// f (bank rows first, then prototype rows). Row i gets
/// p_ij = exp(F_j . f_i / tau) / Z_i with its own slot (self_index[i], a bank
/// row) excluded from Z_i and pinned to 0.
Matrix nc_distribution(const Matrix& f_hat, const Matrix& f, double tau_nc,
                       const std::vector<std::size_t>& self_index, std::size_t n_bank);

struct NcLossResult {
    double value;
    Matrix p;       // batch x candidates, self entries zero
    Matrix d_f_hat; // batch x d
    Matrix d_w_hat; // K x d gradient on the normalized prototype rows of f
};

/// Entropy of the similarity distribution, averaged over the batch. Gradient
/// reaches the live features and (unless detached) the prototype rows of f;
/// bank rows are stored snapshots and stay constant.
NcLossResult nc_loss(const Matrix& f_hat, const Matrix& f, std::size_t n_bank, double tau_nc,
                     const std::vector<std::size_t>& self_index, bool detach_prototypes = false);

// ---------------------------------------------------------------------------
// Entropy separation
// ---------------------------------------------------------------------------

struct EsLossResult {
    double value;
    Matrix d_p; // gradient wrt the probability rows (0 inside the margin)
    std::vector<double> entropy;
    std::vector<bool> active;
};

/// Per sample: -|H(p) - rho| when |H(p) - rho| > m, else 0; mean over the
/// batch. Subgradient at the margin boundary is 0.
EsLossResult es_loss(const Matrix& p, double rho, double margin);

struct EsOnLogitsResult {
    double value;
    Matrix d_logits;
    std::vector<double> entropy;
    std::vector<bool> active;
};

/// Same loss chained through the row softmax of `logits`.
EsOnLogitsResult es_loss_on_logits(const Matrix& logits, double rho, double margin);

struct EntropyObjective {
    double value;
    Matrix d_logits;
};

/// Mean row entropy of softmax(logits) with its gradient; the entropy
/// minimization baseline objective.
EntropyObjective entropy_mean_on_logits(const Matrix& logits);

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

/// total = cls + lambda * (nc + es)
LossBreakdown total_loss(double cls, double nc, double es, double lambda);

} // namespace dance
