#pragma once

#include <cstddef>
#include <vector>

#include "dance/matrix.hpp"
#include "dance/model.hpp"

namespace dance {

/// Stored target features, one unit-norm row per target sample; row i belongs
/// to target sample i for the lifetime of the bank.
struct MemoryBank {
    Matrix v; // N_t x d

    std::size_t n_target() const { return v.rows(); }
    std::size_t feat_dim() const { return v.cols(); }
};

/// Fills the bank with one inference-mode forward pass (target-domain BN,
/// running statistics) over all target samples.
MemoryBank init_bank(Model& model, const Matrix& target_x);

/// Replaces rows `indices` with the rows of f_hat, exactly and in order.
/// Indices must be unique and in range; f_hat rows must be unit-norm.
void update_bank(MemoryBank& bank, const std::vector<std::size_t>& indices, const Matrix& f_hat);

/// F = [bank rows; normalized prototype rows]; a fresh copy with no aliasing,
/// so later bank mutation cannot alter an assembled candidate set.
Matrix assemble_candidates(const MemoryBank& bank, const Matrix& w_hat);

/// One row of floats per target sample, for offline analysis.
void save_bank_csv(const MemoryBank& bank, const std::string& path);

} // namespace dance
