#include "dance/memory.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

namespace dance {

MemoryBank init_bank(Model& model, const Matrix& target_x) {
    if (target_x.rows() == 0) throw ValueError("init_bank: empty target set");
    MemoryBank bank;
    bank.v = forward_features(model, target_x, Domain::Target, /*training=*/false);
    return bank;
}

void update_bank(MemoryBank& bank, const std::vector<std::size_t>& indices, const Matrix& f_hat) {
    if (indices.size() != f_hat.rows()) {
        throw ShapeError("update_bank: " + std::to_string(indices.size()) + " indices vs " +
                         std::to_string(f_hat.rows()) + " feature rows");
    }
    if (f_hat.cols() != bank.feat_dim()) {
        throw ShapeError("update_bank: feature width mismatch");
    }
    std::unordered_set<std::size_t> seen;
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const std::size_t idx = indices[r];
        if (idx >= bank.n_target()) {
            throw ValueError("update_bank: index " + std::to_string(idx) + " out of range");
        }
        if (!seen.insert(idx).second) {
            throw ValueError("update_bank: duplicate index " + std::to_string(idx));
        }
        double sq = 0.0;
        for (std::size_t j = 0; j < f_hat.cols(); ++j) sq += f_hat(r, j) * f_hat(r, j);
        if (std::fabs(std::sqrt(sq) - 1.0) > 1e-10) {
            throw ValueError("update_bank: row " + std::to_string(r) + " is not unit-norm");
        }
    }
    for (std::size_t r = 0; r < indices.size(); ++r) {
        std::memcpy(bank.v.row(indices[r]), f_hat.row(r), bank.feat_dim() * sizeof(double));
    }
}

void save_bank_csv(const MemoryBank& bank, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_bank_csv: cannot open " + path);
    out.precision(17);
    for (std::size_t i = 0; i < bank.n_target(); ++i) {
        for (std::size_t j = 0; j < bank.feat_dim(); ++j) {
            out << (j ? "," : "") << bank.v(i, j);
        }
        out << "\n";
    }
    if (!out) throw IoError("save_bank_csv: write failed for " + path);
}

Matrix assemble_candidates(const MemoryBank& bank, const Matrix& w_hat) {
    if (w_hat.cols() != bank.feat_dim()) {
        throw ShapeError("assemble_candidates: width mismatch " + shape_str(bank.v) + " vs " +
                         shape_str(w_hat));
    }
    Matrix f(bank.n_target() + w_hat.rows(), bank.feat_dim());
    std::memcpy(f.data(), bank.v.data(), bank.v.size() * sizeof(double));
    std::memcpy(f.row(bank.n_target()), w_hat.data(), w_hat.size() * sizeof(double));
    return f;
}

} // namespace dance
