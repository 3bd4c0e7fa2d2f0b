#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dance/losses.hpp"
#include "dance/matrix.hpp"
#include "dance/memory.hpp"
#include "dance/model.hpp"
#include "dance/rng.hpp"
#include "dance/synthdata.hpp"

namespace dance {

enum class BankUpdateOrder { Before, After };

struct TrainConfig {
    std::size_t batch_size = 36;
    std::size_t total_iters = 10000; // desk-scale runs pass 2000
    double base_lr = 0.01;
    double gamma_sched = 10.0;
    double power_sched = 0.75;
    double momentum = 0.9;      // declared default, not a paper value
    double weight_decay = 5e-4; // declared default, not a paper value
    bool nesterov = true;
    double lambda = 0.05;
    double margin = 0.5;
    std::optional<double> rho; // nullopt resolves to ln(K)/2
    double tau_nc = 0.05;
    bool memory_enabled = true;
    bool detach_prototypes_in_nc = false;
    BankUpdateOrder bank_update_order = BankUpdateOrder::Before;
    bool debug_checks = false; // per-step independent ES recomputation
    std::uint64_t seed = 0;

    void validate() const;

    OptimizerState make_optimizer() const;
};

struct LossLogRow {
    std::size_t iter;
    double lr;
    double cls;
    double nc;
    double es;
    double total;
};

struct TrainResult {
    Model model;
    std::vector<LossLogRow> log;
};

/// One training run: per iteration a source mini-batch drives L_cls through
/// source BN, a target mini-batch drives lambda * (L_nc + L_es) through
/// target BN with the memory bank refreshed per bank_update_order, and one
/// fused Nesterov SGD step applies the accumulated gradient. Target labels
/// are never read.
TrainResult train_dance(const LabeledSet& source, const LabeledSet& target,
                        const ModelConfig& mcfg, const TrainConfig& cfg);

/// Inference-mode normalized features, row-aligned with `data`.
Matrix export_features(Model& model, const Matrix& data, Domain domain);

void save_loss_log(const std::vector<LossLogRow>& log, const std::string& path);

/// Seeded epoch-shuffled index stream with a fixed batch size; a short final
/// slice is dropped and the next epoch reshuffles.
class BatchSampler {
public:
    BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed);
    std::vector<std::size_t> next();
    std::size_t batch_size() const { return batch_; }

private:
    void reshuffle();
    std::size_t n_;
    std::size_t batch_;
    std::size_t pos_ = 0;
    Rng rng_;
    std::vector<std::size_t> order_;
};

Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& idx);

} // namespace dance
