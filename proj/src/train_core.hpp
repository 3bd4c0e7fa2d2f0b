#pragma once

#include <optional>

#include "dance/baselines.hpp"
#include "dance/trainer.hpp"

namespace dance::detail {

enum class TargetObjective { None, Dance, Entropy, Adversarial };

struct CoreOptions {
    TargetObjective objective = TargetObjective::Dance;
    double ent_weight = 0.05;
    double grl_mu = 1.0;
    std::size_t dann_hidden = 32;
};

struct CoreResult {
    Model model;
    std::vector<LossLogRow> log;
    std::optional<DomainHead> head;
};

/// The single training loop behind DANCE and every baseline: seeded source
/// and target batch streams, one fused SGD step per iteration, per-iteration
/// loss log. Only the target-phase objective differs between methods.
CoreResult run_train_core(const LabeledSet& source, const LabeledSet& target,
                          const ModelConfig& mcfg, const TrainConfig& cfg,
                          const CoreOptions& opts);

} // namespace dance::detail
