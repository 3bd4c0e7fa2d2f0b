#pragma once

#include <string>

#include "dance/trainer.hpp"

namespace dance {

enum class Method { DANCE, SO, ENT, DANN };

Method method_from_string(const std::string& s);
const char* method_name(Method m);

/// BN statistics used when scoring target data: SO never saw the target, so
/// it evaluates with source running stats; the adapting methods use target
/// stats.
Domain eval_domain(Method m);

struct BaselineConfig {
    Method method = Method::SO;
    double ent_weight = 0.05; // parallels lambda; declared default
    double grl_mu = 1.0;      // constant reversal coefficient
    std::size_t dann_hidden = 32;
};

/// One-hidden-layer domain discriminator over normalized features.
struct DomainHead {
    Matrix w1, b1; // hidden x d
    Matrix w2, b2; // 2 x hidden
};

Matrix domain_head_logits(const DomainHead& head, const Matrix& f_hat);

// Gradient reversal connection: identity forward, -mu * upstream backward.
Matrix grl_forward(const Matrix& x);
Matrix grl_backward(const Matrix& d_y, double mu);

/// L_cls only; the target stream is never touched.
TrainResult train_source_only(const LabeledSet& source, const ModelConfig& mcfg,
                              const TrainConfig& cfg);

/// L_cls + ent_weight * mean target entropy, with domain-specific BN.
TrainResult train_ent(const LabeledSet& source, const LabeledSet& target,
                      const ModelConfig& mcfg, const TrainConfig& cfg, double ent_weight);

struct DannResult {
    TrainResult train;
    DomainHead head;
};

/// L_cls + domain classification loss; the extractor sees the domain
/// gradient through the reversal connection scaled by -mu.
DannResult train_dann(const LabeledSet& source, const LabeledSet& target,
                      const ModelConfig& mcfg, const TrainConfig& cfg, double mu,
                      std::size_t dann_hidden);

} // namespace dance
