#include "dance/baselines.hpp"

#include "dance/kernels.hpp"
#include "train_core.hpp"

namespace dance {

Method method_from_string(const std::string& s) {
    if (s == "DANCE") return Method::DANCE;
    if (s == "SO") return Method::SO;
    if (s == "ENT") return Method::ENT;
    if (s == "DANN") return Method::DANN;
    throw ValueError("unknown method: " + s);
}

const char* method_name(Method m) {
    switch (m) {
        case Method::DANCE: return "DANCE";
        case Method::SO: return "SO";
        case Method::ENT: return "ENT";
        case Method::DANN: return "DANN";
    }
    return "?";
}

Domain eval_domain(Method m) {
    return m == Method::SO ? Domain::Source : Domain::Target;
}

Matrix domain_head_logits(const DomainHead& head, const Matrix& f_hat) {
    Matrix h1 = relu_forward(affine_forward(f_hat, head.w1, head.b1));
    return affine_forward(h1, head.w2, head.b2);
}

Matrix grl_forward(const Matrix& x) { return x; }

Matrix grl_backward(const Matrix& d_y, double mu) {
    Matrix d_x = d_y;
    kernels::scale(d_x.size(), -mu, d_x.data());
    return d_x;
}

TrainResult train_source_only(const LabeledSet& source, const ModelConfig& mcfg,
                              const TrainConfig& cfg) {
    detail::CoreOptions opts;
    opts.objective = detail::TargetObjective::None;
    LabeledSet no_target;
    detail::CoreResult core = detail::run_train_core(source, no_target, mcfg, cfg, opts);
    return {std::move(core.model), std::move(core.log)};
}

TrainResult train_ent(const LabeledSet& source, const LabeledSet& target,
                      const ModelConfig& mcfg, const TrainConfig& cfg, double ent_weight) {
    if (ent_weight < 0.0) throw ValueError("train_ent: ent_weight must be >= 0");
    detail::CoreOptions opts;
    opts.objective = detail::TargetObjective::Entropy;
    opts.ent_weight = ent_weight;
    detail::CoreResult core = detail::run_train_core(source, target, mcfg, cfg, opts);
    return {std::move(core.model), std::move(core.log)};
}

DannResult train_dann(const LabeledSet& source, const LabeledSet& target,
                      const ModelConfig& mcfg, const TrainConfig& cfg, double mu,
                      std::size_t dann_hidden) {
    if (mu < 0.0) throw ValueError("train_dann: mu must be >= 0");
    if (dann_hidden < 1) throw ValueError("train_dann: hidden size must be >= 1");
    detail::CoreOptions opts;
    opts.objective = detail::TargetObjective::Adversarial;
    opts.grl_mu = mu;
    opts.dann_hidden = dann_hidden;
    detail::CoreResult core = detail::run_train_core(source, target, mcfg, cfg, opts);
    return {{std::move(core.model), std::move(core.log)}, std::move(*core.head)};
}

} // namespace dance
