#include "train_core.hpp"

#include <cmath>
#include <numeric>

#include "dance/kernels.hpp"

namespace dance::detail {

namespace {

constexpr std::uint64_t kRoleSourceStream = 0x737263ULL;  // "src"
constexpr std::uint64_t kRoleTargetStream = 0x746774ULL;  // "tgt"
constexpr std::uint64_t kRoleDannHead = 0x64616e6eULL;    // "dann"

struct HeadCache {
    Matrix input;
    Matrix pre1;
    Matrix h1;
};

Matrix head_forward(const DomainHead& head, const Matrix& f, HeadCache* cache) {
    Matrix pre1 = affine_forward(f, head.w1, head.b1);
    Matrix h1 = relu_forward(pre1);
    Matrix logits = affine_forward(h1, head.w2, head.b2);
    if (cache) {
        cache->input = f;
        cache->pre1 = std::move(pre1);
        cache->h1 = std::move(h1);
    }
    return logits;
}

struct HeadGrads {
    Matrix d_w1, d_b1, d_w2, d_b2;

    static HeadGrads zeros_like(const DomainHead& head) {
        HeadGrads g;
        g.d_w1 = Matrix(head.w1.rows(), head.w1.cols());
        g.d_b1 = Matrix(1, head.b1.cols());
        g.d_w2 = Matrix(head.w2.rows(), head.w2.cols());
        g.d_b2 = Matrix(1, head.b2.cols());
        return g;
    }
};

Matrix head_backward(const DomainHead& head, const HeadCache& cache, const Matrix& d_logits,
                     HeadGrads& grads) {
    AffineGrads g2 = affine_backward(cache.h1, head.w2, d_logits);
    kernels::add(grads.d_w2.size(), g2.d_w.data(), grads.d_w2.data());
    kernels::add(grads.d_b2.size(), g2.d_b.data(), grads.d_b2.data());
    Matrix d_h1 = relu_backward(cache.pre1, g2.d_x);
    AffineGrads g1 = affine_backward(cache.input, head.w1, d_h1);
    kernels::add(grads.d_w1.size(), g1.d_w.data(), grads.d_w1.data());
    kernels::add(grads.d_b1.size(), g1.d_b.data(), grads.d_b1.data());
    return g1.d_x;
}

DomainHead init_head(std::size_t feat_dim, std::size_t hidden, std::uint64_t seed) {
    Rng rng(derive_seed(seed, kRoleDannHead));
    DomainHead head;
    const double lim1 = std::sqrt(6.0 / static_cast<double>(feat_dim));
    head.w1 = Matrix(hidden, feat_dim);
    for (double& v : head.w1.storage()) v = rng.uniform(-lim1, lim1);
    head.b1 = Matrix(1, hidden, 0.0);
    const double lim2 = std::sqrt(6.0 / static_cast<double>(hidden));
    head.w2 = Matrix(2, hidden);
    for (double& v : head.w2.storage()) v = rng.uniform(-lim2, lim2);
    head.b2 = Matrix(1, 2, 0.0);
    return head;
}

std::vector<int> gather_labels(const std::vector<int>& y, const std::vector<std::size_t>& idx) {
    std::vector<int> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = y[idx[i]];
    return out;
}

Matrix scaled(Matrix m, double a) {
    kernels::scale(m.size(), a, m.data());
    return m;
}

void check_es_against_scalar_recompute(const Matrix& probs, double rho, double margin,
                                       const EsOnLogitsResult& es) {
    double mean = 0.0;
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        double h = 0.0;
        for (std::size_t j = 0; j < probs.cols(); ++j) {
            const double p = probs(i, j);
            if (p > 0.0) h -= p * std::log(p);
        }
        const double dist = std::fabs(h - rho);
        const double contrib = dist > margin ? -dist : 0.0;
        if (contrib > 0.0) throw ValueError("debug: positive ES contribution");
        const bool gate_closed = dist <= margin;
        if (gate_closed == es.active[i]) {
            throw ValueError("debug: ES margin gate disagrees with recomputation");
        }
        mean += contrib;
    }
    mean /= static_cast<double>(probs.rows());
    if (std::fabs(mean - es.value) > 1e-12) {
        throw ValueError("debug: ES loss disagrees with scalar recomputation");
    }
}

} // namespace

CoreResult run_train_core(const LabeledSet& source, const LabeledSet& target,
                          const ModelConfig& mcfg, const TrainConfig& cfg,
                          const CoreOptions& opts) {
    cfg.validate();
    if (source.x.rows() == 0) throw ValueError("train: empty source set");
    const bool uses_target = opts.objective != TargetObjective::None;
    if (uses_target && target.x.rows() == 0) throw ValueError("train: empty target set");
    if (source.x.cols() != mcfg.input_dim ||
        (uses_target && target.x.cols() != mcfg.input_dim)) {
        throw ShapeError("train: dataset width does not match model input_dim");
    }
    for (int y : source.y) {
        if (y < 0 || static_cast<std::size_t>(y) >= mcfg.num_classes) {
            throw ValueError("train: source label " + std::to_string(y) + " outside [0, K)");
        }
    }

    Model model = init_model(mcfg);
    OptimizerState opt = cfg.make_optimizer();
    const double rho = cfg.rho.has_value() ? *cfg.rho : resolve_rho(mcfg.num_classes);

    BatchSampler src_sampler(source.x.rows(), cfg.batch_size, derive_seed(cfg.seed, kRoleSourceStream));
    std::optional<BatchSampler> tgt_sampler;
    if (uses_target) {
        tgt_sampler.emplace(target.x.rows(), cfg.batch_size, derive_seed(cfg.seed, kRoleTargetStream));
    }

    std::optional<MemoryBank> bank;
    if (opts.objective == TargetObjective::Dance && cfg.memory_enabled) {
        bank = init_bank(model, target.x);
    }
    std::optional<DomainHead> head;
    if (opts.objective == TargetObjective::Adversarial) {
        head = init_head(mcfg.feat_dim, opts.dann_hidden, mcfg.seed);
    }

    CoreResult result;
    result.log.reserve(cfg.total_iters);

    for (std::size_t iter = 0; iter < cfg.total_iters; ++iter) {
        const double lr = lr_schedule(iter, opt);
        ModelGrads grads = ModelGrads::zeros_like(model);
        HeadGrads head_grads = head ? HeadGrads::zeros_like(*head) : HeadGrads{};

        // source phase
        const auto idx_s = src_sampler.next();
        const Matrix xs = gather_rows(source.x, idx_s);
        const auto ys = gather_labels(source.y, idx_s);
        ForwardCache cache_s;
        forward_features(model, xs, Domain::Source, /*training=*/true, &cache_s);
        Matrix logits_s = classify(model, cache_s.f_hat).first;
        ClsLossResult cls = cls_loss(logits_s, ys);

        Matrix d_fhat_s; // adversarial extractor gradient, if any
        double dom_loss = 0.0;
        if (opts.objective == TargetObjective::Adversarial) {
            HeadCache hc;
            Matrix dom_logits = head_forward(*head, grl_forward(cache_s.f_hat), &hc);
            ClsLossResult dom = cls_loss(dom_logits, std::vector<int>(idx_s.size(), 0));
            dom_loss += 0.5 * dom.value;
            Matrix d_input = head_backward(*head, hc, scaled(std::move(dom.d_logits), 0.5),
                                           head_grads);
            d_fhat_s = grl_backward(d_input, opts.grl_mu);
        }
        model_backward(model, cache_s, d_fhat_s, cls.d_logits, grads);

        // target phase
        double nc_value = 0.0, es_value = 0.0, total = cls.value;
        if (opts.objective == TargetObjective::Dance) {
            const auto idx_t = tgt_sampler->next();
            const Matrix xt = gather_rows(target.x, idx_t);
            ForwardCache cache_t;
            forward_features(model, xt, Domain::Target, /*training=*/true, &cache_t);
            auto [w_hat, w_norms] = l2_normalize_rows(model.prototypes);

            Matrix candidates;
            std::size_t n_bank = 0;
            std::vector<std::size_t> self_index;
            if (bank) {
                if (cfg.bank_update_order == BankUpdateOrder::Before) {
                    update_bank(*bank, idx_t, cache_t.f_hat);
                }
                candidates = assemble_candidates(*bank, w_hat);
                n_bank = bank->n_target();
                self_index = idx_t;
                if (cfg.bank_update_order == BankUpdateOrder::After) {
                    update_bank(*bank, idx_t, cache_t.f_hat);
                }
            } else {
                // no-memory ablation: current batch snapshots plus prototypes
                n_bank = cache_t.f_hat.rows();
                candidates = Matrix(n_bank + w_hat.rows(), w_hat.cols());
                std::copy(cache_t.f_hat.storage().begin(), cache_t.f_hat.storage().end(),
                          candidates.storage().begin());
                std::copy(w_hat.storage().begin(), w_hat.storage().end(),
                          candidates.storage().begin() + static_cast<std::ptrdiff_t>(n_bank * w_hat.cols()));
                self_index.resize(n_bank);
                std::iota(self_index.begin(), self_index.end(), std::size_t{0});
            }

            NcLossResult nc = nc_loss(cache_t.f_hat, candidates, n_bank, cfg.tau_nc, self_index,
                                      cfg.detach_prototypes_in_nc);
            auto [logits_t, probs_t] = classify(model, cache_t.f_hat);
            EsOnLogitsResult es = es_loss_on_logits(logits_t, rho, cfg.margin);
            if (cfg.debug_checks) {
                check_es_against_scalar_recompute(probs_t, rho, cfg.margin, es);
            }
            nc_value = nc.value;
            es_value = es.value;

            if (!cfg.detach_prototypes_in_nc) {
                Matrix d_proto = l2_normalize_backward(model.prototypes, w_norms,
                                                       scaled(std::move(nc.d_w_hat), cfg.lambda));
                kernels::add(grads.d_prototypes.size(), d_proto.data(),
                             grads.d_prototypes.data());
            }
            model_backward(model, cache_t, scaled(std::move(nc.d_f_hat), cfg.lambda),
                           scaled(std::move(es.d_logits), cfg.lambda), grads);
            total = total_loss(cls.value, nc_value, es_value, cfg.lambda).total;
        } else if (opts.objective == TargetObjective::Entropy) {
            const auto idx_t = tgt_sampler->next();
            const Matrix xt = gather_rows(target.x, idx_t);
            ForwardCache cache_t;
            forward_features(model, xt, Domain::Target, /*training=*/true, &cache_t);
            Matrix logits_t = classify(model, cache_t.f_hat).first;
            EntropyObjective ent = entropy_mean_on_logits(logits_t);
            es_value = ent.value;
            model_backward(model, cache_t, Matrix(),
                           scaled(std::move(ent.d_logits), opts.ent_weight), grads);
            total = cls.value + opts.ent_weight * ent.value;
        } else if (opts.objective == TargetObjective::Adversarial) {
            const auto idx_t = tgt_sampler->next();
            const Matrix xt = gather_rows(target.x, idx_t);
            ForwardCache cache_t;
            forward_features(model, xt, Domain::Target, /*training=*/true, &cache_t);
            HeadCache hc;
            Matrix dom_logits = head_forward(*head, grl_forward(cache_t.f_hat), &hc);
            ClsLossResult dom = cls_loss(dom_logits, std::vector<int>(idx_t.size(), 1));
            dom_loss += 0.5 * dom.value;
            Matrix d_input = head_backward(*head, hc, scaled(std::move(dom.d_logits), 0.5),
                                           head_grads);
            model_backward(model, cache_t, grl_backward(d_input, opts.grl_mu), Matrix(), grads);
            nc_value = dom_loss; // domain loss occupies the nc column in the log
            total = cls.value + dom_loss;
        }

        if (!std::isfinite(total)) {
            throw ValueError("train: non-finite loss at iteration " + std::to_string(iter));
        }
        result.log.push_back({iter, lr, cls.value, nc_value, es_value, total});

        std::vector<ParamRef> params = parameter_refs(model);
        std::vector<ParamRef> gradrefs = grad_refs(grads);
        if (head) {
            params.push_back({head->w1.data(), head->w1.size()});
            params.push_back({head->b1.data(), head->b1.size()});
            params.push_back({head->w2.data(), head->w2.size()});
            params.push_back({head->b2.data(), head->b2.size()});
            gradrefs.push_back({head_grads.d_w1.data(), head_grads.d_w1.size()});
            gradrefs.push_back({head_grads.d_b1.data(), head_grads.d_b1.size()});
            gradrefs.push_back({head_grads.d_w2.data(), head_grads.d_w2.size()});
            gradrefs.push_back({head_grads.d_b2.data(), head_grads.d_b2.size()});
        }
        sgd_step(params, gradrefs, opt, lr);
    }

    result.model = std::move(model);
    result.head = std::move(head);
    return result;
}

} // namespace dance::detail
