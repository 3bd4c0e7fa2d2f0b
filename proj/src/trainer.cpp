#include "dance/trainer.hpp"

#include <fstream>

#include "train_core.hpp"

namespace dance {

void TrainConfig::validate() const {
    if (batch_size < 2) throw ValueError("TrainConfig: batch_size must be >= 2 for BN");
    if (total_iters < 1) throw ValueError("TrainConfig: total_iters must be >= 1");
    if (!(base_lr > 0.0)) throw ValueError("TrainConfig: base_lr must be positive");
    if (gamma_sched < 0.0 || power_sched < 0.0) {
        throw ValueError("TrainConfig: schedule parameters must be >= 0");
    }
    if (momentum < 0.0 || momentum >= 1.0) throw ValueError("TrainConfig: momentum in [0,1)");
    if (weight_decay < 0.0) throw ValueError("TrainConfig: weight_decay must be >= 0");
    if (lambda < 0.0) throw ValueError("TrainConfig: lambda must be >= 0");
    if (margin < 0.0) throw ValueError("TrainConfig: margin must be >= 0");
    if (!(tau_nc > 0.0)) throw ValueError("TrainConfig: tau_nc must be positive");
    if (rho.has_value() && !(*rho > 0.0)) throw ValueError("TrainConfig: rho must be positive");
}

OptimizerState TrainConfig::make_optimizer() const {
    OptimizerState opt;
    opt.base_lr = base_lr;
    opt.momentum = momentum;
    opt.nesterov = nesterov;
    opt.weight_decay = weight_decay;
    opt.gamma_sched = gamma_sched;
    opt.power_sched = power_sched;
    opt.total_iters = total_iters;
    return opt;
}

BatchSampler::BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : n_(n), batch_(std::min(batch_size, n)), rng_(seed) {
    if (n_ == 0) throw ValueError("BatchSampler: empty dataset");
    reshuffle();
}

void BatchSampler::reshuffle() {
    order_ = rng_.permutation(n_);
    pos_ = 0;
}

std::vector<std::size_t> BatchSampler::next() {
    if (pos_ + batch_ > n_) reshuffle();
    std::vector<std::size_t> idx(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(pos_ + batch_));
    pos_ += batch_;
    return idx;
}

Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& idx) {
    Matrix out(idx.size(), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= x.rows()) throw ValueError("gather_rows: index out of range");
        for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(idx[i], j);
    }
    return out;
}

TrainResult train_dance(const LabeledSet& source, const LabeledSet& target,
                        const ModelConfig& mcfg, const TrainConfig& cfg) {
    detail::CoreOptions opts;
    opts.objective = detail::TargetObjective::Dance;
    detail::CoreResult core = detail::run_train_core(source, target, mcfg, cfg, opts);
    return {std::move(core.model), std::move(core.log)};
}

Matrix export_features(Model& model, const Matrix& data, Domain domain) {
    return forward_features(model, data, domain, /*training=*/false);
}

void save_loss_log(const std::vector<LossLogRow>& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_loss_log: cannot open " + path);
    out << "iter,lr,cls,nc,es,total\n";
    out.precision(17);
    for (const auto& row : log) {
        out << row.iter << "," << row.lr << "," << row.cls << "," << row.nc << "," << row.es
            << "," << row.total << "\n";
    }
    if (!out) throw IoError("save_loss_log: write failed for " + path);
}

} // namespace dance
