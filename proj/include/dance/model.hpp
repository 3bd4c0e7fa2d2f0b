#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dance/matrix.hpp"
#include "dance/numkernel.hpp"

namespace dance {

enum class Domain { Source, Target };

const char* domain_name(Domain d);

struct ModelConfig {
    std::size_t input_dim = 10;
    std::vector<std::size_t> hidden_dims = {64, 64};
    std::size_t feat_dim = 16;    // d
    std::size_t num_classes = 12; // K
    double tau_nc = 0.05;
    double tau_cls = 0.05;
    std::uint64_t seed = 0;
    double bn_epsilon = 1e-5;
    double bn_momentum = 0.1;

    void validate() const;
};

/// Hidden block: affine -> batchnorm -> relu, with one independent
/// BatchNormState per domain.
struct ExtractorLayer {
    Matrix w; // out x in
    Matrix b; // 1 x out
    BatchNormState bn_source;
    BatchNormState bn_target;
};

/// Feature extractor G ending in a d-dimensional affine layer, plus the
/// bias-free prototype matrix W (one row per class). Features are always
/// L2-normalized before touching W.
struct Model {
    ModelConfig config;
    std::vector<ExtractorLayer> hidden;
    Matrix head_w; // d x last_hidden
    Matrix head_b; // 1 x d
    Matrix prototypes; // K x d

    BatchNormState& bn(std::size_t layer, Domain d) {
        return d == Domain::Source ? hidden[layer].bn_source : hidden[layer].bn_target;
    }
    const BatchNormState& bn(std::size_t layer, Domain d) const {
        return d == Domain::Source ? hidden[layer].bn_source : hidden[layer].bn_target;
    }
};

/// Seeded He-style uniform init; prototype rows start as random unit vectors.
Model init_model(const ModelConfig& config);

struct LayerCache {
    Matrix input;
    BatchNormCache bn;
    Matrix bn_out; // pre-relu
};

struct ForwardCache {
    Domain domain = Domain::Source;
    std::vector<LayerCache> layers;
    Matrix head_in;
    Matrix feat_raw; // pre-normalization output of the head affine
    std::vector<double> norms;
    Matrix f_hat;
};

/// Runs the extractor with the BN statistics of `domain` and row-normalizes.
/// Training mode updates that domain's running stats only.
Matrix forward_features(Model& model, const Matrix& x, Domain domain, bool training,
                        ForwardCache* cache = nullptr);

/// logits = f_hat W^T / tau_cls; probs = row softmax of logits.
std::pair<Matrix, Matrix> classify(const Model& model, const Matrix& f_hat);

/// Row-normalized copy of W; W itself is untouched.
Matrix normalized_prototypes(const Model& model);

struct LayerGrads {
    Matrix d_w;
    Matrix d_b;
    Matrix d_gamma_source, d_beta_source;
    Matrix d_gamma_target, d_beta_target;
};

struct ModelGrads {
    std::vector<LayerGrads> hidden;
    Matrix d_head_w;
    Matrix d_head_b;
    Matrix d_prototypes;

    static ModelGrads zeros_like(const Model& model);
};

/// Accumulates into `grads` the parameter gradients from upstream gradients
/// on f_hat and/or on the classifier logits (either may be empty for zero).
/// BN gamma/beta gradients land on the cache's domain only.
void model_backward(const Model& model, const ForwardCache& cache, const Matrix& d_f_hat,
                    const Matrix& d_logits, ModelGrads& grads);

/// Flat views over all trainable tensors, in a fixed stable order matching
/// grad_refs. BN running statistics are state, not parameters, and are
/// excluded.
std::vector<ParamRef> parameter_refs(Model& model);
std::vector<ParamRef> grad_refs(ModelGrads& grads);

/// Checkpoint schema: JSON object {"config": {...}, "tensors": {name ->
/// {"shape": [r, c], "data": [row-major doubles]}}}. Includes BN running
/// statistics for both domains.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

} // namespace dance
