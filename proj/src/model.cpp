#include "dance/model.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "dance/kernels.hpp"
#include "dance/rng.hpp"

namespace dance {

const char* domain_name(Domain d) { return d == Domain::Source ? "source" : "target"; }

void ModelConfig::validate() const {
    if (input_dim < 1) throw ValueError("ModelConfig: input_dim must be >= 1");
    if (feat_dim < 2) throw ValueError("ModelConfig: feat_dim must be >= 2");
    if (num_classes < 2) throw ValueError("ModelConfig: num_classes must be >= 2");
    if (!(tau_nc > 0.0)) throw ValueError("ModelConfig: tau_nc must be positive");
    if (!(tau_cls > 0.0)) throw ValueError("ModelConfig: tau_cls must be positive");
    for (std::size_t h : hidden_dims) {
        if (h < 1) throw ValueError("ModelConfig: hidden dim must be >= 1");
    }
}

namespace {

Matrix he_uniform(std::size_t out, std::size_t in, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    Matrix w(out, in);
    for (double& v : w.storage()) v = rng.uniform(-limit, limit);
    return w;
}

// Nonzero bias init keeps a fully dead ReLU row from producing an exactly
// zero feature vector, which the normalization layer rejects.
Matrix bias_uniform(std::size_t out, std::size_t fan_in, Rng& rng) {
    const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix b(1, out);
    for (double& v : b.storage()) v = rng.uniform(-limit, limit);
    return b;
}

} // namespace

Model init_model(const ModelConfig& config) {
    config.validate();
    Rng rng(derive_seed(config.seed, /*role=*/0x6d6f64656cULL)); // "model"
    Model m;
    m.config = config;
    std::size_t in = config.input_dim;
    for (std::size_t h : config.hidden_dims) {
        ExtractorLayer layer;
        layer.w = he_uniform(h, in, rng);
        layer.b = bias_uniform(h, in, rng);
        layer.bn_source = BatchNormState::make(h, config.bn_epsilon, config.bn_momentum);
        layer.bn_target = BatchNormState::make(h, config.bn_epsilon, config.bn_momentum);
        m.hidden.push_back(std::move(layer));
        in = h;
    }
    m.head_w = he_uniform(config.feat_dim, in, rng);
    m.head_b = bias_uniform(config.feat_dim, in, rng);
    Matrix proto(config.num_classes, config.feat_dim);
    for (double& v : proto.storage()) v = rng.normal();
    m.prototypes = l2_normalize_rows(proto).first;
    return m;
}

Matrix forward_features(Model& model, const Matrix& x, Domain domain, bool training,
                        ForwardCache* cache) {
    if (x.cols() != model.config.input_dim) {
        throw ShapeError("forward_features: input width " + std::to_string(x.cols()) +
                         " != " + std::to_string(model.config.input_dim));
    }
    if (cache) {
        cache->domain = domain;
        cache->layers.clear();
    }
    Matrix h = x;
    for (std::size_t l = 0; l < model.hidden.size(); ++l) {
        ExtractorLayer& layer = model.hidden[l];
        LayerCache lc;
        lc.input = h;
        Matrix pre = affine_forward(h, layer.w, layer.b);
        BatchNormState& bn = model.bn(l, domain);
        Matrix bn_out = batchnorm_forward(pre, bn, training, cache ? &lc.bn : nullptr);
        if (cache) lc.bn_out = bn_out;
        h = relu_forward(bn_out);
        if (cache) cache->layers.push_back(std::move(lc));
    }
    if (cache) cache->head_in = h;
    Matrix feat = affine_forward(h, model.head_w, model.head_b);
    auto [f_hat, norms] = l2_normalize_rows(feat);
    if (cache) {
        cache->feat_raw = std::move(feat);
        cache->norms = std::move(norms);
        cache->f_hat = f_hat;
    }
    return f_hat;
}

std::pair<Matrix, Matrix> classify(const Model& model, const Matrix& f_hat) {
    Matrix logits = matmul_nt(f_hat, model.prototypes);
    kernels::scale(logits.size(), 1.0 / model.config.tau_cls, logits.data());
    Matrix probs = softmax_rows(logits, 1.0);
    return {std::move(logits), std::move(probs)};
}

Matrix normalized_prototypes(const Model& model) {
    return l2_normalize_rows(model.prototypes).first;
}

ModelGrads ModelGrads::zeros_like(const Model& model) {
    ModelGrads g;
    for (const auto& layer : model.hidden) {
        LayerGrads lg;
        lg.d_w = Matrix(layer.w.rows(), layer.w.cols());
        lg.d_b = Matrix(1, layer.b.cols());
        lg.d_gamma_source = Matrix(1, layer.bn_source.gamma.cols());
        lg.d_beta_source = Matrix(1, layer.bn_source.beta.cols());
        lg.d_gamma_target = Matrix(1, layer.bn_target.gamma.cols());
        lg.d_beta_target = Matrix(1, layer.bn_target.beta.cols());
        g.hidden.push_back(std::move(lg));
    }
    g.d_head_w = Matrix(model.head_w.rows(), model.head_w.cols());
    g.d_head_b = Matrix(1, model.head_b.cols());
    g.d_prototypes = Matrix(model.prototypes.rows(), model.prototypes.cols());
    return g;
}

namespace {

void accumulate(Matrix& into, const Matrix& from) {
    if (!into.same_shape(from)) throw ShapeError("gradient accumulate: shape mismatch");
    kernels::add(into.size(), from.data(), into.data());
}

} // namespace

void model_backward(const Model& model, const ForwardCache& cache, const Matrix& d_f_hat,
                    const Matrix& d_logits, ModelGrads& grads) {
    if (grads.hidden.size() != model.hidden.size()) {
        throw ShapeError("model_backward: grads do not match model layout");
    }
    const std::size_t batch = cache.f_hat.rows();
    Matrix d_fhat_total(batch, model.config.feat_dim);
    if (d_f_hat.size() > 0) {
        ensure_shape(d_f_hat, batch, model.config.feat_dim, "model_backward d_f_hat");
        accumulate(d_fhat_total, d_f_hat);
    }
    if (d_logits.size() > 0) {
        ensure_shape(d_logits, batch, model.config.num_classes, "model_backward d_logits");
        // logits = f_hat W^T / tau
        Matrix d_from_logits = matmul(d_logits, model.prototypes);
        kernels::scale(d_from_logits.size(), 1.0 / model.config.tau_cls, d_from_logits.data());
        accumulate(d_fhat_total, d_from_logits);
        Matrix d_proto = matmul_tn(d_logits, cache.f_hat);
        kernels::scale(d_proto.size(), 1.0 / model.config.tau_cls, d_proto.data());
        accumulate(grads.d_prototypes, d_proto);
    }

    Matrix d = l2_normalize_backward(cache.feat_raw, cache.norms, d_fhat_total);
    AffineGrads head = affine_backward(cache.head_in, model.head_w, d);
    accumulate(grads.d_head_w, head.d_w);
    accumulate(grads.d_head_b, head.d_b);
    d = std::move(head.d_x);

    for (std::size_t l = model.hidden.size(); l-- > 0;) {
        const ExtractorLayer& layer = model.hidden[l];
        const LayerCache& lc = cache.layers[l];
        Matrix d_bn_out = relu_backward(lc.bn_out, d);
        const BatchNormState& bn = model.bn(l, cache.domain);
        BatchNormGrads bng = batchnorm_backward(lc.bn, bn, d_bn_out);
        if (cache.domain == Domain::Source) {
            accumulate(grads.hidden[l].d_gamma_source, bng.d_gamma);
            accumulate(grads.hidden[l].d_beta_source, bng.d_beta);
        } else {
            accumulate(grads.hidden[l].d_gamma_target, bng.d_gamma);
            accumulate(grads.hidden[l].d_beta_target, bng.d_beta);
        }
        AffineGrads ag = affine_backward(lc.input, layer.w, bng.d_x);
        accumulate(grads.hidden[l].d_w, ag.d_w);
        accumulate(grads.hidden[l].d_b, ag.d_b);
        d = std::move(ag.d_x);
    }
}

std::vector<ParamRef> parameter_refs(Model& model) {
    std::vector<ParamRef> refs;
    for (auto& layer : model.hidden) {
        refs.push_back({layer.w.data(), layer.w.size()});
        refs.push_back({layer.b.data(), layer.b.size()});
        refs.push_back({layer.bn_source.gamma.data(), layer.bn_source.gamma.size()});
        refs.push_back({layer.bn_source.beta.data(), layer.bn_source.beta.size()});
        refs.push_back({layer.bn_target.gamma.data(), layer.bn_target.gamma.size()});
        refs.push_back({layer.bn_target.beta.data(), layer.bn_target.beta.size()});
    }
    refs.push_back({model.head_w.data(), model.head_w.size()});
    refs.push_back({model.head_b.data(), model.head_b.size()});
    refs.push_back({model.prototypes.data(), model.prototypes.size()});
    return refs;
}

std::vector<ParamRef> grad_refs(ModelGrads& grads) {
    std::vector<ParamRef> refs;
    for (auto& lg : grads.hidden) {
        refs.push_back({lg.d_w.data(), lg.d_w.size()});
        refs.push_back({lg.d_b.data(), lg.d_b.size()});
        refs.push_back({lg.d_gamma_source.data(), lg.d_gamma_source.size()});
        refs.push_back({lg.d_beta_source.data(), lg.d_beta_source.size()});
        refs.push_back({lg.d_gamma_target.data(), lg.d_gamma_target.size()});
        refs.push_back({lg.d_beta_target.data(), lg.d_beta_target.size()});
    }
    refs.push_back({grads.d_head_w.data(), grads.d_head_w.size()});
    refs.push_back({grads.d_head_b.data(), grads.d_head_b.size()});
    refs.push_back({grads.d_prototypes.data(), grads.d_prototypes.size()});
    return refs;
}

// --- checkpoint io ----------------------------------------------------------

namespace {

using nlohmann::json;

json tensor_to_json(const Matrix& m) {
    return json{{"shape", {m.rows(), m.cols()}}, {"data", m.storage()}};
}

Matrix tensor_from_json(const json& j) {
    const auto shape = j.at("shape");
    std::vector<double> data = j.at("data").get<std::vector<double>>();
    return Matrix(shape.at(0).get<std::size_t>(), shape.at(1).get<std::size_t>(),
                  std::move(data));
}

void put_bn(json& tensors, const std::string& prefix, const BatchNormState& bn) {
    tensors[prefix + ".gamma"] = tensor_to_json(bn.gamma);
    tensors[prefix + ".beta"] = tensor_to_json(bn.beta);
    tensors[prefix + ".running_mean"] = tensor_to_json(bn.running_mean);
    tensors[prefix + ".running_var"] = tensor_to_json(bn.running_var);
}

void get_bn(const json& tensors, const std::string& prefix, BatchNormState& bn) {
    bn.gamma = tensor_from_json(tensors.at(prefix + ".gamma"));
    bn.beta = tensor_from_json(tensors.at(prefix + ".beta"));
    bn.running_mean = tensor_from_json(tensors.at(prefix + ".running_mean"));
    bn.running_var = tensor_from_json(tensors.at(prefix + ".running_var"));
}

} // namespace

void save_model(const Model& model, const std::string& path) {
    json j;
    j["config"] = {
        {"input_dim", model.config.input_dim},   {"hidden_dims", model.config.hidden_dims},
        {"feat_dim", model.config.feat_dim},     {"num_classes", model.config.num_classes},
        {"tau_nc", model.config.tau_nc},         {"tau_cls", model.config.tau_cls},
        {"seed", model.config.seed},             {"bn_epsilon", model.config.bn_epsilon},
        {"bn_momentum", model.config.bn_momentum}};
    json tensors;
    for (std::size_t l = 0; l < model.hidden.size(); ++l) {
        const std::string p = "extractor." + std::to_string(l);
        tensors[p + ".w"] = tensor_to_json(model.hidden[l].w);
        tensors[p + ".b"] = tensor_to_json(model.hidden[l].b);
        put_bn(tensors, p + ".bn.source", model.hidden[l].bn_source);
        put_bn(tensors, p + ".bn.target", model.hidden[l].bn_target);
    }
    tensors["head.w"] = tensor_to_json(model.head_w);
    tensors["head.b"] = tensor_to_json(model.head_b);
    tensors["prototypes"] = tensor_to_json(model.prototypes);
    j["tensors"] = std::move(tensors);

    std::ofstream out(path);
    if (!out) throw IoError("save_model: cannot open " + path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("save_model: write failed for " + path);
}

Model load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_model: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("load_model: " + std::string(e.what()));
    }
    const json& c = j.at("config");
    ModelConfig config;
    config.input_dim = c.at("input_dim").get<std::size_t>();
    config.hidden_dims = c.at("hidden_dims").get<std::vector<std::size_t>>();
    config.feat_dim = c.at("feat_dim").get<std::size_t>();
    config.num_classes = c.at("num_classes").get<std::size_t>();
    config.tau_nc = c.at("tau_nc").get<double>();
    config.tau_cls = c.at("tau_cls").get<double>();
    config.seed = c.at("seed").get<std::uint64_t>();
    config.bn_epsilon = c.at("bn_epsilon").get<double>();
    config.bn_momentum = c.at("bn_momentum").get<double>();

    Model model = init_model(config);
    const json& tensors = j.at("tensors");
    for (std::size_t l = 0; l < model.hidden.size(); ++l) {
        const std::string p = "extractor." + std::to_string(l);
        model.hidden[l].w = tensor_from_json(tensors.at(p + ".w"));
        model.hidden[l].b = tensor_from_json(tensors.at(p + ".b"));
        get_bn(tensors, p + ".bn.source", model.hidden[l].bn_source);
        get_bn(tensors, p + ".bn.target", model.hidden[l].bn_target);
    }
    model.head_w = tensor_from_json(tensors.at("head.w"));
    model.head_b = tensor_from_json(tensors.at("head.b"));
    model.prototypes = tensor_from_json(tensors.at("prototypes"));
    return model;
}

} // namespace dance
