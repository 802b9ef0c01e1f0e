// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "model.hpp"

#include "error.hpp"
#include "rng.hpp"
#include "tokenizer.hpp"

#include <cmath>

namespace disclvlm {

void ModelConfig::validate() const {
    require(vocab_size >= special::kCount, ErrorCode::kConfig, "vocab_size too small");
    require(model_dim > 0 && num_heads > 0 && model_dim % num_heads == 0, ErrorCode::kConfig,
            "model_dim must be a positive multiple of num_heads");
    require(num_layers >= 1, ErrorCode::kConfig, "num_layers must be >= 1");
    require(mlp_dim >= 1, ErrorCode::kConfig, "mlp_dim must be >= 1");
    require(num_vision_tokens >= 1, ErrorCode::kConfig, "num_vision_tokens must be >= 1");
    require(vision_feature_dim >= 1, ErrorCode::kConfig, "vision_feature_dim must be >= 1");
    require(max_seq_len > num_vision_tokens, ErrorCode::kConfig,
            "max_seq_len must exceed num_vision_tokens");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"vocab_size", c.vocab_size},
         {"model_dim", c.model_dim},
         {"num_layers", c.num_layers},
         {"num_heads", c.num_heads},
         {"mlp_dim", c.mlp_dim},
         {"max_seq_len", c.max_seq_len},
         {"num_vision_tokens", c.num_vision_tokens},
         {"vision_feature_dim", c.vision_feature_dim},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.model_dim = j.value("model_dim", c.model_dim);
    c.num_layers = j.value("num_layers", c.num_layers);
    c.num_heads = j.value("num_heads", c.num_heads);
    c.mlp_dim = j.value("mlp_dim", c.mlp_dim);
    c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
    c.num_vision_tokens = j.value("num_vision_tokens", c.num_vision_tokens);
    c.vision_feature_dim = j.value("vision_feature_dim", c.vision_feature_dim);
    c.seed = j.value("seed", c.seed);
}

template <typename T>
int ParamSet<T>::add(std::string name, Mat<T> value) {
    require(find(name) < 0, ErrorCode::kParameter, "duplicate parameter '" + name + "'");
    names.push_back(std::move(name));
    tensors.push_back(std::move(value));
    return static_cast<int>(tensors.size()) - 1;
}

template <typename T>
int ParamSet<T>::find(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<int>(i);
    }
    return -1;
}

template <typename T>
int ParamSet<T>::index(const std::string& name) const {
    const int i = find(name);
    require(i >= 0, ErrorCode::kParameter, "no parameter named '" + name + "'");
    return i;
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros_like() const {
    ParamSet out;
    out.names = names;
    out.tensors.reserve(tensors.size());
    for (const auto& t : tensors) {
        out.tensors.push_back(Mat<T>::Zero(t.rows(), t.cols()));
    }
    return out;
}

template <typename T>
void ParamSet<T>::set_zero() {
    for (auto& t : tensors) t.setZero();
}

template <typename T>
std::uint64_t ParamSet<T>::hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& t : tensors) h = hash_bytes(t, h);
    return h;
}

template <typename T>
std::size_t ParamSet<T>::num_values() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += static_cast<std::size_t>(t.size());
    return n;
}

template <typename T>
bool ParamSet<T>::all_finite() const {
    for (const auto& t : tensors) {
        if (!t.allFinite()) return false;
    }
    return true;
}

std::vector<std::string> adaptable_linear_names(const ModelConfig& config, bool include_vision) {
    std::vector<std::string> names;
    for (int l = 0; l < config.num_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        for (const char* n : {"attn.wq", "attn.wk", "attn.wv", "attn.wo", "mlp.up", "mlp.down"}) {
            names.push_back(p + n);
        }
    }
    if (include_vision) names.emplace_back("vision.w");
    return names;
}

namespace {

ModelSlots resolve_slots(const ModelConfig& config, const std::vector<std::string>& names) {
    auto idx = [&](const std::string& n) {
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (names[i] == n) return static_cast<int>(i);
        }
        fail(ErrorCode::kParameter, "model is missing parameter '" + n + "'");
    };
    ModelSlots s{};
    s.tok_emb = idx("tok_emb");
    s.pos_emb = idx("pos_emb");
    s.vis_w = idx("vision.w");
    s.vis_b = idx("vision.b");
    for (int l = 0; l < config.num_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        s.layers.push_back(LayerSlots{idx(p + "ln1.g"), idx(p + "ln1.b"), idx(p + "attn.wq"),
                                      idx(p + "attn.wk"), idx(p + "attn.wv"), idx(p + "attn.wo"),
                                      idx(p + "ln2.g"), idx(p + "ln2.b"), idx(p + "mlp.up"),
                                      idx(p + "mlp.up_b"), idx(p + "mlp.down"),
                                      idx(p + "mlp.down_b")});
    }
    s.lnf_g = idx("final_ln.g");
    s.lnf_b = idx("final_ln.b");
    s.head_w = idx("head.w");
    s.head_b = idx("head.b");
    return s;
}

}  // namespace

template <typename T>
TinyLvlm<T>::TinyLvlm(ModelConfig config, ParamSet<T> params)
    : config_(config), params_(std::move(params)) {
    config_.validate();
    slots_ = resolve_slots(config_, params_.names);
    const int d = config_.model_dim;
    auto expect = [&](int slot, int rows, int cols) {
        const auto& t = params_[slot];
        require(t.rows() == rows && t.cols() == cols, ErrorCode::kShape,
                "parameter '" + params_.names[static_cast<std::size_t>(slot)] + "' has shape " +
                    std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
    };
    expect(slots_.tok_emb, config_.vocab_size, d);
    expect(slots_.pos_emb, config_.max_seq_len, d);
    expect(slots_.vis_w, d, config_.vision_feature_dim);
    expect(slots_.vis_b, 1, d);
    for (const auto& l : slots_.layers) {
        expect(l.wq, d, d);
        expect(l.wk, d, d);
        expect(l.wv, d, d);
        expect(l.wo, d, d);
        expect(l.up, config_.mlp_dim, d);
        expect(l.down, d, config_.mlp_dim);
    }
    expect(slots_.head_w, config_.vocab_size, d);
    expect(slots_.head_b, 1, config_.vocab_size);
}

template <typename T>
TinyLvlm<T> TinyLvlm<T>::initialize(ModelConfig config) {
    if (config.vocab_size == 0) config.vocab_size = Tokenizer::instance().vocab_size();
    config.validate();
    Rng rng = make_rng(config.seed, "model-init");
    const int d = config.model_dim;
    auto normal = [&](int rows, int cols, double sigma) {
        Mat<T> m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            m.data()[i] = static_cast<T>(sigma * gaussian(rng));
        }
        return m;
    };
    const double sigma = 0.02;
    const double residual_sigma = sigma / std::sqrt(2.0 * config.num_layers);
    ParamSet<T> p;
    p.add("tok_emb", normal(config.vocab_size, d, sigma));
    p.add("pos_emb", normal(config.max_seq_len, d, sigma));
    p.add("vision.w", normal(d, config.vision_feature_dim, 1.0 / std::sqrt(config.vision_feature_dim) * 0.1));
    p.add("vision.b", Mat<T>::Zero(1, d));
    for (int l = 0; l < config.num_layers; ++l) {
        const std::string pre = "layers." + std::to_string(l) + ".";
        p.add(pre + "ln1.g", Mat<T>::Ones(1, d));
        p.add(pre + "ln1.b", Mat<T>::Zero(1, d));
        p.add(pre + "attn.wq", normal(d, d, sigma));
        p.add(pre + "attn.wk", normal(d, d, sigma));
        p.add(pre + "attn.wv", normal(d, d, sigma));
        p.add(pre + "attn.wo", normal(d, d, residual_sigma));
        p.add(pre + "ln2.g", Mat<T>::Ones(1, d));
        p.add(pre + "ln2.b", Mat<T>::Zero(1, d));
        p.add(pre + "mlp.up", normal(config.mlp_dim, d, sigma));
        p.add(pre + "mlp.up_b", Mat<T>::Zero(1, config.mlp_dim));
        p.add(pre + "mlp.down", normal(d, config.mlp_dim, residual_sigma));
        p.add(pre + "mlp.down_b", Mat<T>::Zero(1, d));
    }
    p.add("final_ln.g", Mat<T>::Ones(1, d));
    p.add("final_ln.b", Mat<T>::Zero(1, d));
    p.add("head.w", normal(config.vocab_size, d, sigma));
    p.add("head.b", Mat<T>::Zero(1, config.vocab_size));
    return TinyLvlm(config, std::move(p));
}

template struct ParamSet<float>;
template struct ParamSet<double>;
template class TinyLvlm<float>;
template class TinyLvlm<double>;

}  // namespace disclvlm
