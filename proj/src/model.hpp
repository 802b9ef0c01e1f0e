// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0
//
// Parameters of the toy decoder-only vision-language model: token and
// position embeddings, the vision adapter g, a pre-norm causal decoder stack
// and the output head.

#pragma once

#include "tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace disclvlm {

struct ModelConfig {
    int vocab_size = 0;  // 0 = size of the grammar vocabulary
    int model_dim = 64;
    int num_layers = 2;
    int num_heads = 4;
    int mlp_dim = 256;
    int max_seq_len = 256;
    int num_vision_tokens = 8;
    int vision_feature_dim = 32;
    std::uint64_t seed = 0;

    int head_dim() const { return model_dim / num_heads; }
    void validate() const;  // throws kConfig
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Ordered, name-addressed tensor collection. Vectors are stored as 1 x n.
template <typename T>
struct ParamSet {
    std::vector<std::string> names;
    std::vector<Mat<T>> tensors;

    int add(std::string name, Mat<T> value);
    int find(const std::string& name) const;  // -1 if absent
    int index(const std::string& name) const;  // throws kParameter
    std::size_t size() const { return tensors.size(); }
    Mat<T>& operator[](int i) { return tensors[static_cast<std::size_t>(i)]; }
    const Mat<T>& operator[](int i) const { return tensors[static_cast<std::size_t>(i)]; }

    ParamSet zeros_like() const;
    void set_zero();
    std::uint64_t hash() const;
    std::size_t num_values() const;
    bool all_finite() const;

    template <typename U>
    ParamSet<U> cast() const {
        ParamSet<U> out;
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            out.add(names[i], tensors[i].template cast<U>());
        }
        return out;
    }
};

struct LayerSlots {
    int ln1_g, ln1_b;
    int wq, wk, wv, wo;
    int ln2_g, ln2_b;
    int up, up_b, down, down_b;
};

struct ModelSlots {
    int tok_emb, pos_emb;
    int vis_w, vis_b;
    std::vector<LayerSlots> layers;
    int lnf_g, lnf_b;
    int head_w, head_b;
};

// Names of the linear maps a low-rank adapter may target.
std::vector<std::string> adaptable_linear_names(const ModelConfig& config, bool include_vision);

template <typename T>
class TinyLvlm {
public:
    TinyLvlm() = default;
    TinyLvlm(ModelConfig config, ParamSet<T> params);

    // Gaussian init (sigma 0.02, residual projections scaled by 1/sqrt(2L)),
    // unit layer-norm gains, zero biases.
    static TinyLvlm initialize(ModelConfig config);

    const ModelConfig& config() const { return config_; }
    const ParamSet<T>& params() const { return params_; }
    ParamSet<T>& params() { return params_; }
    const ModelSlots& slots() const { return slots_; }

    template <typename U>
    TinyLvlm<U> cast() const {
        return TinyLvlm<U>(config_, params_.template cast<U>());
    }

private:
    ModelConfig config_;
    ParamSet<T> params_;
    ModelSlots slots_{};
};

extern template struct ParamSet<float>;
extern template struct ParamSet<double>;
extern template class TinyLvlm<float>;
extern template class TinyLvlm<double>;

}  // namespace disclvlm
