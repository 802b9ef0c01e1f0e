// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "engine.hpp"

#include "error.hpp"

#include <cmath>

namespace disclvlm {

template <typename T>
Gradients<T> Gradients<T>::for_training(const TinyLvlm<T>& model, const AdapterSet<T>* adapters,
                                        bool base_trainable) {
    Gradients g;
    if (base_trainable) g.model = model.params().zeros_like();
    if (adapters != nullptr) g.adapters = adapters->params().zeros_like();
    return g;
}

template <typename T>
void Gradients<T>::set_zero() {
    model.set_zero();
    adapters.set_zero();
}

template <typename T>
DecoderPass<T>::DecoderPass(const TinyLvlm<T>& model, const AdapterSet<T>* adapters)
    : model_(model), adapters_(adapters) {}

template <typename T>
const Mat<T>& DecoderPass<T>::attention(int layer, int row, int head) const {
    require(layer >= 0 && layer < static_cast<int>(layers_.size()) && row >= 0 &&
                row < num_rows() && head >= 0 && head < model_.config().num_heads,
            ErrorCode::kParameter, "attention index out of range");
    return layers_[static_cast<std::size_t>(layer)]
        .probs[static_cast<std::size_t>(row * model_.config().num_heads + head)];
}

template <typename T>
void DecoderPass<T>::linear_forward(const Mat<T>& x, int weight_slot, int bias_slot, Mat<T>& y,
                                    LinearCache& cache) const {
    const auto& w = model_.params()[weight_slot];
    y.noalias() = x * w.transpose();
    if (bias_slot >= 0) {
        y.rowwise() += model_.params()[bias_slot].row(0);
    }
    const auto* lora = adapters_ != nullptr ? adapters_->lora_for(weight_slot) : nullptr;
    if (lora != nullptr) {
        const auto& down = adapters_->params()[lora->down];
        const auto& up = adapters_->params()[lora->up];
        const T scale = static_cast<T>(lora->alpha / static_cast<double>(down.rows()));
        cache.projected.noalias() = x * down.transpose();
        y.noalias() += scale * (cache.projected * up.transpose());
    }
}

template <typename T>
void DecoderPass<T>::linear_backward(const Mat<T>& dy, const Mat<T>& x, int weight_slot,
                                     int bias_slot, const LinearCache& cache, Mat<T>* dx,
                                     Gradients<T>& grads) const {
    const auto& w = model_.params()[weight_slot];
    if (dx != nullptr) {
        dx->noalias() = dy * w;
    }
    if (grads.model.size() != 0) {
        grads.model[weight_slot].noalias() += dy.transpose() * x;
        if (bias_slot >= 0) {
            grads.model[bias_slot].row(0) += dy.colwise().sum();
        }
    }
    const auto* lora = adapters_ != nullptr ? adapters_->lora_for(weight_slot) : nullptr;
    if (lora != nullptr) {
        const auto& down = adapters_->params()[lora->down];
        const auto& up = adapters_->params()[lora->up];
        const T scale = static_cast<T>(lora->alpha / static_cast<double>(down.rows()));
        const Mat<T> dy_up = dy * up;  // [tokens x rank]
        if (dx != nullptr) {
            dx->noalias() += scale * (dy_up * down);
        }
        if (grads.adapters.size() != 0) {
            grads.adapters[lora->up].noalias() += scale * (dy.transpose() * cache.projected);
            grads.adapters[lora->down].noalias() += scale * (dy_up.transpose() * x);
        }
    }
}

template <typename T>
void DecoderPass<T>::forward(const AssembledBatch& batch, LogitSelection selection) {
    const auto& cfg = model_.config();
    const auto& p = model_.params();
    const auto& s = model_.slots();
    const int d = cfg.model_dim;
    const int heads = cfg.num_heads;
    const int dh = cfg.head_dim();

    require(p.all_finite(), ErrorCode::kNumeric, "model parameters contain non-finite values");
    if (adapters_ != nullptr) {
        require(adapters_->params().all_finite(), ErrorCode::kNumeric,
                "adapter parameters contain non-finite values");
    }

    batch_ = &batch;
    offsets_.clear();
    lengths_.clear();
    total_ = 0;
    int vision_rows = 0;
    for (const auto& row : batch.rows) {
        require(row.length() >= 1, ErrorCode::kTemplate, "empty row");
        require(row.length() <= cfg.max_seq_len, ErrorCode::kLength,
                "row of " + std::to_string(row.length()) + " tokens exceeds max_seq_len " +
                    std::to_string(cfg.max_seq_len));
        for (const auto id : row.tokens) {
            require(id >= 0 && id < cfg.vocab_size, ErrorCode::kVocabulary,
                    "token id " + std::to_string(id) + " outside the model vocabulary");
        }
        offsets_.push_back(total_);
        lengths_.push_back(row.length());
        total_ += row.length();
        vision_rows += row.vision.size();
    }

    // Vision slots carry g(features), not token embeddings.
    vision_input_.resize(vision_rows, cfg.vision_feature_dim);
    vision_positions_.clear();
    for (std::size_t r = 0; r < batch.rows.size(); ++r) {
        const auto& row = batch.rows[r];
        if (row.vision.empty()) continue;
        require(row.features >= 0 && static_cast<std::size_t>(row.features) < batch.features.size(),
                ErrorCode::kTemplate, "image row without scene features");
        const auto& f = batch.features[static_cast<std::size_t>(row.features)];
        require(f.rows() == row.vision.size() && f.cols() == cfg.vision_feature_dim,
                ErrorCode::kShape, "scene features do not match the vision slots");
        require(f.allFinite(), ErrorCode::kNumeric, "scene features contain non-finite values");
        for (int i = 0; i < row.vision.size(); ++i) {
            vision_input_.row(static_cast<Eigen::Index>(vision_positions_.size())) =
                f.row(i).template cast<T>();
            vision_positions_.push_back(offsets_[r] + row.vision.begin + i);
        }
    }
    if (vision_rows > 0) {
        linear_forward(vision_input_, s.vis_w, s.vis_b, vision_out_, vision_cache_);
    }

    Mat<T> x(total_, d);
    for (std::size_t r = 0; r < batch.rows.size(); ++r) {
        const auto& row = batch.rows[r];
        const Mat<T>* soft = nullptr;
        if (row.soft_prompt) {
            const auto* slot =
                adapters_ != nullptr ? &adapters_->prompt(row.modality) : nullptr;
            require(slot != nullptr && slot->has_value(), ErrorCode::kTemplate,
                    "row requests a soft prompt but none is loaded for its modality");
            soft = &adapters_->params()[(*slot)->vectors];
            require(soft->rows() == row.prompt.size(), ErrorCode::kTemplate,
                    "soft prompt length differs from the row's prompt span");
        }
        for (int i = 0; i < row.length(); ++i) {
            const int t = offsets_[r] + i;
            if (row.segments[static_cast<std::size_t>(i)] == Segment::kVision) {
                x.row(t).setZero();  // filled below
            } else if (soft != nullptr && i >= row.prompt.begin && i < row.prompt.end) {
                x.row(t) = soft->row(i - row.prompt.begin);
            } else {
                x.row(t) = p[s.tok_emb].row(row.tokens[static_cast<std::size_t>(i)]);
            }
            x.row(t) += p[s.pos_emb].row(i);
        }
    }
    for (std::size_t k = 0; k < vision_positions_.size(); ++k) {
        x.row(vision_positions_[k]) += vision_out_.row(static_cast<Eigen::Index>(k));
    }

    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    layers_.resize(s.layers.size());
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
        const auto& ls = s.layers[l];
        auto& c = layers_[l];
        c.input = std::move(x);
        layer_norm_forward(c.input, p[ls.ln1_g], p[ls.ln1_b], c.normed1, c.ln1);
        linear_forward(c.normed1, ls.wq, -1, c.q, c.lq);
        linear_forward(c.normed1, ls.wk, -1, c.k, c.lk);
        linear_forward(c.normed1, ls.wv, -1, c.v, c.lv);

        c.context.resize(total_, d);
        c.probs.resize(batch.rows.size() * static_cast<std::size_t>(heads));
        for (std::size_t r = 0; r < batch.rows.size(); ++r) {
            const int off = offsets_[r];
            const int len = lengths_[r];
            for (int h = 0; h < heads; ++h) {
                auto& probs = c.probs[r * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)];
                const auto q = c.q.block(off, h * dh, len, dh);
                const auto k = c.k.block(off, h * dh, len, dh);
                const auto v = c.v.block(off, h * dh, len, dh);
                probs.noalias() = (q * k.transpose()) * scale;
                for (int i = 0; i < len; ++i) {
                    auto visible = probs.row(i).head(i + 1);
                    const T max = visible.maxCoeff();
                    visible = (visible.array() - max).exp();
                    visible /= visible.sum();
                    probs.row(i).tail(len - i - 1).setZero();
                }
                c.context.block(off, h * dh, len, dh).noalias() = probs * v;
            }
        }
        Mat<T> attn_out;
        linear_forward(c.context, ls.wo, -1, attn_out, c.lo);
        c.mid = c.input + attn_out;

        layer_norm_forward(c.mid, p[ls.ln2_g], p[ls.ln2_b], c.normed2, c.ln2);
        linear_forward(c.normed2, ls.up, ls.up_b, c.pre_act, c.lup);
        gelu_forward(c.pre_act, c.gelu_tanh, c.act);
        Mat<T> mlp_out;
        linear_forward(c.act, ls.down, ls.down_b, mlp_out, c.ldown);
        x = c.mid + mlp_out;
    }
    residual_out_ = std::move(x);
    layer_norm_forward(residual_out_, p[s.lnf_g], p[s.lnf_b], final_hidden_, final_ln_);

    logit_positions_.clear();
    for (std::size_t r = 0; r < batch.rows.size(); ++r) {
        const auto& row = batch.rows[r];
        switch (selection) {
            case LogitSelection::kNone: break;
            case LogitSelection::kAll:
                for (int i = 0; i < row.length(); ++i) logit_positions_.push_back(offsets_[r] + i);
                break;
            case LogitSelection::kArTargets:
                for (int i = 1; i < row.length(); ++i) {
                    if (row.ar_mask[static_cast<std::size_t>(i)] != 0) {
                        logit_positions_.push_back(offsets_[r] + i - 1);
                    }
                }
                break;
            case LogitSelection::kAnchors:
                require(row.anchor >= 0, ErrorCode::kTemplate, "row has no <out_token>");
                logit_positions_.push_back(offsets_[r] + row.anchor);
                break;
        }
    }
    Mat<T> selected(static_cast<Eigen::Index>(logit_positions_.size()), d);
    for (std::size_t i = 0; i < logit_positions_.size(); ++i) {
        selected.row(static_cast<Eigen::Index>(i)) = final_hidden_.row(logit_positions_[i]);
    }
    logits_.noalias() = selected * p[s.head_w].transpose();
    logits_.rowwise() += p[s.head_b].row(0);
    require(final_hidden_.allFinite() && logits_.allFinite(), ErrorCode::kNumeric,
            "forward pass produced non-finite values");
}

template <typename T>
void DecoderPass<T>::backward(const Mat<T>& d_hidden, const Mat<T>& d_logits,
                              Gradients<T>& grads) const {
    require(batch_ != nullptr, ErrorCode::kInternal, "backward called before forward");
    const auto& cfg = model_.config();
    const auto& p = model_.params();
    const auto& s = model_.slots();
    const int d = cfg.model_dim;
    const int heads = cfg.num_heads;
    const int dh = cfg.head_dim();
    const bool base_grads = grads.model.size() != 0;
    const bool adapter_grads = grads.adapters.size() != 0;

    Mat<T> dz = d_hidden.size() == 0 ? Mat<T>::Zero(total_, d) : d_hidden;
    require(dz.rows() == total_ && dz.cols() == d, ErrorCode::kShape, "d_hidden shape mismatch");
    if (d_logits.size() != 0) {
        require(d_logits.rows() == static_cast<Eigen::Index>(logit_positions_.size()) &&
                    d_logits.cols() == cfg.vocab_size,
                ErrorCode::kShape, "d_logits shape mismatch");
        const Mat<T> d_selected = d_logits * p[s.head_w];
        Mat<T> selected(static_cast<Eigen::Index>(logit_positions_.size()), d);
        for (std::size_t i = 0; i < logit_positions_.size(); ++i) {
            dz.row(logit_positions_[i]) += d_selected.row(static_cast<Eigen::Index>(i));
            selected.row(static_cast<Eigen::Index>(i)) = final_hidden_.row(logit_positions_[i]);
        }
        if (base_grads) {
            grads.model[s.head_w].noalias() += d_logits.transpose() * selected;
            grads.model[s.head_b].row(0) += d_logits.colwise().sum();
        }
    }

    Mat<T> dh_stream;
    layer_norm_backward(dz, p[s.lnf_g], final_ln_, dh_stream,
                        base_grads ? &grads.model[s.lnf_g] : nullptr,
                        base_grads ? &grads.model[s.lnf_b] : nullptr);

    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    for (std::size_t li = s.layers.size(); li-- > 0;) {
        const auto& ls = s.layers[li];
        const auto& c = layers_[li];

        // MLP block.
        Mat<T> d_act;
        linear_backward(dh_stream, c.act, ls.down, ls.down_b, c.ldown, &d_act, grads);
        const Mat<T> d_pre = gelu_backward(d_act, c.pre_act, c.gelu_tanh);
        Mat<T> d_normed2;
        linear_backward(d_pre, c.normed2, ls.up, ls.up_b, c.lup, &d_normed2, grads);
        Mat<T> d_mid_ln;
        layer_norm_backward(d_normed2, p[ls.ln2_g], c.ln2, d_mid_ln,
                            base_grads ? &grads.model[ls.ln2_g] : nullptr,
                            base_grads ? &grads.model[ls.ln2_b] : nullptr);
        Mat<T> d_mid = dh_stream + d_mid_ln;

        // Attention block.
        Mat<T> d_context;
        linear_backward(d_mid, c.context, ls.wo, -1, c.lo, &d_context, grads);
        Mat<T> dq = Mat<T>::Zero(total_, d);
        Mat<T> dk = Mat<T>::Zero(total_, d);
        Mat<T> dv = Mat<T>::Zero(total_, d);
        for (std::size_t r = 0; r < batch_->rows.size(); ++r) {
            const int off = offsets_[r];
            const int len = lengths_[r];
            for (int h = 0; h < heads; ++h) {
                const auto& probs = c.probs[r * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)];
                const auto q = c.q.block(off, h * dh, len, dh);
                const auto k = c.k.block(off, h * dh, len, dh);
                const auto v = c.v.block(off, h * dh, len, dh);
                const auto dc = d_context.block(off, h * dh, len, dh);
                const Mat<T> d_probs = dc * v.transpose();
                dv.block(off, h * dh, len, dh).noalias() = probs.transpose() * dc;
                const Vec<T> row_dot = probs.cwiseProduct(d_probs).rowwise().sum();
                const Mat<T> d_scores =
                    probs.cwiseProduct(d_probs - row_dot.replicate(1, len)) * scale;
                dq.block(off, h * dh, len, dh).noalias() = d_scores * k;
                dk.block(off, h * dh, len, dh).noalias() = d_scores.transpose() * q;
            }
        }
        Mat<T> d_normed1;
        Mat<T> tmp;
        linear_backward(dq, c.normed1, ls.wq, -1, c.lq, &d_normed1, grads);
        linear_backward(dk, c.normed1, ls.wk, -1, c.lk, &tmp, grads);
        d_normed1 += tmp;
        linear_backward(dv, c.normed1, ls.wv, -1, c.lv, &tmp, grads);
        d_normed1 += tmp;
        Mat<T> d_in_ln;
        layer_norm_backward(d_normed1, p[ls.ln1_g], c.ln1, d_in_ln,
                            base_grads ? &grads.model[ls.ln1_g] : nullptr,
                            base_grads ? &grads.model[ls.ln1_b] : nullptr);
        dh_stream = d_mid + d_in_ln;
    }

    // Input embeddings.
    for (std::size_t r = 0; r < batch_->rows.size(); ++r) {
        const auto& row = batch_->rows[r];
        const bool soft = row.soft_prompt && adapters_ != nullptr;
        for (int i = 0; i < row.length(); ++i) {
            const int t = offsets_[r] + i;
            if (base_grads) grads.model[s.pos_emb].row(i) += dh_stream.row(t);
            if (row.segments[static_cast<std::size_t>(i)] == Segment::kVision) continue;
            if (soft && i >= row.prompt.begin && i < row.prompt.end) {
                if (adapter_grads) {
                    const int slot = adapters_->prompt(row.modality)->vectors;
                    grads.adapters[slot].row(i - row.prompt.begin) += dh_stream.row(t);
                }
            } else if (base_grads) {
                grads.model[s.tok_emb].row(row.tokens[static_cast<std::size_t>(i)]) += dh_stream.row(t);
            }
        }
    }
    if (!vision_positions_.empty()) {
        Mat<T> d_vision(static_cast<Eigen::Index>(vision_positions_.size()), d);
        for (std::size_t k = 0; k < vision_positions_.size(); ++k) {
            d_vision.row(static_cast<Eigen::Index>(k)) = dh_stream.row(vision_positions_[k]);
        }
        linear_backward(d_vision, vision_input_, s.vis_w, s.vis_b, vision_cache_, nullptr, grads);
    }
}

template struct Gradients<float>;
template struct Gradients<double>;
template class DecoderPass<float>;
template class DecoderPass<double>;

}  // namespace disclvlm
