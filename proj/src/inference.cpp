// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "inference.hpp"

#include "error.hpp"

#include <algorithm>
#include <numeric>

namespace disclvlm {

namespace {

constexpr std::size_t kChunkRows = 64;

AssembledBatch slice(const AssembledBatch& batch, std::size_t begin, std::size_t end) {
    AssembledBatch out;
    for (std::size_t r = begin; r < end; ++r) {
        TemplateRow row = batch.rows[r];
        if (row.features >= 0) {
            out.features.push_back(batch.features[static_cast<std::size_t>(row.features)]);
            row.features = static_cast<int>(out.features.size()) - 1;
        }
        out.rows.push_back(std::move(row));
    }
    return out;
}

template <typename T>
Mat<T> anchors(const DecoderPass<T>& pass, const AssembledBatch& batch) {
    Mat<T> out(pass.num_rows(), pass.hidden().cols());
    for (int r = 0; r < pass.num_rows(); ++r) {
        const int anchor = batch.rows[static_cast<std::size_t>(r)].anchor;
        require(anchor >= 0, ErrorCode::kTemplate, "row has no <out_token>");
        out.row(r) = pass.hidden().row(pass.offset(r) + anchor);
    }
    return out;
}

}  // namespace

template <typename T>
std::vector<ForwardOutput<T>> forward(const TinyLvlm<T>& model, AdapterPtr<T> adapters,
                                      const AssembledBatch& batch, bool capture_attention) {
    DecoderPass<T> pass(model, adapters);
    pass.forward(batch, LogitSelection::kAll);
    const int heads = model.config().num_heads;
    std::vector<ForwardOutput<T>> out(batch.rows.size());
    for (int r = 0; r < pass.num_rows(); ++r) {
        auto& o = out[static_cast<std::size_t>(r)];
        o.hidden = pass.hidden().middleRows(pass.offset(r), pass.length(r));
        o.logits = pass.logits().middleRows(pass.offset(r), pass.length(r));
        if (capture_attention) {
            for (int l = 0; l < model.config().num_layers; ++l) {
                for (int h = 0; h < heads; ++h) o.attention.push_back(pass.attention(l, r, h));
            }
        }
    }
    return out;
}

template <typename T>
Mat<T> embed_rows(const TinyLvlm<T>& model, AdapterPtr<T> adapters,
                  const AssembledBatch& batch) {
    Mat<T> out(static_cast<Eigen::Index>(batch.rows.size()), model.config().model_dim);
    for (std::size_t begin = 0; begin < batch.rows.size(); begin += kChunkRows) {
        const std::size_t end = std::min(batch.rows.size(), begin + kChunkRows);
        const AssembledBatch part = slice(batch, begin, end);
        DecoderPass<T> pass(model, adapters);
        pass.forward(part, LogitSelection::kNone);
        Mat<T> h = anchors(pass, part);
        for (Eigen::Index r = 0; r < h.rows(); ++r) {
            const T n = h.row(r).norm();
            require(n > T(0) && std::isfinite(static_cast<double>(n)), ErrorCode::kNumeric,
                    "summary state has zero norm");
            out.row(static_cast<Eigen::Index>(begin) + r) = h.row(r) / n;
        }
    }
    return out;
}

template <typename T>
Embedding<T> embed(const TinyLvlm<T>& model, AdapterPtr<T> adapters,
                   const AssembledBatch& batch) {
    require(batch.rows.size() == 1, ErrorCode::kShape, "embed takes exactly one row");
    const Mat<T> e = embed_rows(model, adapters, batch);
    return Embedding<T>{e.row(0).transpose(), batch.rows[0].modality};
}

template <typename T>
T similarity(const Embedding<T>& image, const Embedding<T>& text) {
    require(image.vector.size() == text.vector.size(), ErrorCode::kShape,
            "embedding dimensions differ");
    return image.vector.dot(text.vector);
}

template <typename T>
Mat<T> next_token_distribution(const TinyLvlm<T>& model, AdapterPtr<T> adapters,
                               const AssembledBatch& batch) {
    DecoderPass<T> pass(model, adapters);
    pass.forward(batch, LogitSelection::kAnchors);
    Mat<T> p = pass.logits();
    for (Eigen::Index r = 0; r < p.rows(); ++r) softmax_inplace<T>(p.row(r));
    return p;
}

std::vector<std::pair<int, double>> top_k(std::span<const double> probs, int k) {
    require(k >= 1 && static_cast<std::size_t>(k) <= probs.size(), ErrorCode::kParameter,
            "k must lie in [1, vocab_size]");
    std::vector<int> idx(probs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
        const double pa = probs[static_cast<std::size_t>(a)];
        const double pb = probs[static_cast<std::size_t>(b)];
        return pa > pb || (pa == pb && a < b);
    });
    std::vector<std::pair<int, double>> out;
    for (int i = 0; i < k; ++i) {
        out.emplace_back(idx[static_cast<std::size_t>(i)], probs[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
    }
    return out;
}

#define DISCLVLM_INSTANTIATE(T)                                                                 \
    template std::vector<ForwardOutput<T>> forward<T>(const TinyLvlm<T>&, const AdapterSet<T>*, \
                                                      const AssembledBatch&, bool);            \
    template Mat<T> embed_rows<T>(const TinyLvlm<T>&, const AdapterSet<T>*, const AssembledBatch&); \
    template Embedding<T> embed<T>(const TinyLvlm<T>&, const AdapterSet<T>*, const AssembledBatch&); \
    template T similarity(const Embedding<T>&, const Embedding<T>&);                            \
    template Mat<T> next_token_distribution<T>(const TinyLvlm<T>&, const AdapterSet<T>*,           \
                                            const AssembledBatch&);

DISCLVLM_INSTANTIATE(float)
DISCLVLM_INSTANTIATE(double)
#undef DISCLVLM_INSTANTIATE

}  // namespace disclvlm
