// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "losses.hpp"

#include "error.hpp"

#include <cmath>
#include <vector>

namespace disclvlm {

LossValue total_loss(double contrastive, double ar_ce, double lambda_ar) {
    require(std::isfinite(contrastive) && std::isfinite(ar_ce) && contrastive >= 0.0 && ar_ce >= 0.0,
            ErrorCode::kNumeric, "loss terms must be finite and non-negative");
    require(lambda_ar >= 0.0, ErrorCode::kParameter, "lambda_ar must be non-negative");
    return LossValue{contrastive + lambda_ar * ar_ce, contrastive, ar_ce, lambda_ar};
}

template <typename T>
Mat<T> similarity_matrix(const Mat<T>& image, const Mat<T>& text) {
    require(image.cols() == text.cols(), ErrorCode::kShape, "embedding widths differ");
    return image * text.transpose();
}

template <typename T>
double contrastive_loss(const Mat<T>& image, const Mat<T>& text, double temperature,
                        ContrastiveGrad<T>* grad) {
    require(temperature > 0.0 && std::isfinite(temperature), ErrorCode::kParameter,
            "temperature must be positive");
    require(image.rows() >= 1 && image.rows() == text.rows() && image.cols() == text.cols(),
            ErrorCode::kShape, "contrastive loss needs b >= 1 paired rows of equal width");
    for (const Mat<T>* m : {&image, &text}) {
        require(m->allFinite(), ErrorCode::kNumeric, "non-finite embedding");
        for (Eigen::Index r = 0; r < m->rows(); ++r) {
            require(std::abs(static_cast<double>(m->row(r).norm()) - 1.0) < 1e-4, ErrorCode::kContract,
                    "contrastive loss expects unit-normalized rows");
        }
    }
    const Eigen::Index b = image.rows();
    const Mat<double> s = similarity_matrix(image, text).template cast<double>();
    const Mat<double> z = s / temperature;

    // Row softmax (image -> text) and column softmax (text -> image).
    Mat<double> p_row(b, b);
    Mat<double> p_col(b, b);
    double loss = 0.0;
    for (Eigen::Index k = 0; k < b; ++k) {
        const double mr = z.row(k).maxCoeff();
        const double lse_r = mr + std::log((z.row(k).array() - mr).exp().sum());
        p_row.row(k) = (z.row(k).array() - lse_r).exp();
        const double mc = z.col(k).maxCoeff();
        const double lse_c = mc + std::log((z.col(k).array() - mc).exp().sum());
        p_col.col(k) = (z.col(k).array() - lse_c).exp();
        loss += (lse_r - z(k, k)) + (lse_c - z(k, k));
    }
    loss /= static_cast<double>(b);

    if (grad != nullptr) {
        Mat<double> dz = (p_row + p_col) / static_cast<double>(b);
        dz.diagonal().array() -= 2.0 / static_cast<double>(b);
        const Mat<double> ds = dz / temperature;
        grad->d_image = (ds * text.template cast<double>()).template cast<T>();
        grad->d_text = (ds.transpose() * image.template cast<double>()).template cast<T>();
        grad->d_temperature = -(dz.array() * z.array()).sum() / temperature;
    }
    return loss;
}

template <typename T>
double next_token_nll(const Mat<T>& logits, std::span<const TokenId> targets, Mat<T>* d_logits) {
    require(!targets.empty(), ErrorCode::kDegenerate, "next-token loss over an empty target set");
    require(logits.rows() == static_cast<Eigen::Index>(targets.size()), ErrorCode::kShape,
            "one logits row per target expected");
    const Eigen::Index vocab = logits.cols();
    const double n = static_cast<double>(targets.size());
    if (d_logits != nullptr) d_logits->resize(logits.rows(), vocab);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const TokenId t = targets[static_cast<std::size_t>(i)];
        require(t >= 0 && t < vocab, ErrorCode::kVocabulary,
                "target id " + std::to_string(t) + " outside the vocabulary");
        const auto row = logits.row(i).template cast<double>();
        const double m = row.maxCoeff();
        const double lse = m + std::log((row.array() - m).exp().sum());
        loss += lse - row(t);
        if (d_logits != nullptr) {
            Eigen::Matrix<double, 1, Eigen::Dynamic> p = (row.array() - lse).exp();
            p(t) -= 1.0;
            d_logits->row(i) = (p / n).template cast<T>();
        }
    }
    const double mean = loss / n;
    require(std::isfinite(mean), ErrorCode::kNumeric, "next-token loss is not finite");
    return mean;
}

template <typename T>
double ar_loss(const Mat<T>& logits, std::span<const TokenId> targets,
               std::span<const std::uint8_t> caption_mask, Mat<T>* d_logits) {
    require(targets.size() == caption_mask.size() &&
                logits.rows() == static_cast<Eigen::Index>(targets.size()),
            ErrorCode::kShape, "logits, targets and mask must share the sequence length");
    require(caption_mask.empty() || caption_mask[0] == 0, ErrorCode::kContract,
            "position 0 has no preceding context to predict it");
    std::vector<Eigen::Index> rows;
    std::vector<TokenId> gold;
    for (std::size_t i = 1; i < caption_mask.size(); ++i) {
        if (caption_mask[i] != 0) {
            rows.push_back(static_cast<Eigen::Index>(i - 1));
            gold.push_back(targets[i]);
        }
    }
    require(!rows.empty(), ErrorCode::kDegenerate, "caption mask is empty");
    Mat<T> gathered(static_cast<Eigen::Index>(rows.size()), logits.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        gathered.row(static_cast<Eigen::Index>(i)) = logits.row(rows[i]);
    }
    Mat<T> d_gathered;
    const double loss = next_token_nll(gathered, gold, d_logits != nullptr ? &d_gathered : nullptr);
    if (d_logits != nullptr) {
        *d_logits = Mat<T>::Zero(logits.rows(), logits.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            d_logits->row(rows[i]) = d_gathered.row(static_cast<Eigen::Index>(i));
        }
    }
    return loss;
}

#define DISCLVLM_INSTANTIATE(T)                                                                   \
    template Mat<T> similarity_matrix(const Mat<T>&, const Mat<T>&);                              \
    template double contrastive_loss(const Mat<T>&, const Mat<T>&, double, ContrastiveGrad<T>*);  \
    template double ar_loss(const Mat<T>&, std::span<const TokenId>, std::span<const std::uint8_t>, \
                            Mat<T>*);                                                             \
    template double next_token_nll(const Mat<T>&, std::span<const TokenId>, Mat<T>*);

DISCLVLM_INSTANTIATE(float)
DISCLVLM_INSTANTIATE(double)
#undef DISCLVLM_INSTANTIATE

}  // namespace disclvlm
