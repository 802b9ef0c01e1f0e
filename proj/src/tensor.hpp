// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense matrix aliases and the small numeric kernels shared by the forward
// and backward passes (layer norm, GELU, row softmax).

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace disclvlm {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
bool all_finite(const Mat<T>& m) {
    return m.allFinite();
}

// FNV-1a over the raw bytes of every entry; used for frozen-weight checks.
template <typename T>
std::uint64_t hash_bytes(const Mat<T>& m, std::uint64_t h = 1469598103934665603ULL) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
    const std::size_t n = static_cast<std::size_t>(m.size()) * sizeof(T);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    return h;
}

template <typename T>
struct LayerNormCache {
    Mat<T> xhat;
    Vec<T> rstd;
};

inline constexpr double kLayerNormEps = 1e-5;

// y = g * (x - mean) / sqrt(var + eps) + b, row-wise.
template <typename T>
void layer_norm_forward(const Mat<T>& x, const Mat<T>& gain, const Mat<T>& bias, Mat<T>& y,
                        LayerNormCache<T>& cache) {
    const Eigen::Index rows = x.rows();
    const Eigen::Index cols = x.cols();
    cache.xhat.resize(rows, cols);
    cache.rstd.resize(rows);
    y.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const T mean = x.row(r).mean();
        const T var = (x.row(r).array() - mean).square().mean();
        const T rstd = T(1) / std::sqrt(var + T(kLayerNormEps));
        cache.rstd(r) = rstd;
        cache.xhat.row(r) = (x.row(r).array() - mean) * rstd;
        y.row(r) = cache.xhat.row(r).array() * gain.row(0).array() + bias.row(0).array();
    }
}

// Accumulates into dgain/dbias when they are non-null.
template <typename T>
void layer_norm_backward(const Mat<T>& dy, const Mat<T>& gain, const LayerNormCache<T>& cache,
                         Mat<T>& dx, Mat<T>* dgain, Mat<T>* dbias) {
    const Eigen::Index rows = dy.rows();
    const Eigen::Index cols = dy.cols();
    dx.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto xhat = cache.xhat.row(r).array();
        const Eigen::Array<T, 1, Eigen::Dynamic> dxhat = dy.row(r).array() * gain.row(0).array();
        const T mean_dxhat = dxhat.mean();
        const T mean_dxhat_xhat = (dxhat * xhat).mean();
        dx.row(r) = cache.rstd(r) * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
    }
    if (dgain != nullptr) {
        dgain->row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    }
    if (dbias != nullptr) {
        dbias->row(0) += dy.colwise().sum();
    }
}

// tanh approximation of GELU.
template <typename T>
T gelu(T u) {
    constexpr T kC = T(0.7978845608028654);
    const T t = std::tanh(kC * (u + T(0.044715) * u * u * u));
    return T(0.5) * u * (T(1) + t);
}

template <typename T>
T gelu_grad(T u) {
    constexpr T kC = T(0.7978845608028654);
    const T t = std::tanh(kC * (u + T(0.044715) * u * u * u));
    return T(0.5) * (T(1) + t) + T(0.5) * u * (T(1) - t * t) * kC * (T(1) + T(3 * 0.044715) * u * u);
}

// Whole-matrix GELU; keeps the tanh term for the backward pass.
template <typename T>
void gelu_forward(const Mat<T>& u, Mat<T>& tanh_term, Mat<T>& out) {
    constexpr T kC = T(0.7978845608028654);
    tanh_term = (kC * (u.array() + T(0.044715) * u.array().cube())).tanh().matrix();
    out = (T(0.5) * u.array() * (T(1) + tanh_term.array())).matrix();
}

template <typename T>
Mat<T> gelu_backward(const Mat<T>& d_out, const Mat<T>& u, const Mat<T>& tanh_term) {
    constexpr T kC = T(0.7978845608028654);
    const auto t = tanh_term.array();
    const auto x = u.array();
    return (d_out.array() * (T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * kC *
                                                      (T(1) + T(3 * 0.044715) * x * x)))
        .matrix();
}

// Numerically stable softmax of one row; entries equal to -inf map to exactly 0.
template <typename T, typename Row>
void softmax_inplace(Row&& row) {
    const T max = row.maxCoeff();
    row = (row.array() - max).exp();
    row /= row.sum();
}

template <typename T>
Vec<T> softmax(std::span<const T> logits) {
    Vec<T> out(static_cast<Eigen::Index>(logits.size()));
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out(static_cast<Eigen::Index>(i)) = logits[i];
    }
    softmax_inplace<T>(out);
    return out;
}

}  // namespace disclvlm
