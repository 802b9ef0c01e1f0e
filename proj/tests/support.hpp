// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0
//
// Fixtures and independent oracles shared by the unit tests and the
// acceptance runner.

#pragma once

#include "model.hpp"
#include "objective.hpp"
#include "peft.hpp"
#include "rng.hpp"
#include "scene.hpp"
#include "templater.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace disclvlm::testing {

inline ModelConfig tiny_config(std::uint64_t seed = 11) {
    ModelConfig c;
    c.model_dim = 16;
    c.num_layers = 2;
    c.num_heads = 2;
    c.mlp_dim = 32;
    c.vision_feature_dim = 8;
    c.max_seq_len = 192;
    c.seed = seed;
    return c;
}

inline std::vector<DatasetRecord> records(std::size_t n, std::uint64_t seed = 5, bool heldout = false) {
    std::vector<DatasetRecord> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(make_record(scene_seed(seed, i, heldout)));
    return out;
}

inline AssembledBatch training_batch(const std::vector<DatasetRecord>& recs, const ModelConfig& config,
                                     bool soft_prompts, TemplateMode mode = TemplateMode::kTraining) {
    std::vector<CollateItem> items;
    for (const auto& r : recs) items.push_back({&r.scene, &r.captions, true});
    TemplateOptions o;
    o.mode = mode;
    o.soft_image_prompt = soft_prompts;
    o.soft_text_prompt = soft_prompts;
    o.max_seq_len = config.max_seq_len;
    o.num_vision_tokens = config.num_vision_tokens;
    return collate(items, SceneFeaturizer(config.vision_feature_dim), o);
}

// Moves every parameter away from its structured initial value so that no
// gradient path is trivially zero (unit gains, zero LoRA up factors, ...).
template <typename T>
void jitter(ParamSet<T>& params, std::uint64_t seed, double sigma) {
    Rng rng = make_rng(seed, "test-jitter");
    for (auto& t : params.tensors) {
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            t.data()[i] += static_cast<T>(sigma * gaussian(rng));
        }
    }
}

struct GradCheck {
    std::string name;
    double rel_error = 0.0;
    double analytic_norm = 0.0;
};

// Central differences on a sample of entries per tensor: the largest
// analytic entries plus random ones. Reports the norm-wise relative error
// over the sampled entries.
template <typename Loss>
std::vector<GradCheck> finite_difference_check(ParamSet<double>& params, const ParamSet<double>& analytic,
                                               Loss&& loss, double step, std::size_t per_tensor,
                                               std::uint64_t seed) {
    std::vector<GradCheck> out;
    Rng rng = make_rng(seed, "fd-sample");
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto& p = params.tensors[t];
        const auto& g = analytic.tensors[t];
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(p.size()));
        for (Eigen::Index i = 0; i < p.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
        std::sort(idx.begin(), idx.end(), [&](auto a, auto b) {
            return std::abs(g.data()[a]) > std::abs(g.data()[b]);
        });
        std::vector<Eigen::Index> chosen(idx.begin(),
                                         idx.begin() + static_cast<long>(std::min(per_tensor / 2 + 1, idx.size())));
        for (std::size_t k = 0; k < per_tensor / 2; ++k) {
            chosen.push_back(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(p.size()))));
        }
        double diff2 = 0.0;
        double a2 = 0.0;
        double n2 = 0.0;
        for (const auto i : chosen) {
            const double orig = p.data()[i];
            p.data()[i] = orig + step;
            const double up = loss();
            p.data()[i] = orig - step;
            const double down = loss();
            p.data()[i] = orig;
            const double numeric = (up - down) / (2.0 * step);
            const double a = g.data()[i];
            diff2 += (a - numeric) * (a - numeric);
            a2 += a * a;
            n2 += numeric * numeric;
        }
        const double scale = std::max({std::sqrt(a2), std::sqrt(n2), 1e-10});
        out.push_back({params.names[t], std::sqrt(diff2) / scale, std::sqrt(a2)});
    }
    return out;
}

// Brute-force ranking oracle for recall: rank of the gold entry under a full
// stable sort (descending, lower index first on ties).
inline double brute_recall(const Mat<double>& s, int k, bool rows) {
    const Eigen::Index n = s.rows();
    int hits = 0;
    for (Eigen::Index q = 0; q < n; ++q) {
        std::vector<std::pair<double, Eigen::Index>> v;
        for (Eigen::Index c = 0; c < n; ++c) v.emplace_back(rows ? s(q, c) : s(c, q), c);
        std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        for (int r = 0; r < k; ++r) {
            if (v[static_cast<std::size_t>(r)].second == q) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

// Gaussian rows scaled to unit length.
inline Mat<double> random_unit_rows(Rng& rng, Eigen::Index n, Eigen::Index d) {
    Mat<double> m(n, d);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gaussian(rng);
    m.rowwise().normalize();
    return m;
}

// Pearson correlation of average ranks, ranks counted pairwise.
inline double brute_spearman(const std::vector<double>& x, const std::vector<double>& y) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            double less = 0, equal = 0;
            for (const double w : v) {
                less += w < v[i] ? 1 : 0;
                equal += w == v[i] ? 1 : 0;
            }
            r[i] = less + (equal + 1) / 2;
        }
        return r;
    };
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += rx[i] / n;
        my += ry[i] / n;
    }
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace disclvlm::testing
