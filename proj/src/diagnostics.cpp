// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "diagnostics.hpp"

#include "error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

namespace disclvlm {

double entropy(std::span<const double> p) {
    require(!p.empty(), ErrorCode::kContract, "empty distribution");
    double sum = 0.0;
    double h = 0.0;
    for (const double v : p) {
        require(v >= 0.0 && std::isfinite(v), ErrorCode::kContract,
                "distribution entries must be finite and non-negative");
        sum += v;
        if (v > 0.0) h -= v * std::log(v);
    }
    require(std::abs(sum - 1.0) <= 1e-6, ErrorCode::kContract, "distribution does not sum to 1");
    return std::max(0.0, h);
}

std::vector<double> cumulative_variance(const Mat<double>& x) {
    require(x.rows() >= 2, ErrorCode::kContract, "cumulative variance needs N >= 2 rows");
    const Mat<double> centered = x.rowwise() - x.colwise().mean();
    const Mat<double> cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
    const double trace = cov.trace();
    require(trace > 1e-12 * std::max(1.0, x.cwiseAbs().maxCoeff()), ErrorCode::kDegenerate,
            "embeddings have zero total variance");
    Eigen::SelfAdjointEigenSolver<Mat<double>> solver(cov, Eigen::EigenvaluesOnly);
    std::vector<double> eig(solver.eigenvalues().data(),
                            solver.eigenvalues().data() + solver.eigenvalues().size());
    std::sort(eig.begin(), eig.end(), std::greater<>());
    const auto n = static_cast<std::size_t>(std::min(x.rows(), x.cols()));
    std::vector<double> curve(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += std::max(0.0, eig[i]);
        curve[i] = std::min(1.0, acc / trace);
    }
    return curve;
}

int components_for(std::span<const double> curve, double fraction) {
    for (std::size_t i = 0; i < curve.size(); ++i) {
        if (curve[i] >= fraction - 1e-12) return static_cast<int>(i) + 1;
    }
    return static_cast<int>(curve.size());
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size() && x.size() >= 2, ErrorCode::kContract,
            "spearman needs two equally long samples of size >= 2");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    require(sxx > 0.0 && syy > 0.0, ErrorCode::kDegenerate, "spearman of a constant sample");
    return sxy / std::sqrt(sxx * syy);
}

double participation_ratio(std::span<const double> p) {
    require(!p.empty(), ErrorCode::kContract, "empty distribution");
    double s = 0.0;
    double s2 = 0.0;
    for (const double v : p) {
        require(v >= 0.0, ErrorCode::kContract, "negative weight");
        s += v;
        s2 += v * v;
    }
    require(s2 > 0.0, ErrorCode::kDegenerate, "all-zero weights");
    return s * s / (static_cast<double>(p.size()) * s2);
}

AttentionDensityReport attention_density(const TinyLvlm<float>& model,
                                         const AdapterSet<float>* adapters,
                                         const AssembledBatch& rows) {
    require(!rows.rows.empty(), ErrorCode::kContract, "attention density needs image rows");
    DecoderPass<float> pass(model, adapters);
    pass.forward(rows, LogitSelection::kNone);
    const int layers = model.config().num_layers;
    const int heads = model.config().num_heads;
    AttentionDensityReport out;
    for (int l = 0; l < layers; ++l) {
        for (int h = 0; h < heads; ++h) {
            HeadDensity d{l, h, 0.0, 0.0};
            for (int r = 0; r < pass.num_rows(); ++r) {
                const auto& row = rows.rows[static_cast<std::size_t>(r)];
                require(!row.vision.empty(), ErrorCode::kContract, "row has no vision tokens");
                require(row.anchor > row.vision.begin, ErrorCode::kTemplate,
                        "summary token does not follow the vision tokens");
                const auto& a = pass.attention(l, r, h);
                std::vector<double> p(static_cast<std::size_t>(row.vision.size()));
                double s = 0.0;
                for (int v = 0; v < row.vision.size(); ++v) {
                    p[static_cast<std::size_t>(v)] = a(row.anchor, row.vision.begin + v);
                    s += p[static_cast<std::size_t>(v)];
                }
                require(s > 0.0, ErrorCode::kDegenerate, "no attention mass on vision tokens");
                for (auto& v : p) v /= s;
                d.entropy += entropy(p);
                d.participation_ratio += participation_ratio(p);
            }
            d.entropy /= pass.num_rows();
            d.participation_ratio /= pass.num_rows();
            out.mean_entropy += d.entropy;
            out.mean_participation_ratio += d.participation_ratio;
            out.heads.push_back(d);
        }
    }
    out.mean_entropy /= static_cast<double>(out.heads.size());
    out.mean_participation_ratio /= static_cast<double>(out.heads.size());
    return out;
}

std::vector<std::pair<std::string, double>> topk_decoded(const TinyLvlm<float>& model,
                                                         const AdapterSet<float>* adapters,
                                                         const AssembledBatch& row, int k) {
    require(row.rows.size() == 1, ErrorCode::kShape, "topk_decoded takes one row");
    const Mat<float> p = next_token_distribution(model, adapters, row);
    std::vector<double> probs(static_cast<std::size_t>(p.cols()));
    for (Eigen::Index i = 0; i < p.cols(); ++i) probs[static_cast<std::size_t>(i)] = p(0, i);
    std::vector<std::pair<std::string, double>> out;
    for (const auto& [id, prob] : top_k(probs, k)) {
        out.emplace_back(std::string(Tokenizer::instance().word(id)), prob);
    }
    return out;
}

std::vector<ProbePrompt> default_probe_prompts() {
    // Verb x object x length variants of the summarize-in-one-word prompt.
    const std::vector<std::pair<std::string, std::string>> heads = {
        {"summarize", "summarize the provided"}, {"describe", "describe the provided"},
        {"represent", "represent the provided"}, {"caption", "caption the provided"}};
    const std::vector<std::pair<std::string, std::string>> tails = {
        {"one-word", "in one word :"}, {"few-words", "in a few words :"}, {"briefly", "briefly :"}};
    std::vector<ProbePrompt> out;
    for (const auto& [hid, h] : heads) {
        for (const auto& [tid, t] : tails) {
            out.push_back({hid + "-" + tid, h + " image " + t, h + " text " + t});
        }
    }
    out.push_back({"bare", "image :", "text :"});
    return out;
}

std::vector<ProbePrompt> read_probe_prompts(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::kIo, "cannot open prompt file " + path);
    std::vector<ProbePrompt> out;
    try {
        const auto j = nlohmann::json::parse(in);
        for (const auto& p : j) {
            out.push_back({p.at("id").get<std::string>(), p.at("image").get<std::string>(),
                           p.at("text").get<std::string>()});
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kConfig, "malformed prompt file " + path + ": " + e.what());
    }
    require(out.size() >= 2, ErrorCode::kConfig, "prompt probing needs at least two prompts");
    return out;
}

PromptProbeReport prompt_probe(const TinyLvlm<float>& model, const AdapterSet<float>* adapters,
                               std::span<const ProbePrompt> prompts,
                               std::span<const DatasetRecord> probe) {
    require(prompts.size() >= 2, ErrorCode::kContract, "prompt probing needs at least two prompts");
    require(probe.size() >= 2, ErrorCode::kContract, "prompt probing needs at least two pairs");
    std::vector<Scene> scenes;
    std::vector<std::vector<TokenId>> texts;
    for (const auto& r : probe) {
        scenes.push_back(r.scene);
        texts.push_back(r.captions.short_tokens);
    }
    const SceneFeaturizer featurizer(model.config().vision_feature_dim);
    PromptProbeReport out;
    std::vector<double> ent;
    std::vector<double> r1;
    for (const auto& prompt : prompts) {
        TemplateOptions o = inference_options(model.config(), nullptr,
                                              make_prompt_pair(prompt.image, prompt.text));
        const AssembledBatch images = image_batch(scenes, featurizer, o);
        const AssembledBatch captions = text_batch(texts, o);
        PromptProbeRow row;
        row.id = prompt.id;
        double h = 0.0;
        for (const auto* batch : {&images, &captions}) {
            const Mat<float> p = next_token_distribution(model, adapters, *batch);
            for (Eigen::Index i = 0; i < p.rows(); ++i) {
                const Eigen::Matrix<double, 1, Eigen::Dynamic> pd = p.row(i).cast<double>();
                std::vector<double> v(pd.data(), pd.data() + pd.size());
                const double s = std::accumulate(v.begin(), v.end(), 0.0);
                for (auto& x : v) x /= s;
                h += entropy(v);
            }
        }
        row.mean_entropy = h / static_cast<double>(2 * probe.size());
        const Mat<float> ei = embed_rows(model, adapters, images);
        const Mat<float> et = embed_rows(model, adapters, captions);
        const Recall rec = recall_at_k(Mat<float>(ei * et.transpose()), 1);
        row.r1 = 0.5 * (rec.t2i + rec.i2t);
        row.image_cumvar = cumulative_variance(ei.cast<double>());
        row.text_cumvar = cumulative_variance(et.cast<double>());
        ent.push_back(row.mean_entropy);
        r1.push_back(row.r1);
        out.prompts.push_back(std::move(row));
    }
    const bool constant = std::all_of(r1.begin(), r1.end(), [&](double v) { return v == r1[0]; }) ||
                          std::all_of(ent.begin(), ent.end(), [&](double v) { return v == ent[0]; });
    out.spearman_entropy_r1 = constant ? 0.0 : spearman(ent, r1);
    return out;
}

DensityComparison compare_density(const TinyLvlm<float>& model, const AdapterSet<float>& adapters,
                                  std::span<const DatasetRecord> rows, double tolerance) {
    require(rows.size() >= 2, ErrorCode::kContract, "density comparison needs at least two rows");
    std::vector<Scene> scenes;
    for (const auto& r : rows) scenes.push_back(r.scene);
    const SceneFeaturizer featurizer(model.config().vision_feature_dim);
    DensityComparison out;
    for (const bool adapted : {false, true}) {
        const AdapterSet<float>* a = adapted ? &adapters : nullptr;
        const TemplateOptions o = inference_options(model.config(), a);
        const auto curve = cumulative_variance(embed_images(model, a, scenes, o).cast<double>());
        const double pr =
            attention_density(model, a, image_batch(scenes, featurizer, o)).mean_participation_ratio;
        (adapted ? out.cumvar_adapted : out.cumvar_base) = curve;
        (adapted ? out.components_adapted : out.components_base) = components_for(curve, 0.9);
        (adapted ? out.participation_adapted : out.participation_base) = pr;
    }
    out.components_ok = out.components_adapted >= (1.0 - tolerance) * out.components_base;
    out.participation_ok = out.participation_adapted >= (1.0 - tolerance) * out.participation_base;
    return out;
}

nlohmann::json to_json(const DensityComparison& c) {
    return {{"components_90_base", c.components_base},
            {"components_90_adapted", c.components_adapted},
            {"participation_ratio_base", c.participation_base},
            {"participation_ratio_adapted", c.participation_adapted},
            {"cumvar_base", c.cumvar_base},
            {"cumvar_adapted", c.cumvar_adapted},
            {"components_ok", c.components_ok},
            {"participation_ok", c.participation_ok}};
}

nlohmann::json to_json(const PromptProbeReport& report) {
    nlohmann::json prompts = nlohmann::json::array();
    for (const auto& p : report.prompts) {
        prompts.push_back({{"id", p.id},
                           {"mean_entropy", p.mean_entropy},
                           {"r1", p.r1},
                           {"image_cumvar", p.image_cumvar},
                           {"text_cumvar", p.text_cumvar},
                           {"image_components_90", components_for(p.image_cumvar, 0.9)},
                           {"text_components_90", components_for(p.text_cumvar, 0.9)}});
    }
    return {{"prompts", prompts}, {"spearman_entropy_r1", report.spearman_entropy_r1}};
}

nlohmann::json to_json(const AttentionDensityReport& report) {
    nlohmann::json heads = nlohmann::json::array();
    for (const auto& h : report.heads) {
        heads.push_back({{"layer", h.layer},
                         {"head", h.head},
                         {"entropy", h.entropy},
                         {"participation_ratio", h.participation_ratio}});
    }
    return {{"heads", heads},
            {"mean_entropy", report.mean_entropy},
            {"mean_participation_ratio", report.mean_participation_ratio}};
}

void write_prompt_csv(std::ostream& out, const PromptProbeReport& report) {
    out << "prompt_id,entropy,r1\n";
    for (const auto& p : report.prompts) out << p.id << ',' << p.mean_entropy << ',' << p.r1 << '\n';
}

void write_cumvar_csv(std::ostream& out, const PromptProbeReport& report) {
    out << "prompt_id,modality,component,cumulative_variance\n";
    for (const auto& p : report.prompts) {
        for (std::size_t i = 0; i < p.image_cumvar.size(); ++i) {
            out << p.id << ",image," << i + 1 << ',' << p.image_cumvar[i] << '\n';
        }
        for (std::size_t i = 0; i < p.text_cumvar.size(); ++i) {
            out << p.id << ",text," << i + 1 << ',' << p.text_cumvar[i] << '\n';
        }
    }
}

void write_attention_csv(std::ostream& out, const AttentionDensityReport& report) {
    out << "layer,head,entropy,participation_ratio\n";
    for (const auto& h : report.heads) {
        out << h.layer << ',' << h.head << ',' << h.entropy << ',' << h.participation_ratio << '\n';
    }
}

}  // namespace disclvlm
