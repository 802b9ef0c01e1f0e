// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "evalsuite.hpp"

#include "error.hpp"

#include <ostream>
#include <unordered_map>

namespace disclvlm {

TemplateOptions inference_options(const ModelConfig& config, const AdapterSet<float>* adapters,
                                  const PromptPair& prompts) {
    TemplateOptions o;
    o.mode = TemplateMode::kInference;
    o.prompts = prompts;
    o.max_seq_len = config.max_seq_len;
    o.num_vision_tokens = config.num_vision_tokens;
    if (adapters != nullptr) {
        o.soft_image_prompt = adapters->prompt(Modality::kImage).has_value();
        o.soft_text_prompt = adapters->prompt(Modality::kText).has_value();
    }
    return o;
}

Mat<float> embed_images(const TinyLvlm<float>& model, const AdapterSet<float>* adapters,
                        std::span<const Scene> scenes, const TemplateOptions& options) {
    const SceneFeaturizer featurizer(model.config().vision_feature_dim);
    return embed_rows(model, adapters, image_batch(scenes, featurizer, options));
}

Mat<float> embed_texts(const TinyLvlm<float>& model, const AdapterSet<float>* adapters,
                       std::span<const std::string> captions, const TemplateOptions& options) {
    std::vector<std::vector<TokenId>> tokens;
    for (const auto& c : captions) tokens.push_back(Tokenizer::instance().tokenize(c));
    return embed_rows(model, adapters, text_batch(tokens, options));
}

template <typename T>
Recall recall_at_k(const Mat<T>& s, int k) {
    const Eigen::Index n = s.rows();
    require(n >= 1 && s.cols() == n, ErrorCode::kShape, "recall needs a square similarity matrix");
    require(k >= 1 && k <= n, ErrorCode::kParameter, "k must lie in [1, N]");
    int i2t = 0;
    int t2i = 0;
    for (Eigen::Index q = 0; q < n; ++q) {
        const T gold = s(q, q);
        Eigen::Index row_rank = 0;
        Eigen::Index col_rank = 0;
        for (Eigen::Index c = 0; c < n; ++c) {
            if (s(q, c) > gold || (s(q, c) == gold && c < q)) ++row_rank;
            if (s(c, q) > gold || (s(c, q) == gold && c < q)) ++col_rank;
        }
        if (row_rank < k) ++i2t;
        if (col_rank < k) ++t2i;
    }
    return Recall{static_cast<double>(t2i) / static_cast<double>(n),
                  static_cast<double>(i2t) / static_cast<double>(n)};
}

template Recall recall_at_k(const Mat<float>&, int);
template Recall recall_at_k(const Mat<double>&, int);

RetrievalResult evaluate_retrieval(const TinyLvlm<float>& model, const AdapterSet<float>* adapters,
                                   std::span<const DatasetRecord> gallery, std::span<const int> ks,
                                   const TemplateOptions& options) {
    require(!gallery.empty(), ErrorCode::kParameter, "empty gallery");
    std::vector<Scene> scenes;
    std::vector<std::string> texts;
    for (const auto& r : gallery) {
        scenes.push_back(r.scene);
        texts.push_back(r.captions.short_text);
    }
    RetrievalResult out;
    out.gallery_size = static_cast<int>(gallery.size());
    const Mat<float> image = embed_images(model, adapters, scenes, options);
    const Mat<float> text = embed_texts(model, adapters, texts, options);
    out.similarity = image * text.transpose();
    for (const int k : ks) {
        if (k <= out.gallery_size) out.recall_at[k] = recall_at_k(out.similarity, k);
    }
    return out;
}

std::vector<CompositionalityItem> compositionality_items(std::span<const DatasetRecord> records) {
    std::vector<CompositionalityItem> out;
    for (const auto& r : records) {
        const auto positive = short_caption_structure(r.scene);
        const std::string positive2 = render(paraphrase(positive));
        for (const auto& n : r.negatives.negatives) {
            out.push_back({&r.scene, n.positive, positive2, n.negative, n.category});
        }
    }
    return out;
}

std::vector<bool> score_pairs(std::span<const float> positive, std::span<const float> negative) {
    require(positive.size() == negative.size(), ErrorCode::kShape, "score vectors differ in length");
    std::vector<bool> out(positive.size());
    for (std::size_t i = 0; i < positive.size(); ++i) out[i] = positive[i] > negative[i];
    return out;
}

std::vector<bool> score_itt(std::span<const float> positive1, std::span<const float> positive2,
                            std::span<const float> negative) {
    require(positive1.size() == negative.size() && positive2.size() == negative.size(),
            ErrorCode::kShape, "score vectors differ in length");
    std::vector<bool> out(negative.size());
    for (std::size_t i = 0; i < negative.size(); ++i) {
        out[i] = positive1[i] > negative[i] && positive2[i] > negative[i];
    }
    return out;
}

std::map<std::string, Accuracy> aggregate(std::span<const std::string> categories,
                                          const std::vector<bool>& correct, bool by_group) {
    require(categories.size() == correct.size(), ErrorCode::kShape, "outcome count mismatch");
    std::map<std::string, std::pair<int, int>> tally;
    for (std::size_t i = 0; i < categories.size(); ++i) {
        const NegativeCategory c = parse_category(categories[i]);
        const std::string key(by_group ? category_group(c) : category_name(c));
        auto& t = tally[key];
        t.first += correct[i] ? 1 : 0;
        t.second += 1;
    }
    std::map<std::string, Accuracy> out;
    for (const auto& [k, t] : tally) {
        out[k] = Accuracy{static_cast<double>(t.first) / static_cast<double>(t.second), t.second};
    }
    return out;
}

CompositionalityResult compositionality_score(const TinyLvlm<float>& model,
                                              const AdapterSet<float>* adapters,
                                              std::span<const CompositionalityItem> items,
                                              const TemplateOptions& options) {
    CompositionalityResult out;
    if (items.empty()) return out;
    std::unordered_map<const Scene*, Eigen::Index> scene_row;
    std::vector<Scene> scenes;
    std::vector<std::string> pos;
    std::vector<std::string> pos2;
    std::vector<std::string> neg;
    std::vector<std::string> names;
    for (const auto& it : items) {
        require(it.scene != nullptr, ErrorCode::kParameter, "compositionality item without a scene");
        if (scene_row.emplace(it.scene, static_cast<Eigen::Index>(scenes.size())).second) {
            scenes.push_back(*it.scene);
        }
        pos.push_back(it.positive);
        pos2.push_back(it.positive2.empty() ? it.positive : it.positive2);
        neg.push_back(it.negative);
        names.emplace_back(category_name(it.category));
    }
    const Mat<float> image = embed_images(model, adapters, scenes, options);
    const Mat<float> ep = embed_texts(model, adapters, pos, options);
    const Mat<float> ep2 = embed_texts(model, adapters, pos2, options);
    const Mat<float> en = embed_texts(model, adapters, neg, options);
    std::vector<float> sp(items.size());
    std::vector<float> sp2(items.size());
    std::vector<float> sn(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto img = image.row(scene_row.at(items[i].scene));
        const auto r = static_cast<Eigen::Index>(i);
        sp[i] = img.dot(ep.row(r));
        sp2[i] = img.dot(ep2.row(r));
        sn[i] = img.dot(en.row(r));
    }
    const auto pairs = score_pairs(sp, sn);
    const auto quads = score_itt(sp, sp2, sn);
    out.category = aggregate(names, pairs, false);
    out.group = aggregate(names, pairs, true);
    out.itt = aggregate(names, quads, false);
    out.itt_group = aggregate(names, quads, true);
    return out;
}

namespace {

nlohmann::json accuracy_json(const std::map<std::string, Accuracy>& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, a] : m) j[k] = {{"accuracy", a.accuracy}, {"count", a.count}};
    return j;
}

}  // namespace

nlohmann::json to_json(const EvalReport& report) {
    nlohmann::json retrieval = nlohmann::json::array();
    for (const auto& r : report.retrieval) {
        nlohmann::json recall = nlohmann::json::object();
        for (const auto& [k, v] : r.recall_at) {
            recall["R@" + std::to_string(k)] = {{"t2i", v.t2i}, {"i2t", v.i2t}};
        }
        retrieval.push_back({{"gallery_size", r.gallery_size}, {"recall", recall}});
    }
    const auto& c = report.compositionality;
    return {{"retrieval", retrieval},
            {"compositionality",
             {{"category", accuracy_json(c.category)},
              {"group", accuracy_json(c.group)},
              {"itt", accuracy_json(c.itt)},
              {"itt_group", accuracy_json(c.itt_group)}}}};
}

void write_retrieval_csv(std::ostream& out, const EvalReport& report) {
    out << "gallery_size,image_retrieval_r1,image_retrieval_r10,text_retrieval_r1,text_retrieval_r10\n";
    for (const auto& r : report.retrieval) {
        auto get = [&](int k, bool t2i) -> std::string {
            const auto it = r.recall_at.find(k);
            if (it == r.recall_at.end()) return "";
            return std::to_string(t2i ? it->second.t2i : it->second.i2t);
        };
        out << r.gallery_size << ',' << get(1, true) << ',' << get(10, true) << ',' << get(1, false)
            << ',' << get(10, false) << '\n';
    }
}

void write_compositionality_csv(std::ostream& out, const EvalReport& report) {
    out << "metric,name,accuracy,count\n";
    const auto& c = report.compositionality;
    for (const auto* g : {"replace", "swap", "add"}) {
        const auto it = c.group.find(g);
        if (it != c.group.end()) {
            out << "group," << g << ',' << it->second.accuracy << ',' << it->second.count << '\n';
        }
    }
    for (const auto& [k, a] : c.category) out << "category," << k << ',' << a.accuracy << ',' << a.count << '\n';
    for (const auto& [k, a] : c.itt_group) out << "itt_group," << k << ',' << a.accuracy << ',' << a.count << '\n';
    for (const auto& [k, a] : c.itt) out << "itt," << k << ',' << a.accuracy << ',' << a.count << '\n';
}

}  // namespace disclvlm
