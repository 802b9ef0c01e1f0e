// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "pipeline.hpp"

#include "checkpoint.hpp"
#include "diagnostics.hpp"
#include "error.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace disclvlm {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, 6> kSubcommands = {"gen-data", "pretrain", "adapt",
                                                          "eval",     "probe",    "ablate"};

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrorCode::kIo, "cannot create output directory " + dir.string() + ": " + ec.message());
}

template <typename Writer>
void write_file(const fs::path& path, Writer&& writer) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
    writer(out);
    out.flush();
    require(static_cast<bool>(out), ErrorCode::kIo, "failed writing " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    write_file(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

void require_input(const fs::path& path, const std::string& producer) {
    require(fs::exists(path), ErrorCode::kMissingDependency,
            path.string() + " not found; run `" + producer + "` first");
}

std::vector<DatasetRecord> training_records(const ProjectConfig& c) {
    if (!c.data.dataset.empty()) {
        require_input(c.data.dataset, "gen-data");
        return read_dataset(c.data.dataset);
    }
    std::vector<DatasetRecord> out;
    out.reserve(static_cast<std::size_t>(c.data.n_train));
    for (int i = 0; i < c.data.n_train; ++i) {
        out.push_back(make_record(scene_seed(c.seed, static_cast<std::uint64_t>(i), false)));
    }
    return out;
}

std::vector<DatasetRecord> heldout_records(const ProjectConfig& c) {
    std::vector<DatasetRecord> out;
    out.reserve(static_cast<std::size_t>(c.data.n_heldout));
    for (int i = 0; i < c.data.n_heldout; ++i) {
        out.push_back(make_record(scene_seed(c.seed, static_cast<std::uint64_t>(i), true)));
    }
    return out;
}

struct Models {
    TinyLvlm<float> base;
    std::optional<AdapterSet<float>> adapters;
};

Models load_models(const fs::path& dir, bool need_adapters) {
    require_input(dir / "base.json", "pretrain");
    Models m{load_model(dir / "base.json"), std::nullopt};
    if (need_adapters) require_input(dir / "adapters.json", "adapt");
    if (fs::exists(dir / "adapters.json")) m.adapters = load_adapters(dir / "adapters.json", m.base);
    return m;
}

PromptPair hard_prompts(const ProjectConfig& c) {
    return make_prompt_pair(c.peft.image_prompt, c.peft.text_prompt);
}

class Runner {
public:
    explicit Runner(const RunRequest& r) : req_(r), c_(r.config), dir_(r.config.out_dir) {}

    nlohmann::json run() {
        ensure_dir(dir_);
        write_json(dir_ / "effective_config.json", to_json(c_));
        write_json(dir_ / ("effective_config_" + req_.subcommand + ".json"), to_json(c_));
        nlohmann::json summary = {{"subcommand", req_.subcommand},
                                  {"out_dir", dir_.string()},
                                  {"seed", c_.seed}};
        if (req_.subcommand == "gen-data") gen_data(summary);
        if (req_.subcommand == "pretrain") pretrain_stage(summary);
        if (req_.subcommand == "adapt") adapt_stage(summary);
        if (req_.subcommand == "eval") eval(summary);
        if (req_.subcommand == "probe") probe(summary);
        if (req_.subcommand == "ablate") ablate(summary);
        return summary;
    }

private:
    void progress(const std::string& message) const {
        if (req_.progress) req_.progress(message);
    }

    std::function<void(const LogRow&)> log_progress(const std::string& stage, int every) const {
        return [this, stage, every](const LogRow& r) {
            if (every > 0 && (r.step + 1) % every == 0) {
                std::ostringstream s;
                s << stage << " step " << r.step + 1 << " loss " << r.total << " (contrastive "
                  << r.contrastive << ", ar " << r.ar_ce << ")";
                progress(s.str());
            }
        };
    }

    void gen_data(nlohmann::json& summary) {
        const fs::path out = req_.out ? fs::path(*req_.out) : dir_ / "train.jsonl";
        if (out.has_parent_path()) ensure_dir(out.parent_path());
        std::vector<DatasetRecord> records;
        records.reserve(static_cast<std::size_t>(c_.data.n_train));
        for (int i = 0; i < c_.data.n_train; ++i) {
            records.push_back(make_record(scene_seed(c_.seed, static_cast<std::uint64_t>(i), false)));
        }
        write_dataset(out.string(), records);
        summary["records"] = records.size();
        summary["written"] = {out.string()};
    }

    void pretrain_stage(nlohmann::json& summary) {
        const auto data = training_records(c_);
        std::vector<LogRow> log;
        TrainHooks hooks;
        hooks.on_log = log_progress("pretrain", c_.pretrain.eval_every);
        progress("pretraining for " + std::to_string(c_.pretrain.steps) + " steps on " +
                 std::to_string(data.size()) + " scenes");
        const TinyLvlm<float> model = pretrain(c_.model_config(), data, c_.pretrain_config(), &log, hooks);
        save_model(dir_ / "base.json", model);
        write_file(dir_ / "pretrain_log.csv", [&](std::ostream& o) { write_log_csv(o, log); });
        summary["steps"] = log.size();
        if (!log.empty()) summary["final_ar_ce"] = log.back().ar_ce;
        summary["written"] = {"base.json", "base.bin", "pretrain_log.csv"};
    }

    void adapt_stage(nlohmann::json& summary) {
        require_input(dir_ / "base.json", "pretrain");
        const TinyLvlm<float> base = load_model(dir_ / "base.json");
        const auto data = training_records(c_);
        const auto heldout = heldout_records(c_);
        const int g = *std::min_element(c_.eval.gallery_sizes.begin(), c_.eval.gallery_sizes.end());
        const std::span<const DatasetRecord> gallery(heldout.data(), static_cast<std::size_t>(g));
        const int ks[] = {1};
        std::vector<std::array<double, 3>> snapshots;
        TrainHooks hooks;
        hooks.on_log = log_progress("adapt", c_.adapt.eval_every);
        progress("adapting for " + std::to_string(c_.adapt.steps) + " steps on " +
                 std::to_string(data.size()) + " scenes");
        hooks.on_eval = [&](int step, const TinyLvlm<float>& m, const AdapterSet<float>* a) {
            const auto r = evaluate_retrieval(m, a, gallery, ks, inference_options(m.config(), a));
            snapshots.push_back({static_cast<double>(step), r.recall_at.at(1).t2i, r.recall_at.at(1).i2t});
            progress("adapt step " + std::to_string(step) + " gallery-" + std::to_string(g) +
                     " R@1 t2i " + std::to_string(r.recall_at.at(1).t2i) + " i2t " +
                     std::to_string(r.recall_at.at(1).i2t));
        };
        std::vector<LogRow> log;
        const AdapterSet<float> adapters =
            adapt(base, AdapterSet<float>::create(base, c_.adapter_options()), data, c_.adapt_config(),
                  &log, hooks);
        save_adapters(dir_ / "adapters.json", adapters);
        write_file(dir_ / "adapt_log.csv", [&](std::ostream& o) { write_log_csv(o, log); });
        write_file(dir_ / "adapt_eval.csv", [&](std::ostream& o) {
            o << "step,gallery_size,image_retrieval_r1,text_retrieval_r1\n";
            for (const auto& s : snapshots) {
                o << static_cast<int>(s[0]) << ',' << g << ',' << s[1] << ',' << s[2] << '\n';
            }
        });
        summary["steps"] = log.size();
        if (!snapshots.empty()) {
            summary["final_r1"] = {{"t2i", snapshots.back()[1]}, {"i2t", snapshots.back()[2]}};
        }
        summary["written"] = {"adapters.json", "adapters.bin", "adapt_log.csv", "adapt_eval.csv"};
    }

    void eval(nlohmann::json& summary) {
        const Models m = load_models(dir_, false);
        const auto heldout = heldout_records(c_);
        const std::size_t nc =
            std::min(heldout.size(), static_cast<std::size_t>(c_.eval.compositional_records));
        const auto items = compositionality_items(std::span(heldout).first(nc));
        nlohmann::json report = nlohmann::json::object();
        nlohmann::json written = nlohmann::json::array();
        for (const bool adapted : {false, true}) {
            if (adapted && !m.adapters) continue;
            const AdapterSet<float>* a = adapted ? &*m.adapters : nullptr;
            const std::string name = adapted ? "adapted" : "base";
            progress("evaluating " + name);
            const TemplateOptions o = inference_options(m.base.config(), a, hard_prompts(c_));
            EvalReport r;
            for (const int g : c_.eval.gallery_sizes) {
                r.retrieval.push_back(evaluate_retrieval(m.base, a, std::span(heldout).first(static_cast<std::size_t>(g)),
                                                         c_.eval.ks, o));
            }
            r.compositionality = compositionality_score(m.base, a, items, o);
            report[name] = to_json(r);
            write_file(dir_ / ("retrieval_" + name + ".csv"),
                       [&](std::ostream& out) { write_retrieval_csv(out, r); });
            write_file(dir_ / ("compositionality_" + name + ".csv"),
                       [&](std::ostream& out) { write_compositionality_csv(out, r); });
            written.push_back("retrieval_" + name + ".csv");
            written.push_back("compositionality_" + name + ".csv");
            summary[name] = headline(r);
        }
        write_json(dir_ / "eval_report.json", report);
        written.push_back("eval_report.json");
        summary["written"] = written;
    }

    static nlohmann::json headline(const EvalReport& r) {
        nlohmann::json h = nlohmann::json::object();
        for (const auto& rr : r.retrieval) {
            if (rr.recall_at.count(1) == 0) continue;
            h["gallery_" + std::to_string(rr.gallery_size) + "_r1"] = {
                {"t2i", rr.recall_at.at(1).t2i}, {"i2t", rr.recall_at.at(1).i2t}};
        }
        for (const auto& [group, acc] : r.compositionality.group) h[group] = acc.accuracy;
        return h;
    }

    void probe(nlohmann::json& summary) {
        const Models m = load_models(dir_, false);
        const auto heldout = heldout_records(c_);
        const auto prompts = c_.diagnostics.prompts.empty()
                                 ? default_probe_prompts()
                                 : read_probe_prompts(c_.diagnostics.prompts);
        require(prompts.size() >= 2, ErrorCode::kConfig, "prompt probing needs at least two prompts");
        const auto probe_set = std::span(heldout).first(static_cast<std::size_t>(c_.diagnostics.probe_pairs));
        std::vector<Scene> scenes;
        for (int i = 0; i < c_.diagnostics.attention_rows; ++i) {
            scenes.push_back(heldout[static_cast<std::size_t>(i)].scene);
        }
        const SceneFeaturizer featurizer(m.base.config().vision_feature_dim);
        const auto& tok = Tokenizer::instance();

        nlohmann::json report = nlohmann::json::object();
        nlohmann::json written = nlohmann::json::array();
        for (const bool adapted : {false, true}) {
            if (adapted && !m.adapters) continue;
            const AdapterSet<float>* a = adapted ? &*m.adapters : nullptr;
            const std::string name = adapted ? "adapted" : "base";
            progress("probing " + name);
            const PromptProbeReport pr = prompt_probe(m.base, a, prompts, probe_set);
            const TemplateOptions o = inference_options(m.base.config(), a, hard_prompts(c_));
            const AssembledBatch rows = image_batch(scenes, featurizer, o);
            const AttentionDensityReport ad = attention_density(m.base, a, rows);
            AssembledBatch first;
            first.rows.push_back(rows.rows.front());
            first.features.push_back(rows.features.front());
            nlohmann::json topk = nlohmann::json::array();
            for (const auto& [word, p] : topk_decoded(m.base, a, first, c_.diagnostics.top_k)) {
                topk.push_back({{"token", word}, {"probability", p}});
            }
            nlohmann::json entry = {{"prompts", to_json(pr)}, {"attention", to_json(ad)}, {"topk", topk}};
            if (a != nullptr) {
                nlohmann::json decoded = nlohmann::json::object();
                for (const Modality mod : {Modality::kImage, Modality::kText}) {
                    const auto& slot = a->prompt(mod);
                    if (!slot) continue;
                    std::string words;
                    for (const TokenId id : decode_soft_prompt(m.base, a->params()[slot->vectors])) {
                        words += (words.empty() ? "" : " ") + std::string(tok.word(id));
                    }
                    decoded[std::string(modality_name(mod))] = words;
                }
                entry["decoded_soft_prompts"] = decoded;
            }
            report[name] = entry;
            write_file(dir_ / ("prompts_" + name + ".csv"), [&](std::ostream& out) { write_prompt_csv(out, pr); });
            write_file(dir_ / ("cumvar_" + name + ".csv"), [&](std::ostream& out) { write_cumvar_csv(out, pr); });
            write_file(dir_ / ("attention_" + name + ".csv"),
                       [&](std::ostream& out) { write_attention_csv(out, ad); });
            for (const char* f : {"prompts_", "cumvar_", "attention_"}) written.push_back(f + name + ".csv");
            summary[name] = {{"spearman_entropy_r1", pr.spearman_entropy_r1},
                             {"mean_participation_ratio", ad.mean_participation_ratio}};
        }
        if (m.adapters) {
            const int g = *std::max_element(c_.eval.gallery_sizes.begin(), c_.eval.gallery_sizes.end());
            const DensityComparison dc =
                compare_density(m.base, *m.adapters, std::span(heldout).first(static_cast<std::size_t>(g)));
            report["density_comparison"] = to_json(dc);
            summary["density_comparison"] = {{"components_ok", dc.components_ok},
                                             {"participation_ok", dc.participation_ok}};
        }
        write_json(dir_ / "probe_report.json", report);
        written.push_back("probe_report.json");
        summary["written"] = written;
    }

    void ablate(nlohmann::json& summary) {
        require(c_.data.dataset.empty(), ErrorCode::kConfig,
                "ablate generates its data per seed and does not take a dataset file");
        AblationHooks hooks;
        hooks.on_progress = [this](const std::string& s) { progress(s); };
        const auto& configs = c_.ablate.configs;
        const AblationReport r = ablation_suite(configs, c_.ablation_settings(), hooks);
        nlohmann::json j = to_json(r);
        const auto margin = ar_margin(configs, r);
        if (margin) {
            j["ar_margin"] = to_json(*margin);
            j["flagged"] = !margin->passed;
            summary["ar_margin"] = to_json(*margin);
        }
        write_json(dir_ / "ablation.json", j);
        write_file(dir_ / "ablation.csv", [&](std::ostream& o) { write_ablation_csv(o, r); });
        summary["written"] = {"ablation.json", "ablation.csv"};
    }

    const RunRequest& req_;
    const ProjectConfig& c_;
    fs::path dir_;
};

}  // namespace

bool is_subcommand(std::string_view name) {
    return std::find(kSubcommands.begin(), kSubcommands.end(), name) != kSubcommands.end();
}

ProjectConfig resolve_config(const std::string& subcommand, const std::string& config_path,
                             const Overrides& flags) {
    require(is_subcommand(subcommand), ErrorCode::kConfig, "unknown subcommand '" + subcommand + "'");
    ProjectConfig c = config_path.empty() ? ProjectConfig{} : load_config(config_path);
    apply(c, overrides_from_env(), subcommand);
    apply(c, flags, subcommand);
    c.validate();
    return c;
}

nlohmann::json run(const RunRequest& request) {
    require(is_subcommand(request.subcommand), ErrorCode::kConfig,
            "unknown subcommand '" + request.subcommand + "'");
    request.config.validate();
    return Runner(request).run();
}

}  // namespace disclvlm
