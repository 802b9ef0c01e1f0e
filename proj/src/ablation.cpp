// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "ablation.hpp"

#include "error.hpp"

#include <cmath>
#include <ostream>

namespace disclvlm {

void to_json(nlohmann::json& j, const AblationConfig& c) {
    j = {{"name", c.name},
         {"soft_prompts", c.soft_prompts},
         {"lora", c.lora},
         {"vision_lora", c.vision_lora},
         {"lambda_ar", c.lambda_ar}};
}

void from_json(const nlohmann::json& j, AblationConfig& c) {
    c.name = j.at("name").get<std::string>();
    c.soft_prompts = j.value("soft_prompts", c.soft_prompts);
    c.lora = j.value("lora", c.lora);
    c.vision_lora = j.value("vision_lora", c.vision_lora);
    c.lambda_ar = j.value("lambda_ar", c.lambda_ar);
}

std::vector<AblationConfig> default_ablation_configs() {
    return {{"soft-prompt", true, false, false, 0.0},
            {"adapter", false, true, true, 0.0},
            {"soft-prompt+adapter", true, true, true, 0.0},
            {"soft-prompt+adapter+ar", true, true, true, 1.0}};
}

EvalSummary summarize(const TinyLvlm<float>& model, const AdapterSet<float>* adapters,
                      std::span<const DatasetRecord> heldout, const EvalSettings& settings) {
    require(static_cast<int>(heldout.size()) >= settings.gallery_size, ErrorCode::kConfig,
            "held-out split smaller than the gallery");
    const TemplateOptions o = inference_options(model.config(), adapters);
    const int ks[] = {1};
    const RetrievalResult r =
        evaluate_retrieval(model, adapters, heldout.first(static_cast<std::size_t>(settings.gallery_size)), ks, o);
    const std::size_t nc = std::min(heldout.size(), static_cast<std::size_t>(settings.compositional_records));
    const auto items = compositionality_items(heldout.first(nc));
    const CompositionalityResult c = compositionality_score(model, adapters, items, o);
    auto group = [&](const char* g) {
        const auto it = c.group.find(g);
        return it == c.group.end() ? 0.0 : it->second.accuracy;
    };
    return EvalSummary{group("replace"), group("swap"), group("add"), r.recall_at.at(1).t2i,
                       r.recall_at.at(1).i2t};
}

SeedContext prepare_seed(const AblationSettings& settings, std::uint64_t seed) {
    SeedContext ctx;
    ctx.seed = seed;
    for (int i = 0; i < settings.n_train; ++i) {
        ctx.train.push_back(make_record(scene_seed(seed, static_cast<std::uint64_t>(i), false)));
    }
    for (int i = 0; i < settings.n_heldout; ++i) {
        ctx.heldout.push_back(make_record(scene_seed(seed, static_cast<std::uint64_t>(i), true)));
    }
    ModelConfig mc = settings.model;
    mc.seed = seed;
    TrainConfig pc = settings.pretrain;
    pc.seed = seed;
    ctx.base = pretrain(mc, ctx.train, pc);
    return ctx;
}

AblationRow aggregate_runs(const std::string& config, std::span<const AblationRun> runs) {
    AblationRow row;
    row.config = config;
    std::vector<const EvalSummary*> s;
    for (const auto& r : runs) {
        if (r.config == config) s.push_back(&r.summary);
    }
    row.seeds = static_cast<int>(s.size());
    if (s.empty()) return row;
    auto stat = [&](double EvalSummary::*m, double& mean, double& sd) {
        double sum = 0.0;
        for (const auto* e : s) sum += e->*m;
        mean = sum / static_cast<double>(s.size());
        double ss = 0.0;
        for (const auto* e : s) ss += (e->*m - mean) * (e->*m - mean);
        sd = s.size() > 1 ? std::sqrt(ss / static_cast<double>(s.size() - 1)) : 0.0;
    };
    stat(&EvalSummary::replace, row.mean.replace, row.sd.replace);
    stat(&EvalSummary::swap, row.mean.swap, row.sd.swap);
    stat(&EvalSummary::add, row.mean.add, row.sd.add);
    stat(&EvalSummary::t2i, row.mean.t2i, row.sd.t2i);
    stat(&EvalSummary::i2t, row.mean.i2t, row.sd.i2t);
    return row;
}

AblationReport ablation_suite(std::span<const AblationConfig> configs,
                              const AblationSettings& settings, const AblationHooks& hooks) {
    AblationReport report;
    if (configs.empty()) return report;
    for (const auto seed : settings.seeds) {
        if (hooks.on_progress) hooks.on_progress("seed " + std::to_string(seed) + ": pretraining");
        const SeedContext ctx = prepare_seed(settings, seed);
        if (hooks.on_seed) hooks.on_seed(ctx);
        report.zero_shot.push_back(
            {"zero-shot", seed, summarize(ctx.base, nullptr, ctx.heldout, settings.eval)});
        for (const auto& config : configs) {
            if (hooks.on_progress) {
                hooks.on_progress("seed " + std::to_string(seed) + ": adapting " + config.name);
            }
            AdapterOptions po = settings.peft;
            po.soft_prompts = config.soft_prompts;
            po.lora = config.lora;
            po.vision_lora = config.vision_lora;
            po.seed = seed;
            TrainConfig ac = settings.adapt;
            ac.seed = seed;
            ac.lambda_ar = config.lambda_ar;
            std::vector<LogRow> log;
            const AdapterSet<float> adapters =
                adapt(ctx.base, AdapterSet<float>::create(ctx.base, po), ctx.train, ac, &log);
            report.runs.push_back(
                {config.name, seed, summarize(ctx.base, &adapters, ctx.heldout, settings.eval)});
            if (hooks.on_run) hooks.on_run(ctx, config, adapters, log);
        }
    }
    for (const auto& config : configs) report.rows.push_back(aggregate_runs(config.name, report.runs));
    return report;
}

namespace {

nlohmann::json summary_json(const EvalSummary& s) {
    return {{"replace", s.replace}, {"swap", s.swap}, {"add", s.add}, {"t2i", s.t2i}, {"i2t", s.i2t}};
}

}  // namespace

std::optional<ArMargin> ar_margin(std::span<const AblationConfig> configs,
                                  const AblationReport& report) {
    auto row = [&](const std::string& name) -> const AblationRow* {
        for (const auto& r : report.rows) {
            if (r.config == name) return &r;
        }
        return nullptr;
    };
    for (const auto& a : configs) {
        if (a.lambda_ar != 0.0) continue;
        for (const auto& b : configs) {
            if (b.lambda_ar <= 0.0 || a.soft_prompts != b.soft_prompts || a.lora != b.lora ||
                a.vision_lora != b.vision_lora) {
                continue;
            }
            const AblationRow* r0 = row(a.name);
            const AblationRow* r1 = row(b.name);
            if (r0 == nullptr || r1 == nullptr) continue;
            ArMargin m;
            m.without_ar = a.name;
            m.with_ar = b.name;
            m.swap_without = r0->mean.swap;
            m.swap_with = r1->mean.swap;
            m.margin = m.swap_with - m.swap_without;
            m.pooled_sd = std::sqrt(0.5 * (r0->sd.swap * r0->sd.swap + r1->sd.swap * r1->sd.swap));
            m.passed = m.margin > m.pooled_sd;
            return m;
        }
    }
    return std::nullopt;
}

nlohmann::json to_json(const ArMargin& m) {
    return {{"without_ar", m.without_ar}, {"with_ar", m.with_ar},   {"swap_without", m.swap_without},
            {"swap_with", m.swap_with},   {"margin", m.margin},     {"pooled_sd", m.pooled_sd},
            {"passed", m.passed}};
}

nlohmann::json to_json(const AblationReport& report) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto* list : {&report.zero_shot, &report.runs}) {
        for (const auto& r : *list) {
            runs.push_back({{"config", r.config}, {"seed", r.seed}, {"metrics", summary_json(r.summary)}});
        }
    }
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"config", r.config},
                        {"mean", summary_json(r.mean)},
                        {"sd", summary_json(r.sd)},
                        {"seeds", r.seeds}});
    }
    return {{"runs", runs}, {"rows", rows}};
}

void write_ablation_csv(std::ostream& out, const AblationReport& report) {
    out << "config,replace,replace_sd,swap,swap_sd,add,add_sd,t2i,t2i_sd,i2t,i2t_sd,seeds\n";
    for (const auto& r : report.rows) {
        out << r.config << ',' << r.mean.replace << ',' << r.sd.replace << ',' << r.mean.swap << ','
            << r.sd.swap << ',' << r.mean.add << ',' << r.sd.add << ',' << r.mean.t2i << ','
            << r.sd.t2i << ',' << r.mean.i2t << ',' << r.sd.i2t << ',' << r.seeds << '\n';
    }
}

}  // namespace disclvlm
