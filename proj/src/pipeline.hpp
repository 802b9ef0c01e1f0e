// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0
//
// Subcommands over an output directory:
//   gen-data  training scenes as JSONL (--out, default <out_dir>/train.jsonl)
//   pretrain  base.json/.bin, pretrain_log.csv
//   adapt     adapters.json/.bin, adapt_log.csv, adapt_eval.csv (needs base)
//   eval      eval_report.json, retrieval_<model>.csv, compositionality_<model>.csv
//   probe     probe_report.json, prompts_<model>.csv, cumvar_<model>.csv,
//             attention_<model>.csv
//   ablate    ablation.json, ablation.csv
// <model> is "base" and, once adapters exist, "adapted". Every run writes
// effective_config.json and effective_config_<subcommand>.json.

#pragma once

#include "config.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace disclvlm {

bool is_subcommand(std::string_view name);

// defaults < config file (if any) < DISC_LVLM_* environment < flags.
ProjectConfig resolve_config(const std::string& subcommand, const std::string& config_path,
                             const Overrides& flags);

struct RunRequest {
    std::string subcommand;
    ProjectConfig config;
    std::optional<std::string> out;  // gen-data target
    std::function<void(const std::string&)> progress;
};

// Returns a JSON summary of what was written and the headline metrics.
nlohmann::json run(const RunRequest& request);

}  // namespace disclvlm
