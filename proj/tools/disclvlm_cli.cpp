// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0
//
// disclvlm <subcommand> [flags]: thin front end over the C API. Prints the
// run summary as JSON on stdout; failures print {"error": ...} on stderr and
// exit with the status code.

#include "disclvlm/disclvlm.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> n;
    std::optional<int> steps;
    std::optional<double> lambda_ar;
    std::optional<int> gallery_size;
    std::optional<std::string> prompts;
    std::optional<std::string> data;
    std::optional<std::string> out;
    bool quiet = false;
    bool print_config = false;
};

nlohmann::json overrides(const Flags& f) {
    nlohmann::json j = nlohmann::json::object();
    if (f.seed) j["seed"] = *f.seed;
    if (f.out_dir) j["out_dir"] = *f.out_dir;
    if (f.n) j["n"] = *f.n;
    if (f.steps) j["steps"] = *f.steps;
    if (f.lambda_ar) j["lambda_ar"] = *f.lambda_ar;
    if (f.gallery_size) j["gallery_size"] = *f.gallery_size;
    if (f.prompts) j["prompts"] = *f.prompts;
    if (f.data) j["data"] = *f.data;
    if (f.out) j["out"] = *f.out;
    return j;
}

int report_error(dl_status status) {
    char* json = nullptr;
    if (dl_last_error_json(&json) == DL_OK) {
        std::cerr << json << '\n';
        dl_free_string(json);
    } else {
        std::cerr << dl_last_error() << '\n';
    }
    return static_cast<int>(status);
}

void print_progress(const char* message, void*) { std::cerr << message << std::endl; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"disclvlm: discriminative fine-tuning of a toy vision-language model"};
    app.require_subcommand(1, 1);
    Flags f;
    const char* names[][2] = {
        {"gen-data", "write the synthetic training scenes as JSONL"},
        {"pretrain", "generative pretraining of the base model"},
        {"adapt", "train soft prompts and low-rank adapters on the frozen base"},
        {"eval", "retrieval and compositionality reports"},
        {"probe", "entropy, explained variance and attention diagnostics"},
        {"ablate", "multi-seed ablation over adapter configurations"},
    };
    for (const auto& [name, help] : names) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", f.seed, "global seed");
        sub->add_option("--out-dir", f.out_dir, "output directory");
        sub->add_option("--n", f.n, "number of training scenes");
        sub->add_option("--steps", f.steps, "optimizer steps of this stage");
        sub->add_option("--lambda-ar", f.lambda_ar, "weight of the AR loss during adaptation");
        sub->add_option("--gallery-size", f.gallery_size, "retrieval gallery size");
        sub->add_option("--prompts", f.prompts, "JSON prompt list for probe");
        sub->add_option("--data", f.data, "training JSONL instead of generated scenes");
        sub->add_option("--out", f.out, "gen-data output file");
        sub->add_flag("--quiet", f.quiet, "no progress messages");
        sub->add_flag("--print-config", f.print_config, "print the effective config and exit");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        const nlohmann::json j = {{"error",
                                   {{"status", dl_status_name(DL_ERR_CONFIG)},
                                    {"code", static_cast<int>(DL_ERR_CONFIG)},
                                    {"message", e.what()}}}};
        std::cerr << j.dump() << '\n' << app.help() << '\n';
        return static_cast<int>(DL_ERR_CONFIG);
    }

    const std::string subcommand = app.get_subcommands().front()->get_name();
    const std::string o = overrides(f).dump();
    char* result = nullptr;
    dl_status status;
    if (f.print_config) {
        status = dl_resolve_config(subcommand.c_str(), f.config.c_str(), o.c_str(), &result);
    } else {
        status = dl_run(subcommand.c_str(), f.config.c_str(), o.c_str(),
                        f.quiet ? nullptr : print_progress, nullptr, &result);
    }
    if (status != DL_OK) return report_error(status);
    std::cout << result << '\n';
    dl_free_string(result);
    return 0;
}
