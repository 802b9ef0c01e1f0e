// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "disclvlm/disclvlm.h"

#include "checkpoint.hpp"
#include "error.hpp"
#include "evalsuite.hpp"
#include "pipeline.hpp"

#include <cstdlib>
#include <cstring>
#include <optional>
#include <string>

struct dl_model {
    disclvlm::TinyLvlm<float> base;
    std::optional<disclvlm::AdapterSet<float>> adapters;
};

namespace {

using disclvlm::ErrorCode;

struct LastError {
    dl_status status = DL_OK;
    std::string message;
};

thread_local LastError last_error;

dl_status record(dl_status status, std::string message) {
    last_error = {status, std::move(message)};
    return status;
}

template <typename F>
dl_status guarded(F&& body) {
    try {
        body();
        last_error = {};
        return DL_OK;
    } catch (const disclvlm::Error& e) {
        return record(static_cast<dl_status>(e.code()), e.what());
    } catch (const nlohmann::json::exception& e) {
        return record(DL_ERR_CONFIG, e.what());
    } catch (const std::bad_alloc&) {
        return record(DL_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return record(DL_ERR_INTERNAL, e.what());
    } catch (...) {
        return record(DL_ERR_INTERNAL, "unknown exception");
    }
}

char* copy_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void check_arg(bool ok, const char* what) {
    disclvlm::require(ok, ErrorCode::kParameter, what);
}

disclvlm::Overrides parse_overrides(const char* overrides_json) {
    if (overrides_json == nullptr || *overrides_json == '\0') return {};
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(overrides_json);
    } catch (const nlohmann::json::exception& e) {
        disclvlm::fail(ErrorCode::kConfig, std::string("overrides are not valid JSON: ") + e.what());
    }
    return disclvlm::overrides_from_json(j);
}

void write_embedding(const dl_model* model, const disclvlm::AssembledBatch& batch, float* out,
                     std::size_t out_len) {
    const auto* a = model->adapters ? &*model->adapters : nullptr;
    const auto e = disclvlm::embed(model->base, a, batch);
    disclvlm::require(out_len >= static_cast<std::size_t>(e.vector.size()), ErrorCode::kShape,
                      "output buffer shorter than model_dim");
    for (Eigen::Index i = 0; i < e.vector.size(); ++i) out[i] = e.vector[i];
}

}  // namespace

extern "C" {

const char* dl_version(void) { return "0.1.0"; }

const char* dl_status_name(dl_status status) {
    if (status == DL_OK) return "ok";
    if (status < DL_ERR_LENGTH || status > DL_ERR_INTERNAL) return "unknown";
    return disclvlm::error_code_name(static_cast<ErrorCode>(status));
}

const char* dl_last_error(void) { return last_error.message.c_str(); }

dl_status dl_last_error_json(char** out) {
    if (out == nullptr) return DL_ERR_PARAMETER;
    const nlohmann::json j = {{"error",
                               {{"status", dl_status_name(last_error.status)},
                                {"code", static_cast<int>(last_error.status)},
                                {"message", last_error.message}}}};
    const LastError saved = last_error;
    const dl_status s = guarded([&] { *out = copy_string(j.dump()); });
    last_error = saved;
    return s;
}

void dl_free_string(char* s) { std::free(s); }

dl_status dl_run(const char* subcommand, const char* config_path, const char* overrides_json,
                 dl_progress_fn progress, void* user, char** summary_json) {
    return guarded([&] {
        check_arg(subcommand != nullptr, "subcommand is NULL");
        const disclvlm::Overrides o = parse_overrides(overrides_json);
        disclvlm::RunRequest req;
        req.subcommand = subcommand;
        req.config = disclvlm::resolve_config(req.subcommand, config_path ? config_path : "", o);
        req.out = o.out;
        if (progress != nullptr) {
            req.progress = [progress, user](const std::string& m) { progress(m.c_str(), user); };
        }
        const nlohmann::json summary = disclvlm::run(req);
        if (summary_json != nullptr) *summary_json = copy_string(summary.dump());
    });
}

dl_status dl_resolve_config(const char* subcommand, const char* config_path,
                            const char* overrides_json, char** config_json) {
    return guarded([&] {
        check_arg(subcommand != nullptr && config_json != nullptr, "NULL argument");
        const auto c = disclvlm::resolve_config(subcommand, config_path ? config_path : "",
                                                parse_overrides(overrides_json));
        *config_json = copy_string(disclvlm::to_json(c).dump(2));
    });
}

dl_status dl_model_load(const char* base_manifest, const char* adapters_manifest, dl_model** out) {
    return guarded([&] {
        check_arg(base_manifest != nullptr && out != nullptr, "NULL argument");
        auto m = std::make_unique<dl_model>();
        m->base = disclvlm::load_model(base_manifest);
        if (adapters_manifest != nullptr && *adapters_manifest != '\0') {
            m->adapters = disclvlm::load_adapters(adapters_manifest, m->base);
        }
        *out = m.release();
    });
}

void dl_model_free(dl_model* model) { delete model; }

dl_status dl_model_dim(const dl_model* model, size_t* dim) {
    return guarded([&] {
        check_arg(model != nullptr && dim != nullptr, "NULL argument");
        *dim = static_cast<std::size_t>(model->base.config().model_dim);
    });
}

dl_status dl_embed_image(const dl_model* model, const char* scene_json, float* out, size_t out_len) {
    return guarded([&] {
        check_arg(model != nullptr && scene_json != nullptr && out != nullptr, "NULL argument");
        disclvlm::Scene scene;
        try {
            scene = disclvlm::scene_from_json(nlohmann::json::parse(scene_json));
        } catch (const nlohmann::json::exception& e) {
            disclvlm::fail(ErrorCode::kParameter, std::string("invalid scene JSON: ") + e.what());
        }
        disclvlm::validate_scene(scene);
        const auto* a = model->adapters ? &*model->adapters : nullptr;
        const auto options = disclvlm::inference_options(model->base.config(), a);
        const disclvlm::SceneFeaturizer featurizer(model->base.config().vision_feature_dim);
        write_embedding(model, disclvlm::image_batch(std::span(&scene, 1), featurizer, options), out,
                        out_len);
    });
}

dl_status dl_embed_text(const dl_model* model, const char* caption, float* out, size_t out_len) {
    return guarded([&] {
        check_arg(model != nullptr && caption != nullptr && out != nullptr, "NULL argument");
        const auto* a = model->adapters ? &*model->adapters : nullptr;
        const auto options = disclvlm::inference_options(model->base.config(), a);
        const std::vector<std::vector<disclvlm::TokenId>> captions = {
            disclvlm::Tokenizer::instance().tokenize(caption)};
        write_embedding(model, disclvlm::text_batch(captions, options), out, out_len);
    });
}

dl_status dl_similarity(const float* a, const float* b, size_t dim, float* out) {
    return guarded([&] {
        check_arg(a != nullptr && b != nullptr && out != nullptr && dim > 0, "invalid argument");
        double s = 0.0;
        for (std::size_t i = 0; i < dim; ++i) s += static_cast<double>(a[i]) * b[i];
        *out = static_cast<float>(s);
    });
}

}  // extern "C"
