// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "optimizer.hpp"

#include "error.hpp"

#include <cmath>
#include <numbers>

namespace disclvlm {

template <typename T>
AdamW<T>::AdamW(const ParamSet<T>& params, AdamWOptions options)
    : options_(options), m_(params.zeros_like()), v_(params.zeros_like()) {}

template <typename T>
void AdamW<T>::step(ParamSet<T>& params, const ParamSet<T>& grads, double lr,
                    const std::function<bool(int)>& update, const std::function<bool(int)>& decay) {
    require(grads.size() == params.size() && m_.size() == params.size(), ErrorCode::kShape,
            "optimizer state does not match the parameter set");
    ++steps_;
    const double b1 = options_.beta1;
    const double b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (int i = 0; i < static_cast<int>(params.size()); ++i) {
        if (!update(i)) continue;
        auto& p = params[i];
        const auto& g = grads[i];
        auto& m = m_[i];
        auto& v = v_[i];
        m = T(b1) * m + T(1.0 - b1) * g;
        v = T(b2) * v + T(1.0 - b2) * g.cwiseAbs2();
        if (options_.weight_decay > 0.0 && decay(i)) {
            p *= T(1.0 - lr * options_.weight_decay);
        }
        p.array() -= T(lr) * (m.array() / T(c1)) / ((v.array() / T(c2)).sqrt() + T(options_.eps));
    }
}

template <typename T>
void AdamW<T>::restore(long long steps, ParamSet<T> m, ParamSet<T> v) {
    require(m.size() == v.size(), ErrorCode::kShape, "moment sets differ in size");
    steps_ = steps;
    m_ = std::move(m);
    v_ = std::move(v);
}

bool decay_eligible(const std::string& name, Eigen::Index rows) {
    if (rows <= 1 || name == "pos_emb") return false;
    return name.find("soft_prompt") == std::string::npos;
}

double LrSchedule::at(int step) const {
    if (warmup > 0 && step < warmup) {
        return peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
    }
    const int span = std::max(1, total - warmup);
    const double progress = std::min(1.0, static_cast<double>(step - warmup) / span);
    return peak * (min_ratio + (1.0 - min_ratio) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

void to_json(nlohmann::json& j, const AdamWOptions& o) {
    j = {{"beta1", o.beta1}, {"beta2", o.beta2}, {"eps", o.eps}, {"weight_decay", o.weight_decay}};
}

void from_json(const nlohmann::json& j, AdamWOptions& o) {
    o.beta1 = j.value("beta1", o.beta1);
    o.beta2 = j.value("beta2", o.beta2);
    o.eps = j.value("eps", o.eps);
    o.weight_decay = j.value("weight_decay", o.weight_decay);
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace disclvlm
