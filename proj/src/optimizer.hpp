// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0
//
// Adaptive-moment optimizer with decoupled weight decay, and a linear-warmup
// cosine learning-rate schedule.

#pragma once

#include "model.hpp"

#include <json.hpp>

#include <functional>
#include <vector>

namespace disclvlm {

struct AdamWOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

template <typename T>
class AdamW {
public:
    AdamW() = default;
    AdamW(const ParamSet<T>& params, AdamWOptions options);

    // Updates params[i] for which update(i) holds; decay applies where
    // decay(i) holds. Moments of skipped tensors stay untouched.
    void step(ParamSet<T>& params, const ParamSet<T>& grads, double lr,
              const std::function<bool(int)>& update, const std::function<bool(int)>& decay);

    long long steps() const { return steps_; }
    const ParamSet<T>& first_moment() const { return m_; }
    const ParamSet<T>& second_moment() const { return v_; }
    const AdamWOptions& options() const { return options_; }

    void restore(long long steps, ParamSet<T> m, ParamSet<T> v);

private:
    AdamWOptions options_;
    ParamSet<T> m_;
    ParamSet<T> v_;
    long long steps_ = 0;
};

// Matrices are decayed; vectors (biases, norm gains), embeddings of
// positions and the logit scale are not.
bool decay_eligible(const std::string& name, Eigen::Index rows);

struct LrSchedule {
    double peak = 1e-3;
    int warmup = 100;
    int total = 1000;
    double min_ratio = 0.1;

    // Linear warmup to peak over `warmup` steps, then cosine decay to
    // peak * min_ratio at `total`.
    double at(int step) const;
};

void to_json(nlohmann::json& j, const AdamWOptions& o);
void from_json(const nlohmann::json& j, AdamWOptions& o);

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace disclvlm
