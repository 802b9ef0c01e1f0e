// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "error.hpp"
#include "inference.hpp"
#include "support.hpp"
#include "trainer.hpp"

#include <Eigen/SVD>

using namespace disclvlm;
using namespace disclvlm::testing;

namespace {

Mat<double> random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    Rng rng = make_rng(seed, "peft-test");
    Mat<double> m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gaussian(rng);
    return m;
}

AdapterOptions soft_only() {
    AdapterOptions o;
    o.lora = false;
    o.vision_lora = false;
    return o;
}

}  // namespace

TEST_CASE("soft prompt copies the embedding rows of its source prompt") {
    const auto model = TinyLvlm<double>::initialize(tiny_config());
    const auto sp = init_soft_prompt(model, Modality::kImage, kDefaultImagePrompt);
    const auto ids = Tokenizer::instance().tokenize(kDefaultImagePrompt);
    REQUIRE(sp.vectors.rows() == static_cast<Eigen::Index>(ids.size()));
    CHECK(sp.source_prompt == ids);
    const auto& table = model.params()[model.slots().tok_emb];
    for (std::size_t i = 0; i < ids.size(); ++i) {
        CHECK((sp.vectors.row(static_cast<Eigen::Index>(i)).array() == table.row(ids[i]).array()).all());
    }
    CHECK_THROWS_AS(init_soft_prompt(model, Modality::kText, ""), Error);
    CHECK(decode_soft_prompt(model, sp.vectors) == ids);
}

TEST_CASE("fresh soft prompts reproduce hard-prompt logits") {
    const auto model = TinyLvlm<double>::initialize(tiny_config());
    const auto adapters = AdapterSet<double>::create(model, soft_only());
    const auto recs = records(2);
    const auto hard = forward(model, nullptr, training_batch(recs, model.config(), false));
    const auto soft = forward(model, &adapters, training_batch(recs, model.config(), true));
    REQUIRE(hard.size() == soft.size());
    double worst = 0.0;
    for (std::size_t r = 0; r < hard.size(); ++r) {
        worst = std::max(worst, (hard[r].logits - soft[r].logits).cwiseAbs().maxCoeff());
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("soft prompt replacement only touches the prompt span") {
    const auto model = TinyLvlm<double>::initialize(tiny_config());
    auto adapters = AdapterSet<double>::create(model, soft_only());
    const auto batch = training_batch(records(1), model.config(), true);
    const auto before = forward(model, &adapters, batch);
    const int slot = adapters.prompt(Modality::kImage)->vectors;
    adapters.params()[slot].array() += 0.5;
    const auto after = forward(model, &adapters, batch);
    const int begin = batch.rows[0].prompt.begin;
    CHECK(begin > 0);
    CHECK((before[0].hidden.topRows(begin).array() == after[0].hidden.topRows(begin).array()).all());
    CHECK_FALSE((before[0].hidden.row(begin).array() == after[0].hidden.row(begin).array()).all());
    // The text row has its own prompt and is untouched.
    CHECK((before[1].hidden.array() == after[1].hidden.array()).all());
}

TEST_CASE("one adaptation step moves soft prompts and leaves the table alone") {
    const auto base = TinyLvlm<float>::initialize(tiny_config());
    const auto recs = records(4);
    TrainConfig c;
    c.batch_size = 2;
    c.steps = 1;
    c.warmup_steps = 1;
    c.learning_rate = 1e-2;
    c.seed = 3;
    const auto start = AdapterSet<float>::create(base, soft_only());
    const auto trained = adapt(base, start, recs, c);
    const int slot = trained.prompt(Modality::kImage)->vectors;
    CHECK_FALSE((trained.params()[slot].array() == start.params()[slot].array()).all());
    const auto ids = trained.prompt(Modality::kImage)->source_prompt;
    const auto& table = base.params()[base.slots().tok_emb];
    for (std::size_t i = 0; i < ids.size(); ++i) {
        CHECK((start.params()[slot].row(static_cast<Eigen::Index>(i)).array() == table.row(ids[i]).array()).all());
    }
}

TEST_CASE("zero-initialized LoRA is an exact identity") {
    const auto w = random_matrix(6, 5, 1);
    const auto x = random_matrix(7, 5, 2);
    const auto a = make_lora<double>("t", 5, 6, {2, 16.0, 0.02}, 3);
    CHECK(a.up.cwiseAbs().maxCoeff() == 0.0);
    const Mat<double> base = x * w.transpose();
    CHECK((apply_lora(a, w, x).array() == base.array()).all());
    CHECK((merge(a, w).array() == w.array()).all());
}

TEST_CASE("LoRA rank must stay below both dimensions") {
    CHECK_THROWS_AS(make_lora<double>("t", 4, 4, {4, 16.0, 0.02}, 1), Error);
    CHECK_THROWS_AS(make_lora<double>("t", 4, 6, {4, 16.0, 0.02}, 1), Error);
    CHECK_NOTHROW(make_lora<double>("t", 4, 6, {3, 16.0, 0.02}, 1));
}

TEST_CASE("LoRA forward matches the dense (W + (alpha/r) B A) oracle") {
    auto a = make_lora<double>("t", 4, 4, {2, 16.0, 0.02}, 5);
    a.down = random_matrix(2, 4, 6);
    a.up = random_matrix(4, 2, 7);
    const auto w = random_matrix(4, 4, 8);
    const auto x = random_matrix(3, 4, 9);
    const Mat<double> dense = w + (16.0 / 2.0) * a.up * a.down;
    const Mat<double> expected = x * dense.transpose();
    CHECK((apply_lora(a, w, x) - expected).cwiseAbs().maxCoeff() < 1e-6);
    CHECK_THROWS_AS(apply_lora(a, w, random_matrix(3, 5, 1)), Error);
}

TEST_CASE("merge and unmerge round trip; merged forward matches the adapter path") {
    auto a = make_lora<float>("t", 16, 12, {4, 8.0, 0.02}, 5);
    a.down = random_matrix(4, 16, 6).cast<float>() * 0.3f;
    a.up = random_matrix(12, 4, 7).cast<float>() * 0.3f;
    const Mat<float> w = random_matrix(12, 16, 8).cast<float>();
    const Mat<float> merged = merge(a, w);
    CHECK((unmerge(a, merged) - w).cwiseAbs().maxCoeff() <= 1e-6f);
    const Mat<float> x = random_matrix(100, 16, 9).cast<float>();
    const Mat<float> via_adapter = apply_lora(a, w, x);
    const Mat<float> via_merged = x * merged.transpose();
    CHECK((via_adapter - via_merged).cwiseAbs().maxCoeff() < 1e-5f);
}

TEST_CASE("LoRA delta has numerical rank at most r") {
    auto a = make_lora<double>("t", 16, 12, {3, 16.0, 0.02}, 5);
    a.down = random_matrix(3, 16, 10);
    a.up = random_matrix(12, 3, 11);
    const Eigen::JacobiSVD<Mat<double>> svd(lora_delta(a));
    const auto& s = svd.singularValues();
    for (Eigen::Index i = 3; i < s.size(); ++i) CHECK(s(i) < 1e-6 * s(0));
    CHECK(s(2) > 1e-3 * s(0));
}

TEST_CASE("adapter set targets existing layers and honours the option groups") {
    const auto model = TinyLvlm<float>::initialize(tiny_config());
    AdapterOptions o;
    o.lora_options.rank = 4;
    const auto full = AdapterSet<float>::create(model, o);
    const auto names = adaptable_linear_names(model.config(), true);
    CHECK(full.lora().size() == names.size());
    for (const auto& s : full.lora()) {
        CHECK(model.params().find(s.target) == s.target_slot);
        CHECK(full.lora_for(s.target_slot) != nullptr);
    }
    CHECK(full.prompt(Modality::kImage).has_value());
    CHECK(full.prompt(Modality::kText).has_value());
    CHECK(full.logit_scale() == doctest::Approx(1.0 / 0.07).epsilon(1e-5));

    o.vision_lora = false;
    o.soft_prompts = false;
    const auto partial = AdapterSet<float>::create(model, o);
    CHECK(partial.lora().size() == adaptable_linear_names(model.config(), false).size());
    CHECK_FALSE(partial.prompt(Modality::kImage).has_value());

    // Zero-init adapters leave every output unchanged.
    const auto batch = training_batch(records(2), model.config(), false);
    const auto a = forward(model, nullptr, batch);
    const auto b = forward(model, &partial, batch);
    for (std::size_t r = 0; r < a.size(); ++r) {
        CHECK((a[r].logits - b[r].logits).cwiseAbs().maxCoeff() <= 1e-7f);
    }
}

TEST_CASE("logit scale is clamped at 100") {
    const auto model = TinyLvlm<double>::initialize(tiny_config());
    AdapterOptions o = soft_only();
    o.init_temperature = 0.001;
    const auto a = AdapterSet<double>::create(model, o);
    CHECK(a.logit_scale() == doctest::Approx(100.0));
    CHECK(a.logit_scale_clamped());
}
