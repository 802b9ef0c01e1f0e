// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "diagnostics.hpp"
#include "error.hpp"
#include "support.hpp"

#include <numeric>
#include <sstream>

using namespace disclvlm;
using namespace disclvlm::testing;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::kInternal;
}

// Direct (sum p)^2 / (V sum p^2).
double pr_oracle(const std::vector<double>& p) {
    double s = 0, s2 = 0;
    for (const double v : p) {
        s += v;
        s2 += v * v;
    }
    return s * s / (static_cast<double>(p.size()) * s2);
}

AssembledBatch probe_rows(const ModelConfig& config, std::size_t n) {
    const auto recs = records(n, 31, true);
    std::vector<Scene> scenes;
    for (const auto& r : recs) scenes.push_back(r.scene);
    return image_batch(scenes, SceneFeaturizer(config.vision_feature_dim),
                       inference_options(config, nullptr));
}

}  // namespace

TEST_CASE("entropy reference values") {
    const std::vector<double> uniform(16, 1.0 / 16);
    CHECK(std::abs(entropy(uniform) - 2.77259) < 1e-5);
    std::vector<double> one_hot(16, 0.0);
    one_hot[3] = 1.0;
    CHECK(entropy(one_hot) == 0.0);
    std::vector<double> two(16, 0.0);
    two[0] = two[1] = 0.5;
    CHECK(std::abs(entropy(two) - 0.69315) < 1e-5);
    CHECK(code_of([] { entropy(std::vector<double>{0.5, 0.4}); }) == ErrorCode::kContract);
    CHECK(code_of([] { entropy(std::vector<double>{1.5, -0.5}); }) == ErrorCode::kContract);
    CHECK(code_of([] { entropy(std::vector<double>{}); }) == ErrorCode::kContract);
}

TEST_CASE("entropy of a mixture is at least the smaller entropy") {
    Rng rng = make_rng(4, "mixture");
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 2 + uniform_index(rng, 20);
        std::vector<double> p(n), q(n);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = std::pow(uniform01(rng), 4);
            q[i] = uniform01(rng) < 0.3 ? 0.0 : uniform01(rng);
        }
        q[0] += 1e-3;
        const double sp = std::accumulate(p.begin(), p.end(), 0.0);
        const double sq = std::accumulate(q.begin(), q.end(), 0.0);
        for (auto& v : p) v /= sp;
        for (auto& v : q) v /= sq;
        const double w = uniform01(rng);
        std::vector<double> m(n);
        for (std::size_t i = 0; i < n; ++i) m[i] = w * p[i] + (1 - w) * q[i];
        REQUIRE(entropy(m) >= std::min(entropy(p), entropy(q)) - 1e-12);
        REQUIRE(entropy(m) <= std::log(static_cast<double>(n)) + 1e-12);
    }
}

TEST_CASE("cumulative variance reference cases") {
    Mat<double> pm(2, 4);
    pm << 1, 2, 3, 4, -1, -2, -3, -4;
    CHECK(std::abs(cumulative_variance(pm)[0] - 1.0) < 1e-12);

    // {+c e_i, -c e_i}: centered covariance is a multiple of the identity.
    for (const int d : {3, 8, 16}) {
        Mat<double> basis(2 * d, d);
        basis.setZero();
        for (int i = 0; i < d; ++i) {
            basis(2 * i, i) = 2.5;
            basis(2 * i + 1, i) = -2.5;
        }
        const auto curve = cumulative_variance(basis);
        REQUIRE(curve.size() == static_cast<std::size_t>(d));
        for (int k = 1; k <= d; ++k) {
            CHECK(std::abs(curve[static_cast<std::size_t>(k - 1)] - static_cast<double>(k) / d) < 1e-6);
        }
    }

    Rng rng = make_rng(5, "rank2");
    Mat<double> coef(30, 2), dirs(2, 10);
    for (Eigen::Index i = 0; i < coef.size(); ++i) coef.data()[i] = gaussian(rng);
    for (Eigen::Index i = 0; i < dirs.size(); ++i) dirs.data()[i] = gaussian(rng);
    const Mat<double> rank2 = coef * dirs;
    CHECK(std::abs(cumulative_variance(rank2)[1] - 1.0) < 1e-6);

    CHECK(code_of([] { cumulative_variance(Mat<double>::Constant(5, 3, 2.0)); }) == ErrorCode::kDegenerate);
    CHECK(code_of([] { cumulative_variance(Mat<double>::Ones(1, 3)); }) == ErrorCode::kContract);
}

TEST_CASE("cumulative variance is invariant to row order and translation") {
    Rng rng = make_rng(6, "cumvar-invariance");
    for (int trial = 0; trial < 50; ++trial) {
        const auto n = static_cast<Eigen::Index>(2 + uniform_index(rng, 40));
        const auto d = static_cast<Eigen::Index>(1 + uniform_index(rng, 12));
        Mat<double> x(n, d);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = gaussian(rng);
        const auto base = cumulative_variance(x);
        for (std::size_t i = 1; i < base.size(); ++i) REQUIRE(base[i] >= base[i - 1]);
        if (n > d) REQUIRE(std::abs(base.back() - 1.0) < 1e-9);

        std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Mat<double> shuffled(n, d);
        for (Eigen::Index i = 0; i < n; ++i) shuffled.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
        Mat<double> shifted = x;
        Eigen::RowVectorXd c(d);
        for (Eigen::Index j = 0; j < d; ++j) c(j) = 10 * gaussian(rng);
        shifted.rowwise() += c;
        const auto a = cumulative_variance(shuffled);
        const auto b = cumulative_variance(shifted);
        for (std::size_t i = 0; i < base.size(); ++i) {
            REQUIRE(std::abs(a[i] - base[i]) < 1e-9);
            REQUIRE(std::abs(b[i] - base[i]) < 1e-9);
        }
    }
}

TEST_CASE("components for a variance fraction") {
    const std::vector<double> curve = {0.5, 0.85, 0.9, 1.0};
    CHECK(components_for(curve, 0.9) == 3);
    CHECK(components_for(curve, 0.5) == 1);
    CHECK(components_for(curve, 0.95) == 4);
}

TEST_CASE("spearman correlation") {
    const std::vector<double> x = {0.1, 0.5, 0.7, 1.2, 3.0};
    const std::vector<double> up = {1, 2, 5, 9, 10};
    const std::vector<double> down = {10, 9, 5, 2, 1};
    CHECK(spearman(x, up) == doctest::Approx(1.0));
    CHECK(spearman(x, down) == doctest::Approx(-1.0));
    // Five prompts with a tie in each variable.
    const std::vector<double> ent = {2.1, 1.4, 2.1, 0.9, 1.7};
    const std::vector<double> r1 = {0.30, 0.25, 0.10, 0.10, 0.40};
    CHECK(std::abs(spearman(ent, r1) - brute_spearman(ent, r1)) < 1e-9);

    Rng rng = make_rng(2, "spearman");
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 3 + uniform_index(rng, 30);
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = static_cast<double>(uniform_index(rng, 6));
            b[i] = gaussian(rng);
        }
        a[0] = 0;
        a[1] = 7;
        REQUIRE(std::abs(spearman(a, b) - brute_spearman(a, b)) < 1e-9);
    }
    CHECK_THROWS_AS(spearman(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), Error);
}

TEST_CASE("participation ratio reference values") {
    CHECK(participation_ratio(std::vector<double>(8, 0.125)) == doctest::Approx(1.0));
    std::vector<double> one_hot(8, 0.0);
    one_hot[5] = 1.0;
    CHECK(participation_ratio(one_hot) == doctest::Approx(0.125));
    const std::vector<double> hand = {0.5, 0.25, 0.25, 0, 0, 0, 0, 0};
    CHECK(std::abs(entropy(hand) - 1.03972) < 1e-5);
    CHECK(participation_ratio(hand) == doctest::Approx(pr_oracle(hand)));
    CHECK(participation_ratio(hand) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("attention density is uniform when queries and keys vanish") {
    auto model = TinyLvlm<float>::initialize(tiny_config(3));
    for (int l = 0; l < model.config().num_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".attn.";
        model.params()[model.params().index(p + "wq")].setZero();
        model.params()[model.params().index(p + "wk")].setZero();
    }
    const auto rows = probe_rows(model.config(), 3);
    const auto report = attention_density(model, nullptr, rows);
    const int v = model.config().num_vision_tokens;
    REQUIRE(report.heads.size() == static_cast<std::size_t>(model.config().num_layers * model.config().num_heads));
    for (const auto& h : report.heads) {
        CHECK(std::abs(h.entropy - std::log(static_cast<double>(v))) < 1e-5);
        CHECK(std::abs(h.participation_ratio - 1.0) < 1e-5);
    }
}

TEST_CASE("attention density bounds and restriction order on a random model") {
    auto model = TinyLvlm<float>::initialize(tiny_config(3));
    jitter(model.params(), 9, 0.5);
    const auto rows = probe_rows(model.config(), 4);
    const auto report = attention_density(model, nullptr, rows);
    const double v = model.config().num_vision_tokens;
    for (const auto& h : report.heads) {
        CHECK(h.entropy >= 0.0);
        CHECK(h.entropy <= std::log(v) + 1e-9);
        CHECK(h.participation_ratio >= 1.0 / v - 1e-9);
        CHECK(h.participation_ratio <= 1.0 + 1e-9);
    }
    // Single row, single head: recompute from the captured attention.
    const AssembledBatch one{{rows.rows[0]}, rows.features};
    const auto out = forward<float>(model, nullptr, one, true);
    const auto& row = one.rows[0];
    const auto& a = out[0].attention[0];
    std::vector<double> p;
    for (int k = row.vision.begin; k < row.vision.end; ++k) p.push_back(a(row.anchor, k));
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    std::vector<double> q = p;
    for (auto& x : q) x /= s;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) CHECK((p[i] < p[i + 1]) == (q[i] < q[i + 1]));
    const auto single = attention_density(model, nullptr, one);
    CHECK(single.heads[0].entropy == doctest::Approx(entropy(q)).epsilon(1e-6));
    CHECK(single.heads[0].participation_ratio == doctest::Approx(pr_oracle(q)).epsilon(1e-6));

    const AssembledBatch text = text_batch(std::vector<std::vector<TokenId>>{Tokenizer::instance().tokenize("a red cube")},
                                           inference_options(model.config(), nullptr));
    CHECK(code_of([&] { attention_density(model, nullptr, text); }) == ErrorCode::kContract);
}

TEST_CASE("top-k decoded tokens") {
    auto model = TinyLvlm<float>::initialize(tiny_config(3));
    jitter(model.params(), 10, 0.3);
    const auto rows = probe_rows(model.config(), 1);
    const int vocab = model.config().vocab_size;
    const auto all = topk_decoded(model, nullptr, rows, vocab);
    REQUIRE(all.size() == static_cast<std::size_t>(vocab));
    double total = 0;
    for (const auto& [w, p] : all) total += p;
    CHECK(std::abs(total - 1.0) < 1e-6);

    const Mat<float> dist = next_token_distribution(model, nullptr, rows);
    std::vector<std::pair<double, int>> sorted;
    for (int i = 0; i < vocab; ++i) sorted.emplace_back(dist(0, i), i);
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    const auto top5 = topk_decoded(model, nullptr, rows, 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(top5[i].first == Tokenizer::instance().word(sorted[i].second));
        CHECK(top5[i].second == doctest::Approx(sorted[i].first));
    }
    CHECK_THROWS_AS(topk_decoded(model, nullptr, rows, 0), Error);
    CHECK_THROWS_AS(topk_decoded(model, nullptr, rows, vocab + 1), Error);

    const int cube = Tokenizer::instance().id("cube");
    model.params()[model.params().index("head.w")].setZero();
    model.params()[model.params().index("head.b")](0, cube) = 60.0f;
    const auto peak = topk_decoded(model, nullptr, rows, 1);
    CHECK(peak[0].first == "cube");
    CHECK(peak[0].second > 1.0 - 1e-6);
}

TEST_CASE("prompt probe report") {
    const auto model = TinyLvlm<float>::initialize(tiny_config(3));
    const auto probe = records(6, 40, true);
    auto prompts = default_probe_prompts();
    REQUIRE(prompts.size() >= 2);
    prompts.resize(3);
    const auto report = prompt_probe(model, nullptr, prompts, probe);
    REQUIRE(report.prompts.size() == 3);
    const double max_entropy = std::log(static_cast<double>(model.config().vocab_size));
    for (const auto& r : report.prompts) {
        CHECK(r.mean_entropy >= 0.0);
        CHECK(r.mean_entropy <= max_entropy + 1e-9);
        CHECK(std::abs(r.image_cumvar.back() - 1.0) < 1e-6);
        CHECK(std::is_sorted(r.text_cumvar.begin(), r.text_cumvar.end()));
    }
    CHECK(std::abs(report.spearman_entropy_r1) <= 1.0);
    std::ostringstream a, b;
    write_prompt_csv(a, report);
    write_cumvar_csv(b, report);
    const std::string text = a.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
    CHECK(code_of([&] { prompt_probe(model, nullptr, std::span(prompts).first(1), probe); }) == ErrorCode::kContract);
}

TEST_CASE("density comparison of identical models passes both gates") {
    const auto model = TinyLvlm<float>::initialize(tiny_config(3));
    AdapterOptions o;
    o.lora_options.rank = 2;
    const auto adapters = AdapterSet<float>::create(model, o);
    const auto rows = records(20, 41, true);
    const auto c = compare_density(model, adapters, rows);
    CHECK(c.components_ok);
    CHECK(c.participation_ok);
    CHECK(c.components_base >= 1);
    CHECK(std::abs(c.cumvar_base.back() - 1.0) < 1e-6);
    CHECK(to_json(c).contains("components_90_base"));
}
