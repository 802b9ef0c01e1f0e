// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "support.hpp"

#include <cstdlib>

using namespace disclvlm;
using namespace disclvlm::testing;

namespace {

struct Fixture {
    TinyLvlm<double> model;
    AdapterSet<double> adapters;
    AssembledBatch batch;

    explicit Fixture(bool soft) {
        const auto config = tiny_config();
        model = TinyLvlm<double>::initialize(config);
        jitter(model.params(), 1, 0.05);
        AdapterOptions o;
        o.lora_options.rank = 4;
        o.seed = 3;
        adapters = AdapterSet<double>::create(model, o);
        jitter(adapters.params(), 2, 0.05);
        batch = training_batch(records(3), config, soft);
    }
};

double worst(const std::vector<GradCheck>& checks) {
    double w = 0.0;
    for (const auto& c : checks) {
        INFO(c.name << " rel " << c.rel_error << " |g| " << c.analytic_norm);
        CHECK(c.rel_error < 1e-4);
        w = std::max(w, c.rel_error);
        if (std::getenv("DL_VERBOSE")) MESSAGE(c.name << " " << c.rel_error << " " << c.analytic_norm);
    }
    return w;
}

void check_objective(const ObjectiveOptions& options, bool soft) {
    Fixture f(soft);
    auto grads = Gradients<double>::for_training(f.model, &f.adapters, true);
    evaluate_objective(f.model, &f.adapters, f.batch, options, &grads);
    auto loss = [&] { return evaluate_objective(f.model, &f.adapters, f.batch, options, nullptr).total; };
    worst(finite_difference_check(f.model.params(), grads.model, loss, 1e-4, 8, 1));
    worst(finite_difference_check(f.adapters.params(), grads.adapters, loss, 1e-4, 8, 2));
}

}  // namespace

TEST_CASE("contrastive objective gradients match central differences") {
    check_objective({true, 0.0, 0.07}, true);
}

TEST_CASE("next-token objective gradients match central differences") {
    check_objective({false, 1.0, 0.07}, false);
}

TEST_CASE("combined objective gradients match central differences") {
    check_objective({true, 0.7, 0.07}, true);
}

TEST_CASE("both-out contrastive gradients match central differences") {
    ObjectiveOptions o{true, 0.5, 0.07};
    o.both_out = true;
    check_objective(o, true);
}

TEST_CASE("both-out contrast reduces to first-out without trailing summary tokens") {
    Fixture f(true);
    const auto batch = training_batch(records(3), f.model.config(), true, TemplateMode::kInference);
    ObjectiveOptions first{true, 0.0, 0.07};
    ObjectiveOptions both = first;
    both.both_out = true;
    const double a = evaluate_objective(f.model, &f.adapters, batch, first, nullptr).contrastive;
    const double b = evaluate_objective(f.model, &f.adapters, batch, both, nullptr).contrastive;
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
    const auto train = training_batch(records(3), f.model.config(), true);
    CHECK(evaluate_objective(f.model, &f.adapters, train, first, nullptr).contrastive !=
          evaluate_objective(f.model, &f.adapters, train, both, nullptr).contrastive);
}

TEST_CASE("frozen base accumulates no base gradients") {
    Fixture f(true);
    auto grads = Gradients<double>::for_training(f.model, &f.adapters, false);
    CHECK(grads.model.size() == 0);
    evaluate_objective(f.model, &f.adapters, f.batch, {true, 1.0, 0.07}, &grads);
    double total = 0.0;
    for (const auto& g : grads.adapters.tensors) total += g.norm();
    CHECK(total > 0.0);
}

TEST_CASE("loss input gradients match central differences") {
    Rng rng = make_rng(9, "loss-grad");
    const int b = 4;
    const int d = 6;
    Mat<double> img(b, d);
    Mat<double> txt(b, d);
    for (Eigen::Index i = 0; i < img.size(); ++i) {
        img.data()[i] = gaussian(rng);
        txt.data()[i] = gaussian(rng);
    }
    img.rowwise().normalize();
    txt.rowwise().normalize();
    const double tau = 0.3;
    ContrastiveGrad<double> g;
    contrastive_loss(img, txt, tau, &g);
    // Perturb without renormalizing: compare the raw partial derivatives by
    // evaluating the unconstrained formula directly.
    auto raw = [&](const Mat<double>& a, const Mat<double>& t, double temp) {
        const Mat<double> z = a * t.transpose() / temp;
        double l = 0.0;
        for (int k = 0; k < b; ++k) {
            l += std::log(z.row(k).array().exp().sum()) - z(k, k);
            l += std::log(z.col(k).array().exp().sum()) - z(k, k);
        }
        return l / b;
    };
    const double h = 1e-6;
    for (int i = 0; i < b; ++i) {
        for (int j = 0; j < d; ++j) {
            Mat<double> p = img;
            Mat<double> m = img;
            p(i, j) += h;
            m(i, j) -= h;
            CHECK(g.d_image(i, j) == doctest::Approx((raw(p, txt, tau) - raw(m, txt, tau)) / (2 * h)).epsilon(1e-6));
            p = txt;
            m = txt;
            p(i, j) += h;
            m(i, j) -= h;
            CHECK(g.d_text(i, j) == doctest::Approx((raw(img, p, tau) - raw(img, m, tau)) / (2 * h)).epsilon(1e-6));
        }
    }
    CHECK(g.d_temperature ==
          doctest::Approx((raw(img, txt, tau + h) - raw(img, txt, tau - h)) / (2 * h)).epsilon(1e-6));

    Mat<double> logits(5, 7);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = gaussian(rng);
    const std::vector<TokenId> targets = {0, 3, 6, 1, 2};
    const std::vector<std::uint8_t> mask = {0, 1, 0, 1, 1};
    Mat<double> dl;
    ar_loss(logits, targets, mask, &dl);
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 7; ++j) {
            Mat<double> p = logits;
            Mat<double> m = logits;
            p(i, j) += h;
            m(i, j) -= h;
            const double fd = (ar_loss(p, targets, mask) - ar_loss(m, targets, mask)) / (2 * h);
            CHECK(dl(i, j) == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}
