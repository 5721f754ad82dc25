// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "threatbench/metrics.hpp"
#include "threatbench/rng.hpp"
#include "support/oracles.hpp"

using Catch::Approx;

TEST_CASE("confusion counts") {
    const std::vector<int> truth = {1, 1, 0, 0, 1, 0};
    const std::vector<int> preds = {1, 0, 0, 1, 1, 0};
    const auto c = tb::confusion(preds, truth);
    // hand tally: tp=2 (idx 0,4), fn=1 (idx 1), fp=1 (idx 3), tn=2 (idx 2,5)
    CHECK(c.tp == 2);
    CHECK(c.fn == 1);
    CHECK(c.fp == 1);
    CHECK(c.tn == 2);
    CHECK(tb::accuracy(c) == Approx(100.0 * 4.0 / 6.0));

    const auto perfect = tb::confusion(truth, truth);
    CHECK(perfect.fp == 0);
    CHECK(perfect.fn == 0);

    std::vector<int> flipped;
    for (int t : truth) flipped.push_back(1 - t);
    const auto wrong = tb::confusion(flipped, truth);
    CHECK(wrong.tp == 0);
    CHECK(wrong.tn == 0);

    CHECK_THROWS_AS(tb::confusion({1}, {1, 0}), std::invalid_argument);
}

TEST_CASE("f_beta matches direct evaluation") {
    // P = 1, R = 0.5: tp=1, fp=0, fn=1
    const tb::ConfusionCounts c{1, 0, 0, 1};
    CHECK(tb::f_beta(c, 1.0).pct == Approx(66.67).margin(0.005));
    CHECK(tb::f_beta(c, 0.5).pct == Approx(83.33).margin(0.005));
    CHECK(tb::f_beta(c, 2.0).pct == Approx(55.56).margin(0.005));

    // perfect classifier: F_beta = 100 for every beta
    const tb::ConfusionCounts perfect{10, 0, 10, 0};
    for (double beta : {0.5, 1.0, 2.0, 3.7}) {
        CHECK(tb::f_beta(perfect, beta).pct == Approx(100.0));
    }

    // zero precision and recall
    const tb::ConfusionCounts degen{0, 3, 0, 2};
    const auto r = tb::f_beta(degen, 1.0);
    CHECK(r.pct == 0.0);
    CHECK(r.degenerate);

    CHECK_THROWS_AS(tb::f_beta(c, 0.0), std::invalid_argument);
}

TEST_CASE("f_beta ordering follows precision vs recall") {
    tb::Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        tb::ConfusionCounts c;
        c.tp = 1 + rng.uniform_below(50);
        c.fp = rng.uniform_below(50);
        c.fn = rng.uniform_below(50);
        c.tn = rng.uniform_below(50);
        const double p = double(c.tp) / double(c.tp + c.fp);
        const double r = double(c.tp) / double(c.tp + c.fn);
        const double f05 = tb::f_beta(c, 0.5).pct;
        const double f1 = tb::f_beta(c, 1.0).pct;
        const double f2 = tb::f_beta(c, 2.0).pct;
        if (p > r) {
            CHECK(f05 >= f1 - 1e-9);
            CHECK(f1 >= f2 - 1e-9);
        } else if (r > p) {
            CHECK(f2 >= f1 - 1e-9);
            CHECK(f1 >= f05 - 1e-9);
        }
    }
}

TEST_CASE("f_beta is monotone in tp") {
    for (std::uint64_t tp = 1; tp < 30; ++tp) {
        const double lo = tb::f_beta({tp, 7, 0, 5}, 1.3).pct;
        const double hi = tb::f_beta({tp + 1, 7, 0, 5}, 1.3).pct;
        CHECK(hi >= lo);
    }
}

TEST_CASE("roc_auc on the worked four-point example") {
    const std::vector<double> scores = {0.8, 0.5, 0.5, 0.2};
    const std::vector<int> truth = {1, 0, 1, 0};
    CHECK(tb::roc_auc(scores, truth) == Approx(87.5));

    // perfect ranking
    CHECK(tb::roc_auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == Approx(100.0));

    // reversing scores maps AUC to 100 - AUC
    std::vector<double> reversed;
    for (double s : scores) reversed.push_back(-s);
    CHECK(tb::roc_auc(reversed, truth) == Approx(100.0 - 87.5));

    CHECK_THROWS_AS(tb::roc_auc({0.1, 0.2}, {1, 1}), std::invalid_argument);
}

TEST_CASE("mann-whitney AUC equals trapezoidal ROC within 1e-9") {
    tb::Rng rng(7);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng.uniform_below(40);
        std::vector<double> scores(n);
        std::vector<int> truth(n);
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            // quantized scores to force ties
            scores[i] = std::floor(rng.uniform01() * 8.0) / 8.0;
            truth[i] = rng.uniform01() < 0.4 ? 1 : 0;
            (truth[i] ? has_pos : has_neg) = true;
        }
        if (!has_pos) truth[0] = 1;
        if (!has_neg) truth[n - 1] = 0;
        const double mw = tb::roc_auc(scores, truth);
        const double trap = oracle::trapezoid_auc_pct(scores, truth);
        CHECK(std::abs(mw - trap) < 1e-9);
    }
}

TEST_CASE("AUC is invariant under strictly monotone transforms") {
    tb::Rng rng(99);
    std::vector<double> scores(60);
    std::vector<int> truth(60);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        scores[i] = rng.uniform(-3, 3);
        truth[i] = i % 3 == 0 ? 1 : 0;
    }
    const double base = tb::roc_auc(scores, truth);
    std::vector<double> expd, cubed;
    for (double s : scores) {
        expd.push_back(std::exp(s));
        cubed.push_back(s * s * s + 2.0 * s);
    }
    CHECK(tb::roc_auc(expd, truth) == Approx(base));
    CHECK(tb::roc_auc(cubed, truth) == Approx(base));
}

TEST_CASE("report fills every field") {
    const std::vector<int> truth = {1, 1, 0, 0};
    const auto perfect = tb::report({0.9, 0.8, 0.1, 0.2}, truth);
    CHECK(perfect.accuracy == Approx(100.0));
    CHECK(perfect.f_1 == Approx(100.0));
    CHECK(perfect.f_05 == Approx(100.0));
    CHECK(perfect.f_2 == Approx(100.0));
    CHECK(perfect.auc == Approx(100.0));

    // all-ties scores: every pair gets half credit
    const auto ties = tb::report({0.5, 0.5, 0.5, 0.5}, truth);
    CHECK(ties.auc == Approx(50.0));
    // threshold ties go positive
    CHECK(ties.counts.tp == 2);
    CHECK(ties.counts.fp == 2);
}

TEST_CASE("threshold sweep is monotone in predicted positives") {
    tb::Rng rng(5);
    std::vector<double> scores(50);
    for (auto& s : scores) s = rng.uniform01();
    std::size_t prev = scores.size() + 1;
    for (double thr = 0.0; thr <= 1.001; thr += 0.05) {
        std::size_t pos = 0;
        for (double s : scores) {
            if (tb::predict_label_from_score(s, thr) == 1) ++pos;
        }
        CHECK(pos <= prev);
        prev = pos;
    }
}

TEST_CASE("metric report round-trips through its CSV row") {
    const std::vector<int> truth = {1, 0, 1, 0, 1, 0, 0};
    const auto rep = tb::report({0.8, 0.3, 0.6, 0.55, 0.2, 0.1, 0.4}, truth);
    const auto row = tb::metric_csv_row(rep);
    const auto back = tb::metric_from_csv_row(row);
    CHECK(tb::metric_csv_row(back) == row);
    CHECK(back.counts.tp == rep.counts.tp);
    CHECK(back.counts.fn == rep.counts.fn);
}
