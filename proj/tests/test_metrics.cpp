#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "tsdet/metrics.hpp"
#include "tsdet/rng.hpp"

using namespace tsdet;

namespace {

ScoredBatch random_batch(Rng& rng, std::size_t max_n = 500, bool quantized = false) {
    ScoredBatch b;
    const std::size_t n = 2 + uniform_index(rng, max_n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        b.labels.push_back(static_cast<int>(uniform_index(rng, 2)));
        double s = uniform_real(rng);
        if (quantized) s = std::round(s * 8.0) / 8.0;  // force ties
        b.scores.push_back(s);
        b.predictions.push_back(s >= 0.5 ? 1 : 0);
    }
    // Ranking metrics need both classes.
    b.labels[0] = 1;
    b.labels[n - 1] = 0;
    return b;
}

}  // namespace

TEST_CASE("confusion counts") {
    ScoredBatch b;
    b.labels = {1, 1, 0, 0};
    b.scores = {0.9, 0.8, 0.2, 0.1};
    b.predictions = {1, 1, 0, 0};
    auto c = confusion(b);
    CHECK(c.tp == 2);
    CHECK(c.tn == 2);
    CHECK(c.fp == 0);
    CHECK(c.fn == 0);

    b.predictions = {1, 1, 1, 1};  // everything called synthetic
    c = confusion(b);
    CHECK(c.tp == 2);
    CHECK(c.fp == 2);
    CHECK(c.total() == 4);
}

TEST_CASE("confusion requires predictions") {
    ScoredBatch b;
    b.labels = {1, 0};
    b.scores = {0.9, 0.1};
    CHECK_THROWS(confusion(b));
}

TEST_CASE("f1 and accuracy") {
    CHECK(f1_accuracy({2, 0, 2, 0}).f1 == 1.0);
    CHECK(f1_accuracy({2, 0, 2, 0}).accuracy == 1.0);

    // The all-positive classifier on balanced labels: the 2/3 floor.
    const auto fa = f1_accuracy({2, 1, 0, 1});
    CHECK(fa.f1 == doctest::Approx(2.0 / 3.0));
    CHECK(fa.accuracy == doctest::Approx(0.5));

    CHECK(f1_accuracy({0, 3, 1, 2}).f1 == 0.0);  // zero TP convention
}

TEST_CASE("roc_auc basics") {
    ScoredBatch sep;
    sep.labels = {1, 1, 0, 0};
    sep.scores = {0.9, 0.8, 0.2, 0.1};
    CHECK(roc_auc(sep) == 1.0);

    ScoredBatch tied;
    tied.labels = {1, 0, 1, 0};
    tied.scores = {0.5, 0.5, 0.5, 0.5};
    CHECK(roc_auc(tied) == 0.5);

    ScoredBatch mixed;
    mixed.labels = {1, 0, 1, 0};
    mixed.scores = {0.9, 0.8, 0.3, 0.1};
    CHECK(roc_auc(mixed) == doctest::Approx(0.75));

    ScoredBatch single;
    single.labels = {1, 1};
    single.scores = {0.5, 0.6};
    CHECK_THROWS(roc_auc(single));
}

TEST_CASE("average_precision basics") {
    ScoredBatch perfect;
    perfect.labels = {1, 1, 0};
    perfect.scores = {0.9, 0.8, 0.1};
    CHECK(average_precision(perfect) == 1.0);

    // Single positive ranked below the negative: precision 1/2 at recall 1.
    ScoredBatch bad;
    bad.labels = {1, 0};
    bad.scores = {0.2, 0.9};
    CHECK(average_precision(bad) == doctest::Approx(0.5));
}

TEST_CASE("tpr_at_fpr tie handling") {
    ScoredBatch sep;
    sep.labels = {1, 1, 0, 0};
    sep.scores = {0.9, 0.8, 0.2, 0.1};
    CHECK(tpr_at_fpr(sep, 0.01) == 1.0);
    CHECK(tpr_at_fpr(sep, 0.5) == 1.0);

    // 100 negatives and 100 positives all tied: one FP allowed, but any
    // threshold admitting the tie admits all 100 negatives, so TPR is 0.
    ScoredBatch tied;
    for (int i = 0; i < 100; ++i) {
        tied.labels.push_back(1);
        tied.scores.push_back(0.7);
    }
    for (int i = 0; i < 100; ++i) {
        tied.labels.push_back(0);
        tied.scores.push_back(0.7);
    }
    CHECK(tpr_at_fpr(tied, 0.01) == 0.0);
}

TEST_CASE("ranking metrics agree with brute-force oracles exactly") {
    Rng rng = make_rng(20240917);
    for (int trial = 0; trial < 300; ++trial) {
        const bool quantized = trial % 2 == 0;
        const ScoredBatch b = random_batch(rng, 200, quantized);
        CHECK(roc_auc(b) == oracle::auc_pairwise(b));
        CHECK(average_precision(b) == oracle::ap_threshold_sweep(b));
        CHECK(tpr_at_fpr(b, 0.01) == oracle::tpr_at_fpr_sweep(b, 0.01));
        const auto c = confusion(b);
        const auto oc = oracle::confusion_scan(b);
        CHECK(c.tp == oc.tp);
        CHECK(c.fp == oc.fp);
        CHECK(c.tn == oc.tn);
        CHECK(c.fn == oc.fn);
    }
}

TEST_CASE("ranking metrics are invariant under strictly increasing transforms") {
    Rng rng = make_rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const ScoredBatch b = random_batch(rng, 120, true);
        ScoredBatch t = b;
        for (double& s : t.scores) s = std::exp(s);
        CHECK(roc_auc(b) == roc_auc(t));
        CHECK(average_precision(b) == average_precision(t));
        CHECK(tpr_at_fpr(b, 0.01) == tpr_at_fpr(t, 0.01));
    }
}

TEST_CASE("auc symmetry under label flip and score negation") {
    Rng rng = make_rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const ScoredBatch b = random_batch(rng, 120, true);
        ScoredBatch f = b;
        for (auto& y : f.labels) y = 1 - y;
        for (auto& s : f.scores) s = -s;
        CHECK(roc_auc(b) == roc_auc(f));
    }
}

TEST_CASE("all metrics stay in [0,1]") {
    Rng rng = make_rng(4242);
    for (int trial = 0; trial < 100; ++trial) {
        const ScoredBatch b = random_batch(rng, 64, trial % 2 == 1);
        const MetricRow m = compute_metrics(b);
        for (double v : {m.f1, m.accuracy, m.ap, m.auc, m.tpr_at_1fpr}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("percent formatting for tables") {
    CHECK(format_percent(0.942) == "94.2");
    CHECK(format_percent(1.0) == "100.0");
    CHECK(format_percent(2.0 / 3.0) == "66.7");
}
