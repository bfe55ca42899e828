#include "tsdet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace tsdet {

namespace {

void validate_batch(const ScoredBatch& batch, bool need_both_classes) {
    if (batch.labels.empty()) throw std::invalid_argument("metrics: empty batch");
    if (batch.labels.size() != batch.scores.size())
        throw std::invalid_argument("metrics: label/score length mismatch");
    long pos = 0, neg = 0;
    for (int y : batch.labels) {
        if (y != 0 && y != 1) throw std::invalid_argument("metrics: labels must be 0 or 1");
        (y == 1 ? pos : neg) += 1;
    }
    if (need_both_classes && (pos == 0 || neg == 0))
        throw std::invalid_argument("metrics: ranking metrics need both classes present");
}

// Indices sorted by descending score; equal scores form one tie group.
std::vector<std::size_t> descending_order(const std::vector<double>& scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

}  // namespace

ConfusionCounts confusion(const ScoredBatch& batch) {
    validate_batch(batch, false);
    if (batch.predictions.size() != batch.labels.size())
        throw std::invalid_argument("confusion: predictions missing");
    ConfusionCounts c;
    for (std::size_t i = 0; i < batch.labels.size(); ++i) {
        const int y = batch.labels[i];
        const int yhat = batch.predictions[i];
        if (yhat != 0 && yhat != 1)
            throw std::invalid_argument("confusion: predictions must be 0 or 1");
        if (y == 1 && yhat == 1) ++c.tp;
        else if (y == 0 && yhat == 1) ++c.fp;
        else if (y == 0 && yhat == 0) ++c.tn;
        else ++c.fn;
    }
    return c;
}

F1Accuracy f1_accuracy(const ConfusionCounts& c) {
    F1Accuracy out;
    out.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    out.f1 = c.tp == 0 ? 0.0
                       : 2.0 * static_cast<double>(c.tp) /
                             static_cast<double>(2 * c.tp + c.fp + c.fn);
    return out;
}

double roc_auc(const ScoredBatch& batch) {
    validate_batch(batch, true);
    const std::size_t n = batch.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return batch.scores[a] < batch.scores[b]; });

    // Rank sum of positives with average ranks over tie groups; halves are
    // exact in binary, so this matches pairwise counting bit for bit.
    double rank_sum_pos = 0.0;
    long n_pos = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && batch.scores[order[j]] == batch.scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (batch.labels[order[k]] == 1) rank_sum_pos += avg_rank;
        i = j;
    }
    for (int y : batch.labels) n_pos += y;
    const long n_neg = static_cast<long>(n) - n_pos;
    const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double average_precision(const ScoredBatch& batch) {
    validate_batch(batch, false);
    long n_pos = 0;
    for (int y : batch.labels) n_pos += y;
    if (n_pos == 0) throw std::invalid_argument("average_precision: no positives");

    const auto order = descending_order(batch.scores);
    double ap = 0.0;
    double prev_recall = 0.0;
    long tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && batch.scores[order[j]] == batch.scores[order[i]]) ++j;
        for (std::size_t k = i; k < j; ++k) {
            if (batch.labels[order[k]] == 1) ++tp;
            else ++fp;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

double tpr_at_fpr(const ScoredBatch& batch, double fpr_budget) {
    validate_batch(batch, true);
    long n_pos = 0;
    for (int y : batch.labels) n_pos += y;
    const long n_neg = static_cast<long>(batch.size()) - n_pos;
    const long max_fp = static_cast<long>(std::floor(fpr_budget * static_cast<double>(n_neg)));

    const auto order = descending_order(batch.scores);
    // Lowering the threshold only adds predictions, so the deepest prefix of
    // tie groups with FP within budget carries the highest TPR.
    long tp = 0, fp = 0;
    long best_tp = 0;  // threshold above all scores is always admissible
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && batch.scores[order[j]] == batch.scores[order[i]]) ++j;
        for (std::size_t k = i; k < j; ++k) {
            if (batch.labels[order[k]] == 1) ++tp;
            else ++fp;
        }
        if (fp <= max_fp) best_tp = tp;
        i = j;
    }
    return static_cast<double>(best_tp) / static_cast<double>(n_pos);
}

MetricRow compute_metrics(const ScoredBatch& batch, double fpr_budget) {
    MetricRow row;
    const auto fa = f1_accuracy(confusion(batch));
    row.f1 = fa.f1;
    row.accuracy = fa.accuracy;
    row.ap = average_precision(batch);
    row.auc = roc_auc(batch);
    row.tpr_at_1fpr = tpr_at_fpr(batch, fpr_budget);
    return row;
}

std::string format_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", fraction * 100.0);
    return buf;
}

}  // namespace tsdet
