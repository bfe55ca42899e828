#pragma once

#include <string>
#include <vector>

namespace tsdet {

/// Parallel label/score lists; label 1 = synthetic = positive, higher score
/// = more synthetic. Hard predictions are optional and only needed for the
/// confusion-based metrics.
struct ScoredBatch {
    std::vector<int> labels;
    std::vector<double> scores;
    std::vector<int> predictions;

    std::size_t size() const { return labels.size(); }
};

struct ConfusionCounts {
    long tp = 0;
    long fp = 0;
    long tn = 0;
    long fn = 0;

    long total() const { return tp + fp + tn + fn; }
};

ConfusionCounts confusion(const ScoredBatch& batch);

struct F1Accuracy {
    double f1 = 0.0;
    double accuracy = 0.0;
};

/// F1 = 2TP / (2TP + FP + FN); the zero-TP degenerate case is 0, never an
/// error.
F1Accuracy f1_accuracy(const ConfusionCounts& counts);

/// Exact Mann-Whitney form: P(s+ > s-) + 0.5 P(s+ = s-) over all
/// positive/negative pairs, computed by rank sums.
double roc_auc(const ScoredBatch& batch);

/// Step-interpolated area under the precision-recall curve; tied scores are
/// grouped at a single threshold.
double average_precision(const ScoredBatch& batch);

/// TPR at the smallest threshold whose FPR stays within the budget
/// (predict positive when score >= threshold; at most floor(budget * N)
/// false positives).
double tpr_at_fpr(const ScoredBatch& batch, double fpr_budget = 0.01);

struct MetricRow {
    double f1 = 0.0;
    double accuracy = 0.0;
    double ap = 0.0;
    double auc = 0.0;
    double tpr_at_1fpr = 0.0;
};

/// All five detection metrics of one scored batch (predictions required).
MetricRow compute_metrics(const ScoredBatch& batch, double fpr_budget = 0.01);

/// "94.2"-style rendering for CLI tables: percent with one decimal.
std::string format_percent(double fraction);

}  // namespace tsdet
