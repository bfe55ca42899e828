#include "tsdet/dire.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace tsdet {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double scalar_feature(const DireDetector& d, double scalar_error) {
    // Logistic mode standardizes the score with training statistics so the
    // fixed-iteration fit is well conditioned.
    return (scalar_error - d.feature_mean) / d.feature_scale;
}

}  // namespace

Matrix dire_map(const Matrix& x0, const Matrix& x_hat0) {
    if (!x0.same_shape(x_hat0)) throw std::invalid_argument("dire_map: shape mismatch");
    Matrix out(x0.rows, x0.cols);
    for (std::size_t i = 0; i < out.v.size(); ++i) {
        const double r = x0.v[i] - x_hat0.v[i];
        out.v[i] = r * r;
    }
    return out;
}

double dire_score(const Matrix& error_map, DireAggregation aggregation) {
    if (error_map.v.empty()) throw std::invalid_argument("dire_score: empty map");
    if (aggregation == DireAggregation::Max)
        return *std::max_element(error_map.v.begin(), error_map.v.end());
    double mean = 0.0;
    for (double x : error_map.v) mean += x;
    mean /= static_cast<double>(error_map.v.size());
    if (aggregation == DireAggregation::Mean) return mean;
    return std::log(mean + 1e-12);
}

ReconstructionRecord make_reconstruction_record(const DenoiserModel& model, const StepGrid& grid,
                                                const Window& window,
                                                DireAggregation aggregation) {
    ReconstructionRecord rec;
    rec.x0 = window;
    rec.x_hat0 = reconstruct(model, grid, window.values);
    rec.error_map = dire_map(window.values, rec.x_hat0);
    rec.scalar_error = dire_score(rec.error_map, aggregation);
    return rec;
}

DireDetector fit_dire_detector(const std::vector<ReconstructionRecord>& real_records,
                               const std::vector<ReconstructionRecord>& synth_records,
                               DireMode mode, std::uint64_t seed, DireAggregation aggregation) {
    (void)seed;  // both fits are deterministic; kept for interface stability
    if (real_records.empty() || synth_records.empty())
        throw std::invalid_argument("fit_dire_detector: both classes must be non-empty");

    std::string reference;
    for (const auto& r : synth_records) {
        if (r.x0.source.is_real())
            throw std::invalid_argument("fit_dire_detector: real-tagged window in synthetic list");
        if (reference.empty())
            reference = r.x0.source.generator;
        else if (reference != r.x0.source.generator)
            throw std::invalid_argument(
                "fit_dire_detector: synthetic records span multiple generators");
    }
    for (const auto& r : real_records)
        if (!r.x0.source.is_real())
            throw std::invalid_argument("fit_dire_detector: generator-tagged window in real list");

    std::vector<double> scores;
    std::vector<int> labels;  // 1 = synthetic
    for (const auto& r : synth_records) {
        scores.push_back(r.scalar_error);
        labels.push_back(1);
    }
    for (const auto& r : real_records) {
        scores.push_back(r.scalar_error);
        labels.push_back(0);
    }

    DireDetector det;
    det.mode = mode;
    det.aggregation = aggregation;
    det.reference_generator = reference;

    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= static_cast<double>(scores.size());
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    var /= static_cast<double>(scores.size());
    const double stddev = std::sqrt(var);
    det.feature_mean = mean;
    det.feature_scale = stddev > 1e-12 ? stddev : 1.0;
    det.squash_scale = det.feature_scale;

    if (mode == DireMode::Threshold) {
        // Candidate cuts sit between consecutive unique scores so the chosen
        // tau never coincides with a training score.
        std::vector<double> uniq = scores;
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        std::vector<double> candidates;
        candidates.push_back(uniq.front() - 1.0);
        for (std::size_t i = 0; i + 1 < uniq.size(); ++i)
            candidates.push_back((uniq[i] + uniq[i + 1]) / 2.0);
        candidates.push_back(uniq.back() + 1.0);

        double best_f1 = -1.0;
        double best_tau = candidates.front();
        for (double tau : candidates) {
            long tp = 0, fp = 0, fn = 0;
            for (std::size_t i = 0; i < scores.size(); ++i) {
                const bool predicted_synth = scores[i] <= tau;
                if (labels[i] == 1 && predicted_synth) ++tp;
                if (labels[i] == 0 && predicted_synth) ++fp;
                if (labels[i] == 1 && !predicted_synth) ++fn;
            }
            const double f1 = tp == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
            if (f1 > best_f1) {
                best_f1 = f1;
                best_tau = tau;
            }
        }
        det.tau = best_tau;
    } else {
        // Single-feature logistic regression, deterministic full-batch
        // projected gradient descent from a zero start. The weight is kept
        // non-positive: low reconstruction error votes synthetic, and under
        // generator shift the detector degrades instead of silently
        // flipping its sign.
        double w = 0.0, b = 0.0;
        const double lr = 0.5;
        const int iters = 500;
        const double inv_n = 1.0 / static_cast<double>(scores.size());
        for (int it = 0; it < iters; ++it) {
            double gw = 0.0, gb = 0.0;
            for (std::size_t i = 0; i < scores.size(); ++i) {
                const double z = (scores[i] - det.feature_mean) / det.feature_scale;
                const double p = sigmoid(w * z + b);
                const double d = p - labels[i];
                gw += d * z;
                gb += d;
            }
            w = std::min(0.0, w - lr * gw * inv_n);
            b -= lr * gb * inv_n;
        }
        det.weight = w;
        det.bias = b;
    }
    return det;
}

Prediction dire_predict_score(const DireDetector& detector, double scalar_error) {
    Prediction pred;
    if (detector.mode == DireMode::Threshold) {
        pred.probability = sigmoid((detector.tau - scalar_error) / detector.squash_scale);
    } else {
        pred.probability =
            sigmoid(detector.weight * scalar_feature(detector, scalar_error) + detector.bias);
    }
    pred.label = pred.probability >= detector.operating_threshold ? 1 : 0;
    return pred;
}

Prediction dire_predict(const DireDetector& detector, const ReconstructionRecord& record) {
    return dire_predict_score(detector, record.scalar_error);
}

void save_dire_detector(const DireDetector& detector, const std::string& path) {
    nlohmann::json j;
    j["mode"] = dire_mode_name(detector.mode);
    j["feature"] = dire_aggregation_name(detector.aggregation);
    j["reference_generator_id"] = detector.reference_generator;
    j["tau"] = detector.tau;
    j["squash_scale"] = detector.squash_scale;
    j["weight"] = detector.weight;
    j["bias"] = detector.bias;
    j["feature_mean"] = detector.feature_mean;
    j["feature_scale"] = detector.feature_scale;
    j["operating_threshold"] = detector.operating_threshold;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_dire_detector: cannot write " + path);
    out << j.dump(2) << "\n";
}

DireDetector load_dire_detector(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dire_detector: cannot open " + path);
    nlohmann::json j;
    in >> j;
    DireDetector det;
    det.mode = dire_mode_from_name(j.at("mode").get<std::string>());
    det.aggregation = dire_aggregation_from_name(j.at("feature").get<std::string>());
    det.reference_generator = j.at("reference_generator_id").get<std::string>();
    det.tau = j.at("tau");
    det.squash_scale = j.at("squash_scale");
    det.weight = j.at("weight");
    det.bias = j.at("bias");
    det.feature_mean = j.at("feature_mean");
    det.feature_scale = j.at("feature_scale");
    det.operating_threshold = j.at("operating_threshold");
    return det;
}

void write_dire_scores_csv(const DireDetector& detector,
                           const std::vector<ReconstructionRecord>& records,
                           const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_dire_scores_csv: cannot write " + path);
    out << "window_id,source,scalar_error,probability,label\n";
    out.precision(17);
    for (const auto& r : records) {
        const Prediction p = dire_predict(detector, r);
        out << r.x0.id << "," << r.x0.source.label() << "," << r.scalar_error << ","
            << p.probability << "," << p.label << "\n";
    }
}

std::string dire_aggregation_name(DireAggregation aggregation) {
    switch (aggregation) {
        case DireAggregation::Mean: return "mean";
        case DireAggregation::Max: return "max";
        case DireAggregation::LogMean: return "log_mean";
    }
    throw std::logic_error("unknown aggregation");
}

DireAggregation dire_aggregation_from_name(const std::string& name) {
    if (name == "mean") return DireAggregation::Mean;
    if (name == "max") return DireAggregation::Max;
    if (name == "log_mean") return DireAggregation::LogMean;
    throw std::invalid_argument("unknown aggregation: " + name);
}

std::string dire_mode_name(DireMode mode) {
    return mode == DireMode::Threshold ? "threshold" : "logistic";
}

DireMode dire_mode_from_name(const std::string& name) {
    if (name == "threshold") return DireMode::Threshold;
    if (name == "logistic") return DireMode::Logistic;
    throw std::invalid_argument("unknown detector mode: " + name);
}

}  // namespace tsdet
