#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsdet/dataio.hpp"
#include "tsdet/diffusion.hpp"
#include "tsdet/matrix.hpp"

namespace tsdet {

/// One window together with its reconstruction under the reference
/// generator and the squared-residual detection cue.
struct ReconstructionRecord {
    Window x0;
    Matrix x_hat0;
    Matrix error_map;      // (x0 - x_hat0)^2 elementwise
    double scalar_error = 0.0;
};

enum class DireAggregation { Mean, Max, LogMean };

Matrix dire_map(const Matrix& x0, const Matrix& x_hat0);

/// Mean / max over the map, or log(mean + 1e-12).
double dire_score(const Matrix& error_map, DireAggregation aggregation);

ReconstructionRecord make_reconstruction_record(const DenoiserModel& model, const StepGrid& grid,
                                                const Window& window,
                                                DireAggregation aggregation);

enum class DireMode { Threshold, Logistic };

/// Error-cue detector. The decision direction is fixed: synthetic samples
/// reconstruct better, so low scalar error votes synthetic. Probabilities
/// are of the synthetic class and ties at the operating point go synthetic.
struct DireDetector {
    DireMode mode = DireMode::Logistic;
    DireAggregation aggregation = DireAggregation::LogMean;
    std::string reference_generator;

    // threshold mode: predict synthetic when scalar_error <= tau; the
    // probability is a monotone squash of (tau - score) / squash_scale.
    double tau = 0.0;
    double squash_scale = 1.0;

    // logistic mode: p = sigmoid(weight * standardized_score + bias)
    double weight = 0.0;
    double bias = 0.0;
    double feature_mean = 0.0;
    double feature_scale = 1.0;

    double operating_threshold = 0.5;
};

DireDetector fit_dire_detector(const std::vector<ReconstructionRecord>& real_records,
                               const std::vector<ReconstructionRecord>& synth_records,
                               DireMode mode, std::uint64_t seed,
                               DireAggregation aggregation = DireAggregation::LogMean);

struct Prediction {
    double probability = 0.0;  // of the synthetic class
    int label = 0;             // 1 = synthetic, 0 = real
};

Prediction dire_predict(const DireDetector& detector, const ReconstructionRecord& record);
Prediction dire_predict_score(const DireDetector& detector, double scalar_error);

void save_dire_detector(const DireDetector& detector, const std::string& path);
DireDetector load_dire_detector(const std::string& path);

/// window_id, source, scalar_error, probability, label
void write_dire_scores_csv(const DireDetector& detector,
                           const std::vector<ReconstructionRecord>& records,
                           const std::string& path);

std::string dire_aggregation_name(DireAggregation aggregation);
DireAggregation dire_aggregation_from_name(const std::string& name);
std::string dire_mode_name(DireMode mode);
DireMode dire_mode_from_name(const std::string& name);

}  // namespace tsdet
