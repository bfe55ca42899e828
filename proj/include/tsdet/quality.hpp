#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsdet/dataio.hpp"

namespace tsdet {

// Synthetic-data quality scores; lower values mean higher quality for all
// three metrics.

struct CorrelationalResult {
    double score = 0.0;
    std::vector<int> degenerate_channels;  // constant channels, correlations taken as 0
};

/// Sum of absolute differences between the two sets' cross-channel
/// correlation matrices over the strict upper triangle.
CorrelationalResult correlational_score(const std::vector<Window>& real_windows,
                                        const std::vector<Window>& synth_windows);

/// |test accuracy - 0.5| of a small fixed MLP trained to tell the sets
/// apart (seeded 80/20 split). Near 0 means indistinguishable.
double discriminative_score(const std::vector<Window>& real_windows,
                            const std::vector<Window>& synth_windows, std::uint64_t seed);

/// MAE of a last-step forecaster trained on synthetic windows and evaluated
/// on real ones, averaged over channels.
double predictive_score(const std::vector<Window>& real_windows,
                        const std::vector<Window>& synth_windows, std::uint64_t seed);

struct QualityReport {
    std::string dataset_id;
    std::string generator_id;
    double correlational = 0.0;
    double discriminative = 0.0;
    double predictive = 0.0;
    std::uint64_t seed = 0;
};

struct AggregateQuality {
    std::string generator_id;
    double value = 0.0;     // in [0, 1], higher = better quality
    bool degenerate = false;  // some (metric, dataset) cell had zero range
};

/// Per (metric, dataset), min-max normalize across generators, invert, then
/// average over metrics and datasets. Zero-range cells count as 0.5 and are
/// flagged. Needs reports covering at least two datasets.
std::vector<AggregateQuality> aggregate_quality(const std::vector<QualityReport>& reports);

}  // namespace tsdet
