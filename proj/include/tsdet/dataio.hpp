#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsdet/matrix.hpp"

namespace tsdet {

struct MultivariateSeries {
    Matrix values;  // rows = time steps, cols = channels
    std::vector<std::string> channel_names;

    int length() const { return values.rows; }
    int channels() const { return values.cols; }
};

/// Origin of a window: real data or a named generator.
struct Provenance {
    std::string generator;  // empty means real

    static Provenance real() { return Provenance{}; }
    static Provenance generated(std::string id) { return Provenance{std::move(id)}; }

    bool is_real() const { return generator.empty(); }
    std::string label() const { return is_real() ? "real" : generator; }
    bool operator==(const Provenance&) const = default;
};

struct Window {
    Matrix values;  // L x C
    Provenance source;
    std::string dataset_id;
    std::uint64_t id = 0;

    int length() const { return values.rows; }
    int channels() const { return values.cols; }
};

enum class NormScheme { MinMax, ZScore };

/// Per-channel location/scale. MinMax maps [min, max] onto [-1, +1]:
/// x' = (x - location) / scale - 1 with scale = (max - min) / 2.
/// ZScore uses mean and population standard deviation: x' = (x - location) / scale.
struct NormStats {
    NormScheme scheme = NormScheme::MinMax;
    std::vector<double> location;
    std::vector<double> scale;

    int channels() const { return static_cast<int>(location.size()); }
};

enum class NormDirection { Forward, Inverse };

MultivariateSeries load_csv(const std::string& path);

std::vector<Window> slide_windows(const MultivariateSeries& series, int length, int stride,
                                  const std::string& dataset_id);

// Caller contract: fit on real training windows only. Constant channels get
// scale 1 so the transform stays invertible.
NormStats fit_normalizer(const std::vector<Window>& windows, NormScheme scheme);

void normalize_inplace(Window& window, const NormStats& stats, NormDirection direction);
std::vector<Window> apply_normalizer(const std::vector<Window>& windows, const NormStats& stats,
                                     NormDirection direction);

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct SplitResult {
    std::vector<Window> train;
    std::vector<Window> val;
    std::vector<Window> test;
};

/// Seeded shuffle + exhaustive disjoint partition. Sizes are rounded so the
/// three parts sum to the input size.
SplitResult split(std::vector<Window> windows, SplitRatios ratios, std::uint64_t seed);

void save_norm_stats(const NormStats& stats, const std::string& path);
NormStats load_norm_stats(const std::string& path);

std::string norm_scheme_name(NormScheme scheme);
NormScheme norm_scheme_from_name(const std::string& name);

}  // namespace tsdet
