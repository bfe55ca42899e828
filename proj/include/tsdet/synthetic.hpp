#pragma once

#include <cstdint>
#include <string>

#include "tsdet/dataio.hpp"

namespace tsdet {

/// Desk-scale multichannel process: channel-mixed random-phase sinusoids
/// plus per-channel AR(1) noise. Small enough to train a generator zoo on
/// one core, structured enough that cross-channel correlation is non-trivial.
struct DeskDataConfig {
    int length = 16384;
    int channels = 3;
    int sinusoids = 4;
    double noise_scale = 0.35;
    double ar_coeff = 0.7;
    std::uint64_t seed = 1;
};

MultivariateSeries make_desk_series(const DeskDataConfig& config);

void write_series_csv(const MultivariateSeries& series, const std::string& path);

}  // namespace tsdet
