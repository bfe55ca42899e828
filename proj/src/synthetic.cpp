#include "tsdet/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "tsdet/rng.hpp"

namespace tsdet {

MultivariateSeries make_desk_series(const DeskDataConfig& config) {
    if (config.length < 2 || config.channels < 1 || config.sinusoids < 1)
        throw std::invalid_argument("make_desk_series: invalid configuration");

    Rng rng = make_rng(derive_seed(config.seed, "desk-data"));
    const int C = config.channels;
    const int J = config.sinusoids;

    // Latent sinusoid bank shared across channels through a random mixing
    // matrix, so channels end up correlated.
    std::vector<double> freq(J), phase(J), amp(J);
    for (int j = 0; j < J; ++j) {
        freq[j] = uniform_real(rng, 0.01, 0.15);  // cycles per step
        phase[j] = uniform_real(rng, 0.0, 2.0 * M_PI);
        amp[j] = uniform_real(rng, 0.5, 1.5);
    }
    std::vector<double> mix(static_cast<std::size_t>(C) * J);
    for (double& m : mix) m = gaussian(rng, 0.0, 1.0 / std::sqrt(static_cast<double>(J)));

    MultivariateSeries series;
    series.values = Matrix(config.length, C);
    for (int c = 0; c < C; ++c) series.channel_names.push_back("c" + std::to_string(c));

    std::vector<double> ar(C, 0.0);
    for (int t = 0; t < config.length; ++t) {
        for (int c = 0; c < C; ++c) {
            double x = 0.0;
            for (int j = 0; j < J; ++j)
                x += mix[static_cast<std::size_t>(c) * J + j] * amp[j] *
                     std::sin(2.0 * M_PI * freq[j] * t + phase[j]);
            ar[c] = config.ar_coeff * ar[c] + gaussian(rng, 0.0, config.noise_scale);
            series.values.at(t, c) = x + ar[c];
        }
    }
    return series;
}

void write_series_csv(const MultivariateSeries& series, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_series_csv: cannot write " + path);
    out.precision(17);
    for (int c = 0; c < series.channels(); ++c)
        out << (c ? "," : "") << series.channel_names[c];
    out << "\n";
    for (int t = 0; t < series.length(); ++t) {
        for (int c = 0; c < series.channels(); ++c)
            out << (c ? "," : "") << series.values.at(t, c);
        out << "\n";
    }
}

}  // namespace tsdet
