#include "tsdet/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "tsdet/rng.hpp"

namespace tsdet {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

std::string strip(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

MultivariateSeries load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file: " + path);

    MultivariateSeries series;
    for (const auto& name : split_fields(line)) series.channel_names.push_back(strip(name));
    const int channels = static_cast<int>(series.channel_names.size());
    if (channels == 0) throw std::runtime_error("load_csv: header has no columns: " + path);

    std::vector<double> values;
    int row_number = 1;  // header is row 1
    int rows = 0;
    while (std::getline(in, line)) {
        ++row_number;
        if (strip(line).empty()) continue;
        auto fields = split_fields(line);
        if (static_cast<int>(fields.size()) != channels)
            throw std::runtime_error("load_csv: row " + std::to_string(row_number) + " has " +
                                     std::to_string(fields.size()) + " fields, expected " +
                                     std::to_string(channels));
        for (const auto& f : fields) {
            const std::string t = strip(f);
            char* end = nullptr;
            double x = std::strtod(t.c_str(), &end);
            if (t.empty() || end != t.c_str() + t.size() || !std::isfinite(x))
                throw std::runtime_error("load_csv: non-numeric field '" + t + "' at row " +
                                         std::to_string(row_number));
            values.push_back(x);
        }
        ++rows;
    }
    if (rows == 0) throw std::runtime_error("load_csv: no data rows: " + path);

    series.values = Matrix(rows, channels);
    series.values.v = std::move(values);
    return series;
}

std::vector<Window> slide_windows(const MultivariateSeries& series, int length, int stride,
                                  const std::string& dataset_id) {
    if (length <= 0 || stride <= 0)
        throw std::invalid_argument("slide_windows: length and stride must be positive");
    if (length > series.length())
        throw std::invalid_argument("slide_windows: window length " + std::to_string(length) +
                                    " exceeds series length " + std::to_string(series.length()));

    const int count = (series.length() - length) / stride + 1;
    std::vector<Window> windows;
    windows.reserve(count);
    for (int w = 0; w < count; ++w) {
        Window win;
        win.values = Matrix(length, series.channels());
        const int offset = w * stride;
        for (int t = 0; t < length; ++t)
            for (int c = 0; c < series.channels(); ++c)
                win.values.at(t, c) = series.values.at(offset + t, c);
        win.source = Provenance::real();
        win.dataset_id = dataset_id;
        win.id = static_cast<std::uint64_t>(w);
        windows.push_back(std::move(win));
    }
    return windows;
}

NormStats fit_normalizer(const std::vector<Window>& windows, NormScheme scheme) {
    if (windows.empty()) throw std::invalid_argument("fit_normalizer: empty window list");
    const int channels = windows.front().channels();

    NormStats stats;
    stats.scheme = scheme;
    stats.location.assign(channels, 0.0);
    stats.scale.assign(channels, 1.0);

    if (scheme == NormScheme::MinMax) {
        std::vector<double> lo(channels, std::numeric_limits<double>::infinity());
        std::vector<double> hi(channels, -std::numeric_limits<double>::infinity());
        for (const auto& w : windows)
            for (int t = 0; t < w.length(); ++t)
                for (int c = 0; c < channels; ++c) {
                    lo[c] = std::min(lo[c], w.values.at(t, c));
                    hi[c] = std::max(hi[c], w.values.at(t, c));
                }
        for (int c = 0; c < channels; ++c) {
            stats.location[c] = lo[c];
            const double half_range = (hi[c] - lo[c]) / 2.0;
            stats.scale[c] = half_range > 0.0 ? half_range : 1.0;
        }
    } else {
        std::vector<double> sum(channels, 0.0), sum_sq(channels, 0.0);
        std::size_t n = 0;
        for (const auto& w : windows) {
            for (int t = 0; t < w.length(); ++t)
                for (int c = 0; c < channels; ++c) {
                    sum[c] += w.values.at(t, c);
                    sum_sq[c] += w.values.at(t, c) * w.values.at(t, c);
                }
            n += static_cast<std::size_t>(w.length());
        }
        for (int c = 0; c < channels; ++c) {
            const double mean = sum[c] / static_cast<double>(n);
            const double var = sum_sq[c] / static_cast<double>(n) - mean * mean;
            stats.location[c] = mean;
            stats.scale[c] = var > 0.0 ? std::sqrt(var) : 1.0;
        }
    }
    return stats;
}

void normalize_inplace(Window& window, const NormStats& stats, NormDirection direction) {
    if (window.channels() != stats.channels())
        throw std::invalid_argument("normalize: window has " + std::to_string(window.channels()) +
                                    " channels, stats expect " + std::to_string(stats.channels()));
    const bool minmax = stats.scheme == NormScheme::MinMax;
    for (int t = 0; t < window.length(); ++t)
        for (int c = 0; c < window.channels(); ++c) {
            double& x = window.values.at(t, c);
            if (direction == NormDirection::Forward) {
                x = (x - stats.location[c]) / stats.scale[c];
                if (minmax) x -= 1.0;
            } else {
                if (minmax) x += 1.0;
                x = x * stats.scale[c] + stats.location[c];
            }
        }
}

std::vector<Window> apply_normalizer(const std::vector<Window>& windows, const NormStats& stats,
                                     NormDirection direction) {
    std::vector<Window> out = windows;
    for (auto& w : out) normalize_inplace(w, stats, direction);
    return out;
}

SplitResult split(std::vector<Window> windows, SplitRatios ratios, std::uint64_t seed) {
    if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0)
        throw std::invalid_argument("split: ratios must be non-negative");
    const double total = ratios.train + ratios.val + ratios.test;
    if (std::abs(total - 1.0) > 1e-9)
        throw std::invalid_argument("split: ratios must sum to 1, got " + std::to_string(total));

    Rng rng = make_rng(derive_seed(seed, "split"));
    shuffle_inplace(windows, rng);

    const std::size_t n = windows.size();
    // Largest-remainder rounding keeps the three sizes summing to n.
    const double exact[3] = {ratios.train * n, ratios.val * n, ratios.test * n};
    std::size_t sizes[3];
    double rema[3];
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        sizes[i] = static_cast<std::size_t>(std::floor(exact[i]));
        rema[i] = exact[i] - static_cast<double>(sizes[i]);
        assigned += sizes[i];
    }
    while (assigned < n) {
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (rema[i] > rema[best]) best = i;
        ++sizes[best];
        rema[best] = -1.0;
        ++assigned;
    }

    SplitResult result;
    auto it = windows.begin();
    result.train.assign(it, it + sizes[0]);
    it += sizes[0];
    result.val.assign(it, it + sizes[1]);
    it += sizes[1];
    result.test.assign(it, it + sizes[2]);
    return result;
}

std::string norm_scheme_name(NormScheme scheme) {
    return scheme == NormScheme::MinMax ? "minmax" : "zscore";
}

NormScheme norm_scheme_from_name(const std::string& name) {
    if (name == "minmax") return NormScheme::MinMax;
    if (name == "zscore") return NormScheme::ZScore;
    throw std::invalid_argument("unknown normalization scheme: " + name);
}

void save_norm_stats(const NormStats& stats, const std::string& path) {
    nlohmann::json j;
    j["scheme"] = norm_scheme_name(stats.scheme);
    j["location"] = stats.location;
    j["scale"] = stats.scale;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_norm_stats: cannot write " + path);
    out << j.dump(2) << "\n";
}

NormStats load_norm_stats(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_norm_stats: cannot open " + path);
    nlohmann::json j;
    in >> j;
    NormStats stats;
    stats.scheme = norm_scheme_from_name(j.at("scheme").get<std::string>());
    stats.location = j.at("location").get<std::vector<double>>();
    stats.scale = j.at("scale").get<std::vector<double>>();
    if (stats.location.size() != stats.scale.size())
        throw std::runtime_error("load_norm_stats: location/scale size mismatch");
    return stats;
}

}  // namespace tsdet
