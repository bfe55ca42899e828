#include "tsdet/quality.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include "tsdet/classifier.hpp"
#include "tsdet/nn.hpp"
#include "tsdet/rng.hpp"

namespace tsdet {

namespace {

// Cross-channel Pearson correlation with channels flattened over all
// windows and time steps. Constant channels get zero correlation rows.
Matrix correlation_matrix(const std::vector<Window>& windows, std::vector<int>& degenerate) {
    const int channels = windows.front().channels();
    std::size_t n = 0;
    std::vector<double> mean(channels, 0.0);
    for (const auto& w : windows) {
        for (int t = 0; t < w.length(); ++t)
            for (int c = 0; c < channels; ++c) mean[c] += w.values.at(t, c);
        n += static_cast<std::size_t>(w.length());
    }
    for (double& m : mean) m /= static_cast<double>(n);

    Matrix cov(channels, channels);
    for (const auto& w : windows)
        for (int t = 0; t < w.length(); ++t)
            for (int a = 0; a < channels; ++a) {
                const double da = w.values.at(t, a) - mean[a];
                for (int b = a; b < channels; ++b)
                    cov.at(a, b) += da * (w.values.at(t, b) - mean[b]);
            }
    for (int a = 0; a < channels; ++a)
        for (int b = a; b < channels; ++b) {
            cov.at(a, b) /= static_cast<double>(n);
            cov.at(b, a) = cov.at(a, b);
        }

    Matrix corr(channels, channels);
    for (int a = 0; a < channels; ++a) {
        if (cov.at(a, a) <= 0.0) degenerate.push_back(a);
    }
    for (int a = 0; a < channels; ++a)
        for (int b = 0; b < channels; ++b) {
            const double denom = std::sqrt(cov.at(a, a) * cov.at(b, b));
            corr.at(a, b) = denom > 0.0 ? cov.at(a, b) / denom : 0.0;
        }
    return corr;
}

}  // namespace

CorrelationalResult correlational_score(const std::vector<Window>& real_windows,
                                        const std::vector<Window>& synth_windows) {
    if (real_windows.empty() || synth_windows.empty())
        throw std::invalid_argument("correlational_score: both sets must be non-empty");
    if (real_windows.front().channels() != synth_windows.front().channels())
        throw std::invalid_argument("correlational_score: channel count mismatch");

    CorrelationalResult result;
    std::vector<int> degen_real, degen_synth;
    const Matrix cr = correlation_matrix(real_windows, degen_real);
    const Matrix cs = correlation_matrix(synth_windows, degen_synth);

    std::set<int> degen(degen_real.begin(), degen_real.end());
    degen.insert(degen_synth.begin(), degen_synth.end());
    result.degenerate_channels.assign(degen.begin(), degen.end());

    const int channels = cr.rows;
    for (int a = 0; a < channels; ++a)
        for (int b = a + 1; b < channels; ++b)
            result.score += std::abs(cr.at(a, b) - cs.at(a, b));
    return result;
}

double discriminative_score(const std::vector<Window>& real_windows,
                            const std::vector<Window>& synth_windows, std::uint64_t seed) {
    if (real_windows.size() < 5 || synth_windows.size() < 5)
        throw std::invalid_argument("discriminative_score: need at least 5 windows per class");

    const int length = real_windows.front().length();
    const int channels = real_windows.front().channels();

    // Seeded 80/20 split per class.
    auto split_set = [&](const std::vector<Window>& pool, std::string_view tag) {
        std::vector<std::size_t> idx(pool.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        Rng rng = make_rng(derive_seed(seed, tag));
        shuffle_inplace(idx, rng);
        const std::size_t n_train = (pool.size() * 4) / 5;
        std::pair<std::vector<Window>, std::vector<Window>> out;
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < n_train ? out.first : out.second).push_back(pool[idx[i]]);
        return out;
    };
    auto [real_train, real_test] = split_set(real_windows, "disc-real");
    auto [synth_train, synth_test] = split_set(synth_windows, "disc-synth");

    // The synthetic class must carry a generator tag for the trainer; the
    // score itself does not care which.
    for (auto& w : synth_train)
        if (w.source.is_real()) w.source = Provenance::generated("quality-synth");

    Architecture arch = build_mlp(length, channels, 32);
    ClassifierHyper hyper;
    hyper.batch = 32;
    hyper.epochs = 20;
    hyper.lr = 1e-3;
    hyper.val_fraction = 0.0;
    auto [model, report] =
        train_blackbox(real_train, synth_train, arch, hyper, derive_seed(seed, "disc-train"),
                       "discriminative");

    long correct = 0, total = 0;
    for (const auto& w : real_test) {
        if (classify(model, w).label == 0) ++correct;
        ++total;
    }
    for (const auto& w : synth_test) {
        if (classify(model, w).label == 1) ++correct;
        ++total;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(total);
    return std::abs(acc - 0.5);
}

double predictive_score(const std::vector<Window>& real_windows,
                        const std::vector<Window>& synth_windows, std::uint64_t seed) {
    if (real_windows.empty() || synth_windows.empty())
        throw std::invalid_argument("predictive_score: both sets must be non-empty");
    const int length = real_windows.front().length();
    const int channels = real_windows.front().channels();
    if (length < 2) throw std::invalid_argument("predictive_score: need windows of length >= 2");

    // Linear forecaster: flattened first L-1 steps -> final step of every
    // channel. Keeping it linear holds the generalization gap small, so the
    // score reflects the synthetic data rather than model overfit.
    Architecture arch(length - 1, channels,
                      {LayerSpec::flatten(),
                       LayerSpec::dense((length - 1) * channels, channels)});
    ParamSet params = init_params(arch, derive_seed(seed, "pred-init"));
    OptimizerState opt = make_optimizer_state(params, AdamConfig{5e-3, 0.9, 0.999, 1e-8});

    auto history_of = [&](const Window& w) {
        Tensor3 x(Shape3{length - 1, channels, 1});
        for (int t = 0; t < length - 1; ++t)
            for (int c = 0; c < channels; ++c) x.at(t, c, 0) = w.values.at(t, c);
        return x;
    };

    // Fixed training budget so scores are comparable across pool sizes.
    Rng rng = make_rng(derive_seed(seed, "pred-train"));
    const int steps = 1500;
    const int batch = 32;
    for (int step = 0; step < steps; ++step) {
        ParamSet grads = params;
        for (auto& p : grads.params) std::fill(p.v.begin(), p.v.end(), 0.0);
        for (int k = 0; k < batch; ++k) {
            const Window& w = synth_windows[uniform_index(rng, synth_windows.size())];
            Tape tape;
            Tensor3 out = forward(arch, params, history_of(w), std::nullopt, &tape);
            Tensor3 dout(out.shape);
            for (int c = 0; c < channels; ++c) {
                const double r = out.at(0, 0, c) - w.values.at(length - 1, c);
                dout.at(0, 0, c) = 2.0 * r / (batch * channels);
            }
            ParamSet g = backward(arch, params, tape, dout);
            for (std::size_t p = 0; p < grads.params.size(); ++p)
                for (std::size_t i = 0; i < grads.params[p].v.size(); ++i)
                    grads.params[p].v[i] += g.params[p].v[i];
        }
        adam_step(params, grads, opt);
    }

    double mae = 0.0;
    for (const auto& w : real_windows) {
        Tensor3 out = forward(arch, params, history_of(w));
        for (int c = 0; c < channels; ++c)
            mae += std::abs(out.at(0, 0, c) - w.values.at(length - 1, c));
    }
    return mae / (static_cast<double>(real_windows.size()) * channels);
}

std::vector<AggregateQuality> aggregate_quality(const std::vector<QualityReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("aggregate_quality: no reports");

    std::vector<std::string> generators, datasets;
    for (const auto& r : reports) {
        if (std::find(generators.begin(), generators.end(), r.generator_id) == generators.end())
            generators.push_back(r.generator_id);
        if (std::find(datasets.begin(), datasets.end(), r.dataset_id) == datasets.end())
            datasets.push_back(r.dataset_id);
    }
    if (datasets.size() < 2)
        throw std::invalid_argument("aggregate_quality: need reports from at least two datasets");

    auto find_report = [&](const std::string& g, const std::string& d) -> const QualityReport& {
        for (const auto& r : reports)
            if (r.generator_id == g && r.dataset_id == d) return r;
        throw std::invalid_argument("aggregate_quality: missing report for generator '" + g +
                                    "' on dataset '" + d + "'");
    };
    auto metric_value = [](const QualityReport& r, int m) {
        return m == 0 ? r.correlational : m == 1 ? r.discriminative : r.predictive;
    };

    std::vector<AggregateQuality> out;
    std::map<std::string, double> sums;
    std::map<std::string, bool> flags;
    for (const auto& g : generators) {
        sums[g] = 0.0;
        flags[g] = false;
    }

    for (int m = 0; m < 3; ++m)
        for (const auto& d : datasets) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -std::numeric_limits<double>::infinity();
            for (const auto& g : generators) {
                const double v = metric_value(find_report(g, d), m);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            for (const auto& g : generators) {
                const double v = metric_value(find_report(g, d), m);
                if (hi > lo) {
                    sums[g] += 1.0 - (v - lo) / (hi - lo);
                } else {
                    sums[g] += 0.5;
                    flags[g] = true;
                }
            }
        }

    const double cells = 3.0 * static_cast<double>(datasets.size());
    for (const auto& g : generators) {
        AggregateQuality aq;
        aq.generator_id = g;
        aq.value = sums[g] / cells;
        aq.degenerate = flags[g];
        out.push_back(aq);
    }
    return out;
}

}  // namespace tsdet
