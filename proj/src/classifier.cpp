#include "tsdet/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <tuple>

#include <nlohmann/json.hpp>

#include "tsdet/metrics.hpp"
#include "tsdet/rng.hpp"

namespace tsdet {

namespace {

constexpr double kClip = 1e-7;

double clip_probability(double p) { return std::min(std::max(p, kClip), 1.0 - kClip); }

std::vector<const Window*> canonical_order(const std::vector<Window>& windows) {
    std::vector<const Window*> ptrs;
    ptrs.reserve(windows.size());
    for (const auto& w : windows) ptrs.push_back(&w);
    std::sort(ptrs.begin(), ptrs.end(), [](const Window* a, const Window* b) {
        return std::tie(a->dataset_id, a->source.generator, a->id) <
               std::tie(b->dataset_id, b->source.generator, b->id);
    });
    return ptrs;
}

}  // namespace

Architecture build_disjoint_cnn(int length, int channels, DisjointCnnHyper hyper) {
    if (hyper.kernel > length)
        throw std::invalid_argument("build_disjoint_cnn: kernel exceeds window length");
    if (hyper.filters < 1 || hyper.blocks < 1)
        throw std::invalid_argument("build_disjoint_cnn: filters and blocks must be >= 1");
    std::vector<LayerSpec> layers;
    int features = 1;
    for (int b = 0; b < hyper.blocks; ++b) {
        layers.push_back(LayerSpec::conv_temporal(features, hyper.filters, hyper.kernel));
        layers.push_back(LayerSpec::conv_channel(hyper.filters, hyper.filters));
        layers.push_back(LayerSpec::activation(Act::Relu));
        features = hyper.filters;
    }
    layers.push_back(LayerSpec::global_mean_pool());
    layers.push_back(LayerSpec::dense(features, 1));
    layers.push_back(LayerSpec::activation(Act::Sigmoid));
    return Architecture(length, channels, std::move(layers));
}

Architecture build_mlp(int length, int channels, int hidden) {
    std::vector<LayerSpec> layers;
    layers.push_back(LayerSpec::flatten());
    layers.push_back(LayerSpec::dense(length * channels, hidden));
    layers.push_back(LayerSpec::activation(Act::Relu));
    layers.push_back(LayerSpec::dense(hidden, hidden));
    layers.push_back(LayerSpec::activation(Act::Relu));
    layers.push_back(LayerSpec::dense(hidden, 1));
    layers.push_back(LayerSpec::activation(Act::Sigmoid));
    return Architecture(length, channels, std::move(layers));
}

Architecture build_fcn(int length, int channels, int filters, int kernel) {
    if (kernel > length) throw std::invalid_argument("build_fcn: kernel exceeds window length");
    std::vector<LayerSpec> layers;
    layers.push_back(LayerSpec::conv_temporal(1, filters, kernel));
    layers.push_back(LayerSpec::activation(Act::Relu));
    layers.push_back(LayerSpec::conv_temporal(filters, filters, std::min(kernel, 5)));
    layers.push_back(LayerSpec::activation(Act::Relu));
    layers.push_back(LayerSpec::conv_temporal(filters, filters, 3));
    layers.push_back(LayerSpec::activation(Act::Relu));
    layers.push_back(LayerSpec::conv_channel(filters, filters));
    layers.push_back(LayerSpec::global_mean_pool());
    layers.push_back(LayerSpec::dense(filters, 1));
    layers.push_back(LayerSpec::activation(Act::Sigmoid));
    return Architecture(length, channels, std::move(layers));
}

double bce_loss(std::span<const double> labels, std::span<const double> predictions) {
    if (labels.size() != predictions.size())
        throw std::invalid_argument("bce_loss: label/prediction length mismatch");
    double loss = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double p = clip_probability(predictions[i]);
        loss -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
    }
    return loss;
}

std::pair<ClassifierModel, TrainReport> train_blackbox(const std::vector<Window>& real_windows,
                                                       const std::vector<Window>& synth_windows,
                                                       Architecture arch, ClassifierHyper hyper,
                                                       std::uint64_t seed,
                                                       const std::string& name) {
    if (real_windows.empty() || synth_windows.empty())
        throw std::invalid_argument("train_blackbox: both classes must be non-empty");
    std::string reference;
    for (const auto& w : synth_windows) {
        if (w.source.is_real())
            throw std::invalid_argument("train_blackbox: real-tagged window in synthetic list");
        if (reference.empty())
            reference = w.source.generator;
        else if (reference != w.source.generator)
            throw std::invalid_argument("train_blackbox: synthetic windows span multiple "
                                        "generators; the detector may only see the reference");
    }
    for (const auto& w : real_windows)
        if (!w.source.is_real())
            throw std::invalid_argument("train_blackbox: generator-tagged window in real list");

    ClassifierModel model;
    model.name = name;
    model.arch = std::move(arch);
    model.params = init_params(model.arch, derive_seed(seed, "classifier-init"));
    model.reference_generator = reference;
    model.dataset_id = real_windows.front().dataset_id;

    auto real_order = canonical_order(real_windows);
    auto synth_order = canonical_order(synth_windows);

    // Carve a held-out tail per class for the report's validation F1.
    const auto carve = [&](std::vector<const Window*>& pool, Rng& rng) {
        shuffle_inplace(pool, rng);
        const std::size_t n_val =
            std::min(pool.size() - 1,
                     static_cast<std::size_t>(std::floor(hyper.val_fraction * pool.size())));
        std::vector<const Window*> val(pool.end() - n_val, pool.end());
        pool.resize(pool.size() - n_val);
        return val;
    };
    Rng split_rng = make_rng(derive_seed(seed, "classifier-val-split"));
    auto real_val = carve(real_order, split_rng);
    auto synth_val = carve(synth_order, split_rng);

    const int half = std::max(1, hyper.batch / 2);
    OptimizerState opt = make_optimizer_state(model.params, AdamConfig{hyper.lr, 0.9, 0.999, 1e-8});
    Rng rng = make_rng(derive_seed(seed, "classifier-train"));

    TrainReport report;
    report.seed = seed;
    report.hyper = hyper;

    const std::size_t batches_per_epoch =
        std::max<std::size_t>(1, std::min(real_order.size(), synth_order.size()) / half);

    auto run_sample = [&](const Window& w, double label, ParamSet& grads, double& loss) {
        Tape tape;
        Tensor3 out = forward(model.arch, model.params, Tensor3::from_matrix(w.values),
                              std::nullopt, &tape);
        const double p = out.v[0];
        const double pc = clip_probability(p);
        loss -= label * std::log(pc) + (1.0 - label) * std::log(1.0 - pc);
        Tensor3 dout(out.shape);
        // Batch-sum loss: no 1/B factor here.
        dout.v[0] = (p > kClip && p < 1.0 - kClip) ? (pc - label) / (pc * (1.0 - pc)) : 0.0;
        ParamSet g = backward(model.arch, model.params, tape, dout);
        for (std::size_t pi = 0; pi < grads.params.size(); ++pi)
            for (std::size_t k = 0; k < grads.params[pi].v.size(); ++k)
                grads.params[pi].v[k] += g.params[pi].v[k];
    };

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        auto real_epoch = real_order;
        auto synth_epoch = synth_order;
        shuffle_inplace(real_epoch, rng);
        shuffle_inplace(synth_epoch, rng);

        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < batches_per_epoch; ++b) {
            ParamSet grads = model.params;
            for (auto& p : grads.params) std::fill(p.v.begin(), p.v.end(), 0.0);
            double batch_loss = 0.0;
            for (int k = 0; k < half; ++k) {
                run_sample(*real_epoch[(b * half + k) % real_epoch.size()], 0.0, grads,
                           batch_loss);
                run_sample(*synth_epoch[(b * half + k) % synth_epoch.size()], 1.0, grads,
                           batch_loss);
            }
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("train_blackbox: diverged (non-finite loss) in epoch " +
                                         std::to_string(epoch));
            adam_step(model.params, grads, opt);
            epoch_loss += batch_loss;
        }
        report.epoch_loss.push_back(epoch_loss);
    }

    // Validation F1 at the 0.5 operating point.
    {
        long tp = 0, fp = 0, fn = 0;
        auto tally = [&](const std::vector<const Window*>& pool, int label) {
            for (const Window* w : pool) {
                const Prediction p = classify(model, *w);
                if (label == 1 && p.label == 1) ++tp;
                if (label == 0 && p.label == 1) ++fp;
                if (label == 1 && p.label == 0) ++fn;
            }
        };
        tally(real_val, 0);
        tally(synth_val, 1);
        report.validation_f1 = tp == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
    }
    return {std::move(model), std::move(report)};
}

Prediction classify(const ClassifierModel& model, const Window& window) {
    Tensor3 out = forward(model.arch, model.params, Tensor3::from_matrix(window.values));
    Prediction pred;
    pred.probability = out.v[0];
    pred.label = pred.probability >= 0.5 ? 1 : 0;
    return pred;
}

std::vector<Prediction> classify_batch(const ClassifierModel& model,
                                       const std::vector<Window>& windows) {
    std::vector<Prediction> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(classify(model, w));
    return out;
}

void save_classifier(const ClassifierModel& model, const std::string& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json hyper;
    hyper["name"] = model.name;
    hyper["reference_generator_id"] = model.reference_generator;
    hyper["dataset_id"] = model.dataset_id;
    save_checkpoint(model.arch, model.params, dir + "/model", hyper.dump());
}

ClassifierModel load_classifier(const std::string& dir) {
    ClassifierModel model;
    std::string hyper_json;
    load_checkpoint(dir + "/model", model.arch, model.params, &hyper_json);
    nlohmann::json hyper = nlohmann::json::parse(hyper_json);
    model.name = hyper.at("name").get<std::string>();
    model.reference_generator = hyper.at("reference_generator_id").get<std::string>();
    model.dataset_id = hyper.value("dataset_id", "");
    return model;
}

void write_classifier_scores_csv(const ClassifierModel& model, const std::vector<Window>& windows,
                                 const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_classifier_scores_csv: cannot write " + path);
    out << "window_id,source,probability,label\n";
    out.precision(17);
    for (const auto& w : windows) {
        const Prediction p = classify(model, w);
        out << w.id << "," << w.source.label() << "," << p.probability << "," << p.label << "\n";
    }
}

}  // namespace tsdet
