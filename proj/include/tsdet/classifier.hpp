#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tsdet/dataio.hpp"
#include "tsdet/dire.hpp"
#include "tsdet/nn.hpp"

namespace tsdet {

/// Raw-signal binary detector (sigmoid head). Trained on real windows
/// against samples of a single reference generator; needs no generator
/// access at inference time.
struct ClassifierModel {
    std::string name;
    Architecture arch;
    ParamSet params;
    std::string reference_generator;
    std::string dataset_id;
};

struct DisjointCnnHyper {
    int kernel = 5;
    int filters = 32;
    int blocks = 2;
};

/// blocks x [temporal conv -> channel-mixing conv -> relu], then global mean
/// pool over time, dense head, sigmoid.
Architecture build_disjoint_cnn(int length, int channels, DisjointCnnHyper hyper);

Architecture build_mlp(int length, int channels, int hidden = 64);
Architecture build_fcn(int length, int channels, int filters = 32, int kernel = 7);

/// Batch-sum binary cross-entropy; predictions clipped to [1e-7, 1 - 1e-7].
double bce_loss(std::span<const double> labels, std::span<const double> predictions);

struct ClassifierHyper {
    int batch = 64;
    int epochs = 30;
    double lr = 1e-3;
    double val_fraction = 0.1;
};

struct TrainReport {
    std::vector<double> epoch_loss;
    double validation_f1 = 0.0;
    std::uint64_t seed = 0;
    ClassifierHyper hyper;
};

/// Labels are fixed by contract: real -> 0, synthetic -> 1. Batches are
/// drawn 50/50 from each class; window lists are canonically ordered before
/// the seeded shuffle so storage order cannot change the result.
std::pair<ClassifierModel, TrainReport> train_blackbox(const std::vector<Window>& real_windows,
                                                       const std::vector<Window>& synth_windows,
                                                       Architecture arch, ClassifierHyper hyper,
                                                       std::uint64_t seed,
                                                       const std::string& name = "classifier");

Prediction classify(const ClassifierModel& model, const Window& window);
std::vector<Prediction> classify_batch(const ClassifierModel& model,
                                       const std::vector<Window>& windows);

void save_classifier(const ClassifierModel& model, const std::string& dir);
ClassifierModel load_classifier(const std::string& dir);

/// window_id, source, probability, label
void write_classifier_scores_csv(const ClassifierModel& model, const std::vector<Window>& windows,
                                 const std::string& path);

}  // namespace tsdet
