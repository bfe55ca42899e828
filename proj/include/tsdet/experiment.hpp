#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tsdet/classifier.hpp"
#include "tsdet/dataio.hpp"
#include "tsdet/diffusion.hpp"
#include "tsdet/dire.hpp"
#include "tsdet/metrics.hpp"
#include "tsdet/quality.hpp"
#include "tsdet/synthetic.hpp"

namespace tsdet {

// Orchestration of the full cross-generator protocol: train a zoo of
// diffusion generators on shared splits, fit the white-box and black-box
// detectors against the reference generator only, then score every detector
// on in-distribution and out-of-distribution pools.

struct GeneratorSpec {
    std::string id = "g-star";
    bool reference = false;
    int width = 32;
    int depth = 3;
    int kernel = 5;
    int embed_dim = 16;
    ScheduleKind schedule = ScheduleKind::Linear;
    int T = 100;
    // beta range sized so alpha_bar_{T-1} ~ 5e-5 at T = 100, the terminal
    // signal destruction of the usual 1000-step convention
    double beta_start = 1e-3;
    double beta_end = 0.2;
    int epochs = 30;
    int batch = 16;
    double lr = 1e-3;
    int sample_steps = 50;  // DDIM grid used when this generator samples
    std::uint64_t seed = 1;
};

struct DireSpec {
    DireMode mode = DireMode::Logistic;
    DireAggregation aggregation = DireAggregation::LogMean;
    int grid_steps = 20;
    int train_per_class = 64;
    std::uint64_t seed = 7;
};

struct ClassifierSpec {
    std::string name = "disjoint_cnn";
    std::string arch = "disjoint_cnn";  // disjoint_cnn | mlp | fcn
    int kernel = 5;
    int filters = 32;
    int blocks = 2;
    int hidden = 64;
    int batch = 64;
    int epochs = 30;
    double lr = 1e-3;
    std::uint64_t seed = 11;
};

struct DatasetSpec {
    std::string id = "desk-a";
    std::string path;     // CSV path; when empty the desk series below is used
    DeskDataConfig desk;
};

struct ExperimentConfig {
    std::vector<DatasetSpec> datasets;
    std::vector<int> lengths = {32, 64, 128};
    std::vector<GeneratorSpec> zoo;
    DireSpec dire;
    std::vector<ClassifierSpec> classifiers;
    SplitRatios ratios;
    NormScheme norm = NormScheme::MinMax;
    int eval_per_class = 128;     // balanced test pools, downsampled to this cap
    int quality_per_class = 128;  // windows per class fed to the quality metrics
    std::uint64_t seed = 1;
    std::string out_dir = "runs/desk";

    const GeneratorSpec& reference() const;
};

/// The shipped desk-scale setup: two synthetic datasets, a 4-generator zoo
/// with the first member as reference, DIRE plus three classifier trunks.
ExperimentConfig default_experiment_config();

void validate_config(const ExperimentConfig& config);
ExperimentConfig load_experiment_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const std::string& json_text);

struct MetricTableRow {
    std::string dataset_id;
    int length = 0;
    std::string generator_id;  // pool generator, or "avg" on the OOD average row
    std::string detector_id;
    std::string regime;        // id | ood | ood_avg
    MetricRow metrics;
};

struct DireErrorRow {
    std::string dataset_id;
    int length = 0;
    std::uint64_t window_id = 0;
    std::string source;
    double scalar_error = 0.0;
};

struct ScatterRow {
    std::string generator_id;
    std::string detector_id;
    double aggregate_quality = 0.0;
    double aggregate_detectability = 0.0;
};

struct ExperimentReport {
    std::vector<MetricTableRow> rows;
    std::vector<DireErrorRow> dire_errors;
    std::vector<QualityReport> quality;
    std::vector<AggregateQuality> aggregate;  // empty when fewer than 2 dataset cells
    std::vector<ScatterRow> scatter;
    std::string resolved_config_json;
};

struct GeneratorZoo {
    std::vector<DenoiserModel> models;
    int reference_index = -1;

    const DenoiserModel& reference() const { return models.at(reference_index); }
};

/// Trains every zoo member independently under its own seed and persists the
/// checkpoints under out_dir. train_windows must already be normalized.
GeneratorZoo build_generator_zoo(const ExperimentConfig& config,
                                 const std::vector<Window>& train_windows,
                                 const std::string& dataset_id, int length,
                                 const std::string& out_dir);

/// Scores one window; probability is of the synthetic class.
class Detector {
  public:
    virtual ~Detector() = default;
    virtual const std::string& id() const = 0;
    virtual Prediction score(const Window& window) = 0;
};

struct EvalPool {
    std::string generator_id;
    std::vector<Window> real;
    std::vector<Window> synth;
};

/// Balances each pool by seeded downsampling of the larger class, scores
/// every (detector, pool) pair, and computes the five detection metrics.
std::vector<MetricTableRow> evaluate_detectors(const std::vector<Detector*>& detectors,
                                               const std::vector<EvalPool>& pools,
                                               const std::string& dataset_id, int length,
                                               const std::string& reference_id,
                                               int per_class_cap, std::uint64_t seed);

enum class Stage { Data, Zoo, Detectors, Evaluate, Quality, Report };

std::optional<Stage> stage_from_name(const std::string& name);

ExperimentReport run_experiment(const ExperimentConfig& config,
                                std::optional<Stage> only = std::nullopt);

void emit_report(const ExperimentReport& report, const std::string& out_dir);

}  // namespace tsdet
