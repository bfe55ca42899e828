#include "tsdet/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <nlohmann/json.hpp>

#include "tsdet/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tsdet {

namespace {

std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::string cell_tag(const std::string& dataset_id, int length) {
    return dataset_id + "_L" + std::to_string(length);
}

std::string cell_dataset_key(const std::string& dataset_id, int length) {
    return dataset_id + "@L" + std::to_string(length);
}

std::vector<Window> subsample(const std::vector<Window>& pool, std::size_t target,
                              std::uint64_t seed) {
    if (pool.size() <= target) return pool;
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng = make_rng(seed);
    shuffle_inplace(idx, rng);
    idx.resize(target);
    std::sort(idx.begin(), idx.end());
    std::vector<Window> out;
    out.reserve(target);
    for (std::size_t i : idx) out.push_back(pool[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Config JSON

json generator_to_json(const GeneratorSpec& g) {
    return json{{"id", g.id},
                {"reference", g.reference},
                {"width", g.width},
                {"depth", g.depth},
                {"kernel", g.kernel},
                {"embed_dim", g.embed_dim},
                {"schedule", schedule_kind_name(g.schedule)},
                {"T", g.T},
                {"beta_start", g.beta_start},
                {"beta_end", g.beta_end},
                {"epochs", g.epochs},
                {"batch", g.batch},
                {"lr", g.lr},
                {"sample_steps", g.sample_steps},
                {"seed", g.seed}};
}

GeneratorSpec generator_from_json(const json& j) {
    GeneratorSpec g;
    g.id = j.value("id", g.id);
    g.reference = j.value("reference", g.reference);
    g.width = j.value("width", g.width);
    g.depth = j.value("depth", g.depth);
    g.kernel = j.value("kernel", g.kernel);
    g.embed_dim = j.value("embed_dim", g.embed_dim);
    g.schedule = schedule_kind_from_name(j.value("schedule", schedule_kind_name(g.schedule)));
    g.T = j.value("T", g.T);
    g.beta_start = j.value("beta_start", g.beta_start);
    g.beta_end = j.value("beta_end", g.beta_end);
    g.epochs = j.value("epochs", g.epochs);
    g.batch = j.value("batch", g.batch);
    g.lr = j.value("lr", g.lr);
    g.sample_steps = j.value("sample_steps", g.sample_steps);
    g.seed = j.value("seed", g.seed);
    return g;
}

json classifier_to_json(const ClassifierSpec& c) {
    return json{{"name", c.name},     {"arch", c.arch},     {"kernel", c.kernel},
                {"filters", c.filters}, {"blocks", c.blocks}, {"hidden", c.hidden},
                {"batch", c.batch},   {"epochs", c.epochs}, {"lr", c.lr},
                {"seed", c.seed}};
}

ClassifierSpec classifier_from_json(const json& j) {
    ClassifierSpec c;
    c.name = j.value("name", c.name);
    c.arch = j.value("arch", c.arch);
    c.kernel = j.value("kernel", c.kernel);
    c.filters = j.value("filters", c.filters);
    c.blocks = j.value("blocks", c.blocks);
    c.hidden = j.value("hidden", c.hidden);
    c.batch = j.value("batch", c.batch);
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.seed = j.value("seed", c.seed);
    return c;
}

json dataset_to_json(const DatasetSpec& d) {
    return json{{"id", d.id},
                {"path", d.path},
                {"desk",
                 json{{"length", d.desk.length},
                      {"channels", d.desk.channels},
                      {"sinusoids", d.desk.sinusoids},
                      {"noise_scale", d.desk.noise_scale},
                      {"ar_coeff", d.desk.ar_coeff},
                      {"seed", d.desk.seed}}}};
}

DatasetSpec dataset_from_json(const json& j) {
    DatasetSpec d;
    d.id = j.value("id", d.id);
    d.path = j.value("path", d.path);
    if (j.contains("desk")) {
        const json& k = j.at("desk");
        d.desk.length = k.value("length", d.desk.length);
        d.desk.channels = k.value("channels", d.desk.channels);
        d.desk.sinusoids = k.value("sinusoids", d.desk.sinusoids);
        d.desk.noise_scale = k.value("noise_scale", d.desk.noise_scale);
        d.desk.ar_coeff = k.value("ar_coeff", d.desk.ar_coeff);
        d.desk.seed = k.value("seed", d.desk.seed);
    }
    return d;
}

}  // namespace

const GeneratorSpec& ExperimentConfig::reference() const {
    for (const auto& g : zoo)
        if (g.reference) return g;
    throw std::logic_error("ExperimentConfig: no reference generator");
}

ExperimentConfig default_experiment_config() {
    ExperimentConfig cfg;
    cfg.seed = 1;
    cfg.lengths = {32};
    cfg.out_dir = "runs/desk";

    DatasetSpec a;
    a.id = "desk-a";
    a.desk.length = 6144;
    a.desk.noise_scale = 0.45;
    a.desk.ar_coeff = 0.6;
    a.desk.seed = 101;
    DatasetSpec b;
    b.id = "desk-b";
    b.desk.length = 6144;
    b.desk.noise_scale = 0.5;
    b.desk.ar_coeff = 0.5;
    b.desk.seed = 202;
    cfg.datasets = {a, b};

    // The zoo spreads generation quality around the real data's
    // reconstruction level: the reference and gen-c sample on fine grids,
    // gen-b is smaller and coarser, gen-d uses the other schedule family.
    GeneratorSpec gstar;
    gstar.id = "g-star";
    gstar.reference = true;
    gstar.width = 32;
    gstar.depth = 3;
    gstar.schedule = ScheduleKind::Linear;
    gstar.T = 200;
    gstar.beta_start = 5e-4;
    gstar.beta_end = 0.1;
    gstar.epochs = 30;
    gstar.sample_steps = 50;
    gstar.seed = 1;

    GeneratorSpec gb;
    gb.id = "gen-b";
    gb.width = 20;
    gb.depth = 2;
    gb.schedule = ScheduleKind::Linear;
    gb.T = 200;
    gb.beta_start = 5e-4;
    gb.beta_end = 0.1;
    gb.epochs = 25;
    gb.sample_steps = 30;
    gb.seed = 2;

    GeneratorSpec gc;
    gc.id = "gen-c";
    gc.width = 48;
    gc.depth = 3;
    gc.schedule = ScheduleKind::Linear;
    gc.T = 200;
    gc.beta_start = 5e-4;
    gc.beta_end = 0.1;
    gc.epochs = 60;
    gc.sample_steps = 50;
    gc.seed = 3;

    GeneratorSpec gd;
    gd.id = "gen-d";
    gd.width = 40;
    gd.depth = 3;
    gd.schedule = ScheduleKind::Cosine;
    gd.T = 100;
    gd.epochs = 40;
    gd.sample_steps = 20;
    gd.seed = 4;

    cfg.zoo = {gstar, gb, gc, gd};

    ClassifierSpec dcnn;
    dcnn.name = "disjoint_cnn";
    dcnn.arch = "disjoint_cnn";
    dcnn.seed = 11;
    ClassifierSpec mlp;
    mlp.name = "mlp";
    mlp.arch = "mlp";
    mlp.seed = 12;
    ClassifierSpec fcn;
    fcn.name = "fcn";
    fcn.arch = "fcn";
    fcn.seed = 13;
    cfg.classifiers = {dcnn, mlp, fcn};
    return cfg;
}

void validate_config(const ExperimentConfig& config) {
    if (config.datasets.empty()) throw std::invalid_argument("config: no datasets");
    if (config.lengths.empty()) throw std::invalid_argument("config: no window lengths");
    if (config.zoo.empty()) throw std::invalid_argument("config: empty generator zoo");
    int refs = 0;
    std::set<std::string> ids;
    for (const auto& g : config.zoo) {
        if (g.reference) ++refs;
        if (!ids.insert(g.id).second)
            throw std::invalid_argument("config: duplicate generator id '" + g.id + "'");
    }
    if (refs != 1)
        throw std::invalid_argument("config: exactly one generator must be marked reference, got " +
                                    std::to_string(refs));
    std::set<std::string> ds_ids;
    for (const auto& d : config.datasets)
        if (!ds_ids.insert(d.id).second)
            throw std::invalid_argument("config: duplicate dataset id '" + d.id + "'");
    std::set<std::string> det_ids{"dire"};
    for (const auto& c : config.classifiers) {
        if (!det_ids.insert(c.name).second)
            throw std::invalid_argument("config: duplicate detector name '" + c.name + "'");
        if (c.arch != "disjoint_cnn" && c.arch != "mlp" && c.arch != "fcn")
            throw std::invalid_argument("config: unknown classifier arch '" + c.arch + "'");
    }
    if (config.eval_per_class < 2) throw std::invalid_argument("config: eval_per_class too small");
}

std::string config_to_json(const ExperimentConfig& config) {
    json j;
    j["seed"] = config.seed;
    j["out_dir"] = config.out_dir;
    j["lengths"] = config.lengths;
    j["norm"] = norm_scheme_name(config.norm);
    j["ratios"] = {{"train", config.ratios.train},
                   {"val", config.ratios.val},
                   {"test", config.ratios.test}};
    j["eval_per_class"] = config.eval_per_class;
    j["quality_per_class"] = config.quality_per_class;
    j["datasets"] = json::array();
    for (const auto& d : config.datasets) j["datasets"].push_back(dataset_to_json(d));
    j["zoo"] = json::array();
    for (const auto& g : config.zoo) j["zoo"].push_back(generator_to_json(g));
    j["dire"] = {{"mode", dire_mode_name(config.dire.mode)},
                 {"feature", dire_aggregation_name(config.dire.aggregation)},
                 {"grid_steps", config.dire.grid_steps},
                 {"train_per_class", config.dire.train_per_class},
                 {"seed", config.dire.seed}};
    j["classifiers"] = json::array();
    for (const auto& c : config.classifiers) j["classifiers"].push_back(classifier_to_json(c));
    return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& json_text) {
    const json j = json::parse(json_text);
    ExperimentConfig cfg = default_experiment_config();
    cfg.seed = j.value("seed", cfg.seed);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    if (j.contains("lengths")) cfg.lengths = j.at("lengths").get<std::vector<int>>();
    cfg.norm = norm_scheme_from_name(j.value("norm", norm_scheme_name(cfg.norm)));
    if (j.contains("ratios")) {
        cfg.ratios.train = j.at("ratios").value("train", cfg.ratios.train);
        cfg.ratios.val = j.at("ratios").value("val", cfg.ratios.val);
        cfg.ratios.test = j.at("ratios").value("test", cfg.ratios.test);
    }
    cfg.eval_per_class = j.value("eval_per_class", cfg.eval_per_class);
    cfg.quality_per_class = j.value("quality_per_class", cfg.quality_per_class);
    if (j.contains("datasets")) {
        cfg.datasets.clear();
        for (const auto& d : j.at("datasets")) cfg.datasets.push_back(dataset_from_json(d));
    }
    if (j.contains("zoo")) {
        cfg.zoo.clear();
        for (const auto& g : j.at("zoo")) cfg.zoo.push_back(generator_from_json(g));
    }
    if (j.contains("dire")) {
        const json& d = j.at("dire");
        cfg.dire.mode = dire_mode_from_name(d.value("mode", dire_mode_name(cfg.dire.mode)));
        cfg.dire.aggregation = dire_aggregation_from_name(
            d.value("feature", dire_aggregation_name(cfg.dire.aggregation)));
        cfg.dire.grid_steps = d.value("grid_steps", cfg.dire.grid_steps);
        cfg.dire.train_per_class = d.value("train_per_class", cfg.dire.train_per_class);
        cfg.dire.seed = d.value("seed", cfg.dire.seed);
    }
    if (j.contains("classifiers")) {
        cfg.classifiers.clear();
        for (const auto& c : j.at("classifiers")) cfg.classifiers.push_back(classifier_from_json(c));
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

// ---------------------------------------------------------------------------
// Zoo

namespace {

std::string zoo_dir(const std::string& out_dir, const std::string& dataset_id, int length,
                    const std::string& generator_id) {
    return out_dir + "/generators/" + cell_tag(dataset_id, length) + "/" + generator_id;
}

std::string detector_root(const std::string& out_dir, const std::string& dataset_id, int length) {
    return out_dir + "/detectors/" + cell_tag(dataset_id, length);
}

Architecture arch_for_generator(const GeneratorSpec& g, int length, int channels) {
    return make_denoiser_arch(length, channels, g.width, g.depth, g.kernel, g.embed_dim);
}

Architecture arch_for_classifier(const ClassifierSpec& c, int length, int channels) {
    if (c.arch == "disjoint_cnn")
        return build_disjoint_cnn(length, channels, DisjointCnnHyper{c.kernel, c.filters, c.blocks});
    if (c.arch == "mlp") return build_mlp(length, channels, c.hidden);
    return build_fcn(length, channels, c.filters, c.kernel);
}

// Seeds for a generator depend only on its own spec plus the cell identity,
// never on the rest of the zoo; this is what makes the isolation audit hold.
std::uint64_t generator_seed(const ExperimentConfig& cfg, const GeneratorSpec& g,
                             const std::string& dataset_id, int length, const std::string& role) {
    return derive_seed(cfg.seed, role + "|" + g.id + "|" + cell_tag(dataset_id, length), g.seed);
}

}  // namespace

GeneratorZoo build_generator_zoo(const ExperimentConfig& config,
                                 const std::vector<Window>& train_windows,
                                 const std::string& dataset_id, int length,
                                 const std::string& out_dir) {
    if (config.zoo.size() < 2)
        throw std::invalid_argument("build_generator_zoo: need at least 2 generator configs");
    if (train_windows.empty())
        throw std::invalid_argument("build_generator_zoo: no training windows");
    const int channels = train_windows.front().channels();

    GeneratorZoo zoo;
    for (std::size_t i = 0; i < config.zoo.size(); ++i) {
        const GeneratorSpec& spec = config.zoo[i];
        NoiseSchedule sched =
            make_schedule(spec.schedule, spec.T, spec.beta_start, spec.beta_end);
        DenoiserHyper hyper;
        hyper.batch = spec.batch;
        hyper.steps = spec.epochs *
                      static_cast<int>((train_windows.size() + spec.batch - 1) / spec.batch);
        hyper.lr = spec.lr;
        DenoiserModel model;
        try {
            model = train_denoiser(train_windows, arch_for_generator(spec, length, channels),
                                   std::move(sched), hyper,
                                   generator_seed(config, spec, dataset_id, length, "gen-train"),
                                   spec.id);
        } catch (const std::exception& e) {
            throw std::runtime_error("generator '" + spec.id + "' failed: " + e.what());
        }
        save_denoiser(model, zoo_dir(out_dir, dataset_id, length, spec.id));
        if (spec.reference) zoo.reference_index = static_cast<int>(i);
        zoo.models.push_back(std::move(model));
    }
    return zoo;
}

// ---------------------------------------------------------------------------
// Detector wrappers

namespace {

class DireEvalDetector : public Detector {
  public:
    DireEvalDetector(std::string id, const DenoiserModel* model, StepGrid grid, DireDetector det)
        : id_(std::move(id)), model_(model), grid_(std::move(grid)), det_(std::move(det)) {}

    const std::string& id() const override { return id_; }

    double scalar_error(const Window& window) {
        const Key key{window.source.label(), window.dataset_id, window.id};
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        const auto rec = make_reconstruction_record(*model_, grid_, window, det_.aggregation);
        cache_.emplace(key, rec.scalar_error);
        return rec.scalar_error;
    }

    Prediction score(const Window& window) override {
        return dire_predict_score(det_, scalar_error(window));
    }

    using Key = std::tuple<std::string, std::string, std::uint64_t>;
    const std::map<Key, double>& errors() const { return cache_; }

  private:
    std::string id_;
    const DenoiserModel* model_;
    StepGrid grid_;
    DireDetector det_;
    std::map<Key, double> cache_;
};

class ClassifierEvalDetector : public Detector {
  public:
    explicit ClassifierEvalDetector(const ClassifierModel* model) : model_(model) {}
    const std::string& id() const override { return model_->name; }
    Prediction score(const Window& window) override { return classify(*model_, window); }

  private:
    const ClassifierModel* model_;
};

}  // namespace

std::vector<MetricTableRow> evaluate_detectors(const std::vector<Detector*>& detectors,
                                               const std::vector<EvalPool>& pools,
                                               const std::string& dataset_id, int length,
                                               const std::string& reference_id,
                                               int per_class_cap, std::uint64_t seed) {
    std::vector<MetricTableRow> rows;
    std::map<std::string, std::vector<MetricRow>> ood_rows;  // detector -> rows, config order kept
    std::vector<std::string> detector_order;
    for (Detector* d : detectors) detector_order.push_back(d->id());

    for (const auto& pool : pools) {
        if (pool.real.empty() || pool.synth.empty())
            throw std::invalid_argument("evaluate_detectors: pool '" + pool.generator_id +
                                        "' must contain both classes");
        for (const auto& w : pool.synth)
            if (w.source.generator != pool.generator_id)
                throw std::invalid_argument("evaluate_detectors: pool '" + pool.generator_id +
                                            "' contains foreign synthetic windows");
        const std::size_t target = std::min<std::size_t>(
            {pool.real.size(), pool.synth.size(), static_cast<std::size_t>(per_class_cap)});
        const auto real = subsample(
            pool.real, target,
            derive_seed(seed, "pool-real|" + pool.generator_id + "|" + cell_tag(dataset_id, length)));
        const auto synth = subsample(
            pool.synth, target,
            derive_seed(seed, "pool-synth|" + pool.generator_id + "|" + cell_tag(dataset_id, length)));

        for (Detector* det : detectors) {
            ScoredBatch batch;
            for (const auto& w : real) {
                const Prediction p = det->score(w);
                batch.labels.push_back(0);
                batch.scores.push_back(p.probability);
                batch.predictions.push_back(p.label);
            }
            for (const auto& w : synth) {
                const Prediction p = det->score(w);
                batch.labels.push_back(1);
                batch.scores.push_back(p.probability);
                batch.predictions.push_back(p.label);
            }
            MetricTableRow row;
            row.dataset_id = dataset_id;
            row.length = length;
            row.generator_id = pool.generator_id;
            row.detector_id = det->id();
            row.regime = pool.generator_id == reference_id ? "id" : "ood";
            row.metrics = compute_metrics(batch);
            if (row.regime == "ood") ood_rows[det->id()].push_back(row.metrics);
            rows.push_back(std::move(row));
        }
    }

    for (const auto& det_id : detector_order) {
        const auto it = ood_rows.find(det_id);
        if (it == ood_rows.end() || it->second.empty()) continue;
        MetricTableRow avg;
        avg.dataset_id = dataset_id;
        avg.length = length;
        avg.generator_id = "avg";
        avg.detector_id = det_id;
        avg.regime = "ood_avg";
        const double n = static_cast<double>(it->second.size());
        for (const auto& m : it->second) {
            avg.metrics.f1 += m.f1 / n;
            avg.metrics.accuracy += m.accuracy / n;
            avg.metrics.ap += m.ap / n;
            avg.metrics.auc += m.auc / n;
            avg.metrics.tpr_at_1fpr += m.tpr_at_1fpr / n;
        }
        rows.push_back(std::move(avg));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

struct Cell {
    std::string dataset_id;
    int length = 0;
    NormStats stats;
    SplitResult det_split;            // normalized detector windows
    std::vector<Window> gen_train;    // normalized generator-training windows
};

MultivariateSeries materialize_series(const DatasetSpec& spec) {
    if (!spec.path.empty()) return load_csv(spec.path);
    return make_desk_series(spec.desk);
}

Cell build_cell(const ExperimentConfig& cfg, const MultivariateSeries& series,
                const std::string& dataset_id, int length) {
    Cell cell;
    cell.dataset_id = dataset_id;
    cell.length = length;

    auto gen_windows = slide_windows(series, length, length, dataset_id);
    auto det_windows = slide_windows(series, length, std::max(1, length / 2), dataset_id);

    SplitResult gen_split = split(std::move(gen_windows), cfg.ratios,
                                  derive_seed(cfg.seed, "split-gen|" + cell_tag(dataset_id, length)));
    cell.det_split = split(std::move(det_windows), cfg.ratios,
                           derive_seed(cfg.seed, "split-det|" + cell_tag(dataset_id, length)));

    cell.stats = fit_normalizer(cell.det_split.train, cfg.norm);
    for (auto* part : {&cell.det_split.train, &cell.det_split.val, &cell.det_split.test})
        for (auto& w : *part) normalize_inplace(w, cell.stats, NormDirection::Forward);
    cell.gen_train = std::move(gen_split.train);
    for (auto& w : cell.gen_train) normalize_inplace(w, cell.stats, NormDirection::Forward);
    return cell;
}

GeneratorZoo load_zoo(const ExperimentConfig& cfg, const std::string& dataset_id, int length) {
    GeneratorZoo zoo;
    for (std::size_t i = 0; i < cfg.zoo.size(); ++i) {
        zoo.models.push_back(
            load_denoiser(zoo_dir(cfg.out_dir, dataset_id, length, cfg.zoo[i].id)));
        if (cfg.zoo[i].reference) zoo.reference_index = static_cast<int>(i);
    }
    return zoo;
}

std::vector<Window> generate_pool(const ExperimentConfig& cfg, const GeneratorSpec& spec,
                                  const DenoiserModel& model, int n,
                                  const std::string& dataset_id, int length,
                                  const std::string& role) {
    const StepGrid grid = StepGrid::uniform(model.schedule.T, spec.sample_steps);
    return ddim_generate(model, grid, n,
                         generator_seed(cfg, spec, dataset_id, length, role), dataset_id);
}

struct CellDetectors {
    DireDetector dire;
    StepGrid dire_grid;
    std::vector<ClassifierModel> classifiers;
};

CellDetectors train_detectors(const ExperimentConfig& cfg, const Cell& cell,
                              const GeneratorZoo& zoo) {
    const DenoiserModel& reference = zoo.reference();
    const GeneratorSpec& ref_spec = cfg.reference();
    CellDetectors out;
    out.dire_grid = StepGrid::uniform(reference.schedule.T, cfg.dire.grid_steps);

    // Labeled synthetic training data comes from the reference generator
    // alone; the provenance tags are audited again inside the fitters.
    const auto synth_train =
        generate_pool(cfg, ref_spec, reference,
                      static_cast<int>(cell.det_split.train.size()), cell.dataset_id, cell.length,
                      "samples-train");
    for (const auto& w : synth_train)
        if (w.source.generator != reference.generator_id)
            throw std::logic_error("detector training pool leaked a non-reference sample");

    // White-box detector on reconstruction errors under the reference model.
    {
        const std::size_t per_class = static_cast<std::size_t>(cfg.dire.train_per_class);
        const auto real_sub = subsample(
            cell.det_split.train, per_class,
            derive_seed(cfg.seed, "dire-real|" + cell_tag(cell.dataset_id, cell.length)));
        const auto synth_sub = subsample(
            synth_train, per_class,
            derive_seed(cfg.seed, "dire-synth|" + cell_tag(cell.dataset_id, cell.length)));
        std::vector<ReconstructionRecord> real_records, synth_records;
        for (const auto& w : real_sub)
            real_records.push_back(
                make_reconstruction_record(reference, out.dire_grid, w, cfg.dire.aggregation));
        for (const auto& w : synth_sub)
            synth_records.push_back(
                make_reconstruction_record(reference, out.dire_grid, w, cfg.dire.aggregation));
        out.dire = fit_dire_detector(real_records, synth_records, cfg.dire.mode, cfg.dire.seed,
                                     cfg.dire.aggregation);
        const std::string root = detector_root(cfg.out_dir, cell.dataset_id, cell.length);
        fs::create_directories(root);
        save_dire_detector(out.dire, root + "/dire.json");
    }

    for (const auto& spec : cfg.classifiers) {
        ClassifierHyper hyper;
        hyper.batch = spec.batch;
        hyper.epochs = spec.epochs;
        hyper.lr = spec.lr;
        auto [model, report] = train_blackbox(
            cell.det_split.train, synth_train,
            arch_for_classifier(spec, cell.length, cell.det_split.train.front().channels()), hyper,
            derive_seed(cfg.seed, "classifier|" + spec.name + "|" +
                                      cell_tag(cell.dataset_id, cell.length),
                        spec.seed),
            spec.name);
        (void)report;
        save_classifier(model,
                        detector_root(cfg.out_dir, cell.dataset_id, cell.length) + "/" + spec.name);
        out.classifiers.push_back(std::move(model));
    }
    return out;
}

CellDetectors load_detectors(const ExperimentConfig& cfg, const Cell& cell,
                             const GeneratorZoo& zoo) {
    CellDetectors out;
    const std::string root = detector_root(cfg.out_dir, cell.dataset_id, cell.length);
    out.dire = load_dire_detector(root + "/dire.json");
    out.dire_grid = StepGrid::uniform(zoo.reference().schedule.T, cfg.dire.grid_steps);
    for (const auto& spec : cfg.classifiers)
        out.classifiers.push_back(load_classifier(root + "/" + spec.name));
    return out;
}

void write_metrics_files(const std::vector<MetricTableRow>& rows, const std::string& out_dir) {
    std::ofstream csv(out_dir + "/metrics.csv");
    if (!csv) throw std::runtime_error("cannot write metrics.csv");
    csv << "dataset,length,generator,detector,regime,f1,accuracy,ap,auc,tpr_at_1fpr\n";
    for (const auto& r : rows)
        csv << r.dataset_id << "," << r.length << "," << r.generator_id << "," << r.detector_id
            << "," << r.regime << "," << fmt_double(r.metrics.f1) << ","
            << fmt_double(r.metrics.accuracy) << "," << fmt_double(r.metrics.ap) << ","
            << fmt_double(r.metrics.auc) << "," << fmt_double(r.metrics.tpr_at_1fpr) << "\n";

    json j;
    j["rows"] = json::array();
    for (const auto& r : rows)
        j["rows"].push_back({{"dataset", r.dataset_id},
                             {"length", r.length},
                             {"generator", r.generator_id},
                             {"detector", r.detector_id},
                             {"regime", r.regime},
                             {"f1", r.metrics.f1},
                             {"accuracy", r.metrics.accuracy},
                             {"ap", r.metrics.ap},
                             {"auc", r.metrics.auc},
                             {"tpr_at_1fpr", r.metrics.tpr_at_1fpr}});
    std::ofstream js(out_dir + "/metrics.json");
    js << j.dump(2) << "\n";
}

std::vector<MetricTableRow> load_metrics_rows(const std::string& out_dir) {
    std::ifstream in(out_dir + "/metrics.json");
    if (!in) throw std::runtime_error("metrics.json not found in " + out_dir +
                                      " (run the evaluate stage first)");
    json j;
    in >> j;
    std::vector<MetricTableRow> rows;
    for (const auto& rj : j.at("rows")) {
        MetricTableRow r;
        r.dataset_id = rj.at("dataset");
        r.length = rj.at("length");
        r.generator_id = rj.at("generator");
        r.detector_id = rj.at("detector");
        r.regime = rj.at("regime");
        r.metrics.f1 = rj.at("f1");
        r.metrics.accuracy = rj.at("accuracy");
        r.metrics.ap = rj.at("ap");
        r.metrics.auc = rj.at("auc");
        r.metrics.tpr_at_1fpr = rj.at("tpr_at_1fpr");
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_dire_errors_csv(const std::vector<DireErrorRow>& rows, const std::string& out_dir) {
    std::ofstream csv(out_dir + "/dire_errors.csv");
    if (!csv) throw std::runtime_error("cannot write dire_errors.csv");
    csv << "dataset,length,window_id,source,scalar_error\n";
    for (const auto& r : rows)
        csv << r.dataset_id << "," << r.length << "," << r.window_id << "," << r.source << ","
            << fmt_double(r.scalar_error) << "\n";
}

void write_quality_csv(const std::vector<QualityReport>& reports, const std::string& out_dir) {
    std::ofstream csv(out_dir + "/quality.csv");
    if (!csv) throw std::runtime_error("cannot write quality.csv");
    csv << "dataset,generator,metric,value,seed\n";
    for (const auto& q : reports) {
        csv << q.dataset_id << "," << q.generator_id << ",correlational,"
            << fmt_double(q.correlational) << "," << q.seed << "\n";
        csv << q.dataset_id << "," << q.generator_id << ",discriminative,"
            << fmt_double(q.discriminative) << "," << q.seed << "\n";
        csv << q.dataset_id << "," << q.generator_id << ",predictive," << fmt_double(q.predictive)
            << "," << q.seed << "\n";
    }
}

std::vector<QualityReport> load_quality_csv(const std::string& out_dir) {
    std::ifstream in(out_dir + "/quality.csv");
    if (!in) throw std::runtime_error("quality.csv not found in " + out_dir +
                                      " (run the quality stage first)");
    std::string line;
    std::getline(in, line);  // header
    std::map<std::pair<std::string, std::string>, QualityReport> by_key;
    std::vector<std::pair<std::string, std::string>> order;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string dataset, generator, metric, value, seed;
        std::getline(ss, dataset, ',');
        std::getline(ss, generator, ',');
        std::getline(ss, metric, ',');
        std::getline(ss, value, ',');
        std::getline(ss, seed, ',');
        const auto key = std::make_pair(dataset, generator);
        if (!by_key.count(key)) {
            QualityReport q;
            q.dataset_id = dataset;
            q.generator_id = generator;
            q.seed = std::stoull(seed);
            by_key[key] = q;
            order.push_back(key);
        }
        const double v = std::stod(value);
        if (metric == "correlational") by_key[key].correlational = v;
        else if (metric == "discriminative") by_key[key].discriminative = v;
        else if (metric == "predictive") by_key[key].predictive = v;
    }
    std::vector<QualityReport> out;
    for (const auto& key : order) out.push_back(by_key[key]);
    return out;
}

}  // namespace

std::optional<Stage> stage_from_name(const std::string& name) {
    if (name == "data") return Stage::Data;
    if (name == "zoo") return Stage::Zoo;
    if (name == "detectors") return Stage::Detectors;
    if (name == "evaluate") return Stage::Evaluate;
    if (name == "quality") return Stage::Quality;
    if (name == "report") return Stage::Report;
    return std::nullopt;
}

ExperimentReport run_experiment(const ExperimentConfig& config, std::optional<Stage> only) {
    validate_config(config);
    fs::create_directories(config.out_dir);

    ExperimentReport report;
    report.resolved_config_json = config_to_json(config);

    auto runs = [&](Stage s) { return !only.has_value() || *only == s; };
    auto wrap = [](const std::string& stage, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            throw std::runtime_error("stage '" + stage + "' failed: " + e.what());
        }
    };

    // Windows, splits, and normalization are cheap and re-derived on every
    // invocation; heavyweight artifacts (checkpoints, metric tables) are
    // persisted per stage.
    std::vector<Cell> cells;
    if (runs(Stage::Data) || runs(Stage::Zoo) || runs(Stage::Detectors) ||
        runs(Stage::Evaluate) || runs(Stage::Quality)) {
        wrap("data", [&] {
            fs::create_directories(config.out_dir + "/data");
            fs::create_directories(config.out_dir + "/norm");
            for (const auto& ds : config.datasets) {
                const MultivariateSeries series = materialize_series(ds);
                if (ds.path.empty() && runs(Stage::Data))
                    write_series_csv(series, config.out_dir + "/data/" + ds.id + ".csv");
                for (int length : config.lengths) {
                    cells.push_back(build_cell(config, series, ds.id, length));
                    save_norm_stats(cells.back().stats,
                                    config.out_dir + "/norm/" +
                                        cell_tag(ds.id, length) + ".json");
                }
            }
        });
    }
    if (only == Stage::Data) return report;

    std::vector<GeneratorZoo> zoos(cells.size());
    if (runs(Stage::Zoo)) {
        wrap("zoo", [&] {
            for (std::size_t i = 0; i < cells.size(); ++i)
                zoos[i] = build_generator_zoo(config, cells[i].gen_train, cells[i].dataset_id,
                                              cells[i].length, config.out_dir);
        });
    } else if (runs(Stage::Detectors) || runs(Stage::Evaluate) || runs(Stage::Quality)) {
        wrap("zoo", [&] {
            for (std::size_t i = 0; i < cells.size(); ++i)
                zoos[i] = load_zoo(config, cells[i].dataset_id, cells[i].length);
        });
    }
    if (only == Stage::Zoo) return report;

    std::vector<CellDetectors> detectors(cells.size());
    if (runs(Stage::Detectors)) {
        wrap("detectors", [&] {
            for (std::size_t i = 0; i < cells.size(); ++i)
                detectors[i] = train_detectors(config, cells[i], zoos[i]);
        });
    } else if (runs(Stage::Evaluate)) {
        wrap("detectors", [&] {
            for (std::size_t i = 0; i < cells.size(); ++i)
                detectors[i] = load_detectors(config, cells[i], zoos[i]);
        });
    }
    if (only == Stage::Detectors) return report;

    if (runs(Stage::Evaluate)) {
        wrap("evaluate", [&] {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                const Cell& cell = cells[i];
                const GeneratorZoo& zoo = zoos[i];
                std::vector<EvalPool> pools;
                for (std::size_t gi = 0; gi < config.zoo.size(); ++gi) {
                    EvalPool pool;
                    pool.generator_id = config.zoo[gi].id;
                    pool.real = cell.det_split.test;
                    pool.synth = generate_pool(
                        config, config.zoo[gi], zoo.models[gi],
                        std::max(config.quality_per_class,
                                 static_cast<int>(cell.det_split.test.size())),
                        cell.dataset_id, cell.length, "samples-eval");
                    pools.push_back(std::move(pool));
                }

                DireEvalDetector dire_det("dire", &zoo.reference(), detectors[i].dire_grid,
                                          detectors[i].dire);
                std::vector<ClassifierEvalDetector> cls_dets;
                cls_dets.reserve(detectors[i].classifiers.size());
                for (const auto& m : detectors[i].classifiers) cls_dets.emplace_back(&m);
                std::vector<Detector*> det_ptrs{&dire_det};
                for (auto& d : cls_dets) det_ptrs.push_back(&d);

                auto rows = evaluate_detectors(det_ptrs, pools, cell.dataset_id, cell.length,
                                               config.reference().id, config.eval_per_class,
                                               derive_seed(config.seed, "eval"));
                report.rows.insert(report.rows.end(), rows.begin(), rows.end());

                for (const auto& [key, err] : dire_det.errors()) {
                    DireErrorRow row;
                    row.dataset_id = cell.dataset_id;
                    row.length = cell.length;
                    row.source = std::get<0>(key);
                    row.window_id = std::get<2>(key);
                    row.scalar_error = err;
                    report.dire_errors.push_back(std::move(row));
                }
            }
            write_metrics_files(report.rows, config.out_dir);
            write_dire_errors_csv(report.dire_errors, config.out_dir);
        });
    }
    if (only == Stage::Evaluate) return report;

    if (runs(Stage::Quality)) {
        wrap("quality", [&] {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                const Cell& cell = cells[i];
                const auto real_q = subsample(
                    cell.det_split.train, static_cast<std::size_t>(config.quality_per_class),
                    derive_seed(config.seed,
                                "quality-real|" + cell_tag(cell.dataset_id, cell.length)));
                for (std::size_t gi = 0; gi < config.zoo.size(); ++gi) {
                    const auto synth_q = generate_pool(
                        config, config.zoo[gi], zoos[i].models[gi],
                        config.quality_per_class, cell.dataset_id, cell.length, "samples-eval");
                    QualityReport q;
                    q.dataset_id = cell_dataset_key(cell.dataset_id, cell.length);
                    q.generator_id = config.zoo[gi].id;
                    q.seed = derive_seed(config.seed, "quality|" + config.zoo[gi].id + "|" +
                                                          cell_tag(cell.dataset_id, cell.length));
                    q.correlational = correlational_score(real_q, synth_q).score;
                    q.discriminative = discriminative_score(real_q, synth_q, q.seed);
                    q.predictive = predictive_score(real_q, synth_q, q.seed);
                    report.quality.push_back(std::move(q));
                }
            }
            write_quality_csv(report.quality, config.out_dir);
        });
    }
    if (only == Stage::Quality) return report;

    wrap("report", [&] {
        if (only == Stage::Report) {
            report.rows = load_metrics_rows(config.out_dir);
            report.quality = load_quality_csv(config.out_dir);
        }

        std::set<std::string> quality_cells;
        for (const auto& q : report.quality) quality_cells.insert(q.dataset_id);
        if (quality_cells.size() >= 2) report.aggregate = aggregate_quality(report.quality);

        std::vector<std::string> detector_ids{"dire"};
        for (const auto& c : config.classifiers) detector_ids.push_back(c.name);
        for (const auto& g : config.zoo) {
            double agg_quality = 0.0;
            for (const auto& a : report.aggregate)
                if (a.generator_id == g.id) agg_quality = a.value;
            for (const auto& det : detector_ids) {
                double sum = 0.0;
                int count = 0;
                for (const auto& r : report.rows) {
                    if (r.generator_id != g.id || r.detector_id != det) continue;
                    sum += (r.metrics.f1 + r.metrics.accuracy + r.metrics.ap + r.metrics.auc +
                            r.metrics.tpr_at_1fpr) /
                           5.0;
                    ++count;
                }
                if (count == 0) continue;
                ScatterRow s;
                s.generator_id = g.id;
                s.detector_id = det;
                s.aggregate_quality = agg_quality;
                s.aggregate_detectability = sum / count;
                report.scatter.push_back(std::move(s));
            }
        }
        emit_report(report, config.out_dir);
    });
    return report;
}

void emit_report(const ExperimentReport& report, const std::string& out_dir) {
    fs::create_directories(out_dir);
    write_metrics_files(report.rows, out_dir);
    write_dire_errors_csv(report.dire_errors, out_dir);
    write_quality_csv(report.quality, out_dir);

    std::ofstream scatter(out_dir + "/quality_detectability.csv");
    if (!scatter) throw std::runtime_error("cannot write quality_detectability.csv");
    scatter << "generator,detector,aggregate_quality,aggregate_detectability\n";
    for (const auto& s : report.scatter)
        scatter << s.generator_id << "," << s.detector_id << ","
                << fmt_double(s.aggregate_quality) << "," << fmt_double(s.aggregate_detectability)
                << "\n";

    std::ofstream cfg(out_dir + "/config_resolved.json");
    if (!cfg) throw std::runtime_error("cannot write config_resolved.json");
    cfg << report.resolved_config_json << "\n";
}

}  // namespace tsdet
