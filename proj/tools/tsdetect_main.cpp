// tsdetect: train small diffusion time-series generators, fit white-box
// (reconstruction-error) and black-box (raw-signal classifier) detectors,
// and run the in-distribution / cross-generator evaluation protocol.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tsdet/experiment.hpp"
#include "tsdet/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tsdet;

namespace {

json window_to_json(const Window& w) {
    json values = json::array();
    for (int t = 0; t < w.length(); ++t) {
        json row = json::array();
        for (int c = 0; c < w.channels(); ++c) row.push_back(w.values.at(t, c));
        values.push_back(std::move(row));
    }
    return json{{"id", w.id}, {"source", w.source.label()}, {"values", std::move(values)}};
}

void write_window_bundle(const std::vector<Window>& windows, const std::string& path) {
    if (windows.empty()) throw std::runtime_error("no windows to write");
    json j;
    j["dataset_id"] = windows.front().dataset_id;
    j["length"] = windows.front().length();
    j["channels"] = windows.front().channels();
    j["windows"] = json::array();
    for (const auto& w : windows) j["windows"].push_back(window_to_json(w));
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump() << "\n";
}

std::vector<Window> read_window_bundle(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    in >> j;
    const int length = j.at("length");
    const int channels = j.at("channels");
    const std::string dataset_id = j.value("dataset_id", "bundle");
    std::vector<Window> windows;
    for (const auto& wj : j.at("windows")) {
        Window w;
        w.id = wj.at("id");
        const std::string source = wj.at("source");
        w.source = source == "real" ? Provenance::real() : Provenance::generated(source);
        w.dataset_id = dataset_id;
        w.values = Matrix(length, channels);
        const auto& values = wj.at("values");
        for (int t = 0; t < length; ++t)
            for (int c = 0; c < channels; ++c) w.values.at(t, c) = values[t][c];
        windows.push_back(std::move(w));
    }
    return windows;
}

std::vector<Window> load_input_windows(const std::string& path, int length) {
    if (path.size() > 5 && path.substr(path.size() - 5) == ".json")
        return read_window_bundle(path);
    if (length <= 0)
        throw std::runtime_error("--length is required when the input is a raw CSV");
    const MultivariateSeries series = load_csv(path);
    return slide_windows(series, length, length, fs::path(path).stem().string());
}

void print_metric_table(const std::vector<MetricTableRow>& rows) {
    std::cout << std::left << std::setw(10) << "dataset" << std::setw(7) << "len"
              << std::setw(10) << "generator" << std::setw(14) << "detector" << std::setw(9)
              << "regime" << std::right << std::setw(7) << "F1" << std::setw(7) << "Acc"
              << std::setw(7) << "AP" << std::setw(7) << "AUC" << std::setw(7) << "TPR" << "\n";
    for (const auto& r : rows) {
        std::cout << std::left << std::setw(10) << r.dataset_id << std::setw(7) << r.length
                  << std::setw(10) << r.generator_id << std::setw(14) << r.detector_id
                  << std::setw(9) << r.regime << std::right << std::setw(7)
                  << format_percent(r.metrics.f1) << std::setw(7)
                  << format_percent(r.metrics.accuracy) << std::setw(7)
                  << format_percent(r.metrics.ap) << std::setw(7)
                  << format_percent(r.metrics.auc) << std::setw(7)
                  << format_percent(r.metrics.tpr_at_1fpr) << "\n";
    }
}

struct SharedOverrides {
    std::string config_path;
    std::string out_dir;
    std::int64_t seed = -1;
    std::string lengths_csv;

    ExperimentConfig resolve() const {
        ExperimentConfig cfg = config_path.empty() ? default_experiment_config()
                                                   : load_experiment_config(config_path);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
        if (!lengths_csv.empty()) {
            cfg.lengths.clear();
            std::stringstream ss(lengths_csv);
            std::string tok;
            while (std::getline(ss, tok, ',')) cfg.lengths.push_back(std::stoi(tok));
        }
        return cfg;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic time series detection workbench"};
    app.require_subcommand(1);

    // ---- make-data ----------------------------------------------------
    auto* make_data = app.add_subcommand("make-data", "write seeded desk-scale datasets as CSV");
    std::string md_out = "data";
    int md_count = 2;
    DeskDataConfig md_cfg;
    std::uint64_t md_seed = 1;
    make_data->add_option("--out", md_out, "output directory");
    make_data->add_option("--datasets", md_count, "number of datasets");
    make_data->add_option("--length", md_cfg.length, "series length");
    make_data->add_option("--channels", md_cfg.channels, "channel count");
    make_data->add_option("--sinusoids", md_cfg.sinusoids, "latent sinusoid count");
    make_data->add_option("--noise-scale", md_cfg.noise_scale, "AR(1) innovation scale");
    make_data->add_option("--ar-coeff", md_cfg.ar_coeff, "AR(1) coefficient");
    make_data->add_option("--seed", md_seed, "base seed");
    make_data->callback([&] {
        fs::create_directories(md_out);
        for (int i = 0; i < md_count; ++i) {
            DeskDataConfig cfg = md_cfg;
            cfg.seed = derive_seed(md_seed, "make-data", i);
            const std::string path = md_out + "/desk_" + std::to_string(i) + ".csv";
            write_series_csv(make_desk_series(cfg), path);
            std::cout << "wrote " << path << "\n";
        }
    });

    // ---- train-generator ----------------------------------------------
    auto* train_gen = app.add_subcommand("train-generator", "train one diffusion generator");
    std::string tg_data, tg_out = "runs/generator", tg_norm;
    GeneratorSpec tg_spec;
    std::string tg_schedule = "linear";
    int tg_length = 32;
    train_gen->add_option("--data", tg_data, "dataset CSV")->required();
    train_gen->add_option("--id", tg_spec.id, "generator id")->required();
    train_gen->add_option("--out", tg_out, "output directory");
    train_gen->add_option("--length", tg_length, "window length");
    train_gen->add_option("--width", tg_spec.width, "denoiser width");
    train_gen->add_option("--depth", tg_spec.depth, "temporal conv layers");
    train_gen->add_option("--schedule", tg_schedule, "linear|cosine");
    train_gen->add_option("--T", tg_spec.T, "diffusion steps");
    train_gen->add_option("--epochs", tg_spec.epochs, "training epochs");
    train_gen->add_option("--batch", tg_spec.batch, "batch size");
    train_gen->add_option("--lr", tg_spec.lr, "learning rate");
    train_gen->add_option("--seed", tg_spec.seed, "seed");
    train_gen->add_option("--norm", tg_norm, "existing normalization stats JSON");
    train_gen->callback([&] {
        const MultivariateSeries series = load_csv(tg_data);
        auto windows = slide_windows(series, tg_length, tg_length,
                                     fs::path(tg_data).stem().string());
        SplitResult sp = split(std::move(windows), SplitRatios{}, derive_seed(tg_spec.seed, "split"));
        NormStats stats = tg_norm.empty() ? fit_normalizer(sp.train, NormScheme::MinMax)
                                          : load_norm_stats(tg_norm);
        for (auto& w : sp.train) normalize_inplace(w, stats, NormDirection::Forward);

        NoiseSchedule sched = make_schedule(schedule_kind_from_name(tg_schedule), tg_spec.T,
                                            tg_spec.beta_start, tg_spec.beta_end);
        DenoiserHyper hyper;
        hyper.batch = tg_spec.batch;
        hyper.steps = tg_spec.epochs *
                      static_cast<int>((sp.train.size() + tg_spec.batch - 1) / tg_spec.batch);
        hyper.lr = tg_spec.lr;
        std::vector<double> trace;
        DenoiserModel model = train_denoiser(
            sp.train,
            make_denoiser_arch(tg_length, series.channels(), tg_spec.width, tg_spec.depth,
                               tg_spec.kernel, tg_spec.embed_dim),
            std::move(sched), hyper, tg_spec.seed, tg_spec.id, &trace);
        const std::string dir = tg_out + "/" + tg_spec.id;
        save_denoiser(model, dir);
        save_norm_stats(stats, dir + "/norm.json");
        std::cout << "trained " << tg_spec.id << " (" << hyper.steps << " steps, final loss "
                  << model.final_train_loss << "), saved to " << dir << "\n";
    });

    // ---- generate ------------------------------------------------------
    auto* generate = app.add_subcommand("generate", "sample windows from a trained generator");
    std::string ge_model, ge_out = "samples.json", ge_format = "json";
    int ge_n = 64, ge_grid = 20;
    std::uint64_t ge_seed = 1;
    bool ge_denorm = false;
    generate->add_option("--model", ge_model, "generator directory")->required();
    generate->add_option("--n", ge_n, "sample count");
    generate->add_option("--out", ge_out, "output path (json file or csv directory)");
    generate->add_option("--format", ge_format, "json|csv");
    generate->add_option("--grid-steps", ge_grid, "DDIM grid size");
    generate->add_option("--seed", ge_seed, "seed");
    generate->add_flag("--denormalize", ge_denorm, "map samples back to data scale");
    generate->callback([&] {
        DenoiserModel model = load_denoiser(ge_model);
        const StepGrid grid = StepGrid::uniform(model.schedule.T, ge_grid);
        auto windows = ddim_generate(model, grid, ge_n, ge_seed, model.generator_id);
        if (ge_denorm) {
            NormStats stats = load_norm_stats(ge_model + "/norm.json");
            for (auto& w : windows) normalize_inplace(w, stats, NormDirection::Inverse);
        }
        if (ge_format == "json") {
            write_window_bundle(windows, ge_out);
        } else {
            fs::create_directories(ge_out);
            for (const auto& w : windows) {
                MultivariateSeries s;
                s.values = w.values;
                for (int c = 0; c < w.channels(); ++c)
                    s.channel_names.push_back("c" + std::to_string(c));
                write_series_csv(s, ge_out + "/window_" + std::to_string(w.id) + ".csv");
            }
        }
        std::cout << "wrote " << ge_n << " windows to " << ge_out << "\n";
    });

    // ---- train-detector --------------------------------------------------
    auto* train_det = app.add_subcommand("train-detector",
                                         "fit a detector against a reference generator");
    std::string td_kind = "disjoint_cnn", td_data, td_model, td_out = "runs/detector";
    ClassifierSpec td_cls;
    DireSpec td_dire;
    int td_length = 32;
    std::uint64_t td_seed = 11;
    train_det->add_option("--kind", td_kind, "dire|disjoint_cnn|mlp|fcn");
    train_det->add_option("--data", td_data, "real dataset CSV")->required();
    train_det->add_option("--model", td_model, "reference generator directory")->required();
    train_det->add_option("--out", td_out, "output directory");
    train_det->add_option("--length", td_length, "window length");
    train_det->add_option("--epochs", td_cls.epochs, "classifier epochs");
    train_det->add_option("--batch", td_cls.batch, "classifier batch");
    train_det->add_option("--lr", td_cls.lr, "classifier learning rate");
    train_det->add_option("--grid-steps", td_dire.grid_steps, "DDIM grid size (dire)");
    train_det->add_option("--per-class", td_dire.train_per_class, "records per class (dire)");
    train_det->add_option("--seed", td_seed, "seed");
    train_det->callback([&] {
        DenoiserModel reference = load_denoiser(td_model);
        NormStats stats = load_norm_stats(td_model + "/norm.json");
        const MultivariateSeries series = load_csv(td_data);
        auto windows = slide_windows(series, td_length, std::max(1, td_length / 2),
                                     fs::path(td_data).stem().string());
        SplitResult sp = split(std::move(windows), SplitRatios{}, derive_seed(td_seed, "split"));
        for (auto& w : sp.train) normalize_inplace(w, stats, NormDirection::Forward);

        const StepGrid grid = StepGrid::uniform(reference.schedule.T, td_dire.grid_steps);
        auto synth = ddim_generate(reference, grid, static_cast<int>(sp.train.size()),
                                   derive_seed(td_seed, "synth-train"), sp.train.front().dataset_id);

        fs::create_directories(td_out);
        if (td_kind == "dire") {
            std::vector<ReconstructionRecord> real_records, synth_records;
            const std::size_t per_class =
                std::min<std::size_t>(td_dire.train_per_class, sp.train.size());
            for (std::size_t i = 0; i < per_class; ++i) {
                real_records.push_back(make_reconstruction_record(reference, grid, sp.train[i],
                                                                  td_dire.aggregation));
                synth_records.push_back(
                    make_reconstruction_record(reference, grid, synth[i], td_dire.aggregation));
            }
            DireDetector det = fit_dire_detector(real_records, synth_records, td_dire.mode,
                                                 td_seed, td_dire.aggregation);
            save_dire_detector(det, td_out + "/dire.json");
            std::cout << "saved " << td_out << "/dire.json\n";
        } else {
            td_cls.name = td_kind;
            td_cls.arch = td_kind;
            Architecture arch =
                td_kind == "disjoint_cnn"
                    ? build_disjoint_cnn(td_length, series.channels(),
                                         DisjointCnnHyper{td_cls.kernel, td_cls.filters,
                                                          td_cls.blocks})
                    : (td_kind == "mlp" ? build_mlp(td_length, series.channels(), td_cls.hidden)
                                        : build_fcn(td_length, series.channels(), td_cls.filters,
                                                    td_cls.kernel));
            ClassifierHyper hyper;
            hyper.batch = td_cls.batch;
            hyper.epochs = td_cls.epochs;
            hyper.lr = td_cls.lr;
            auto [model, rep] = train_blackbox(sp.train, synth, arch, hyper, td_seed, td_kind);
            save_classifier(model, td_out + "/" + td_kind);
            std::cout << "saved " << td_out << "/" << td_kind
                      << " (validation F1 " << format_percent(rep.validation_f1) << ")\n";
        }
    });

    // ---- detect ----------------------------------------------------------
    auto* detect = app.add_subcommand("detect", "score windows with a trained detector");
    std::string de_detector, de_input, de_out = "scores.csv", de_model, de_norm;
    int de_length = 0;
    detect->add_option("--detector", de_detector, "detector path (dire.json or classifier dir)")
        ->required();
    detect->add_option("--input", de_input, "windows bundle (.json) or raw CSV")->required();
    detect->add_option("--out", de_out, "scores CSV");
    detect->add_option("--model", de_model, "reference generator directory (dire only)");
    detect->add_option("--norm", de_norm, "normalization stats for raw CSV input");
    detect->add_option("--length", de_length, "window length for raw CSV input");
    detect->callback([&] {
        auto windows = load_input_windows(de_input, de_length);
        if (!de_norm.empty()) {
            NormStats stats = load_norm_stats(de_norm);
            for (auto& w : windows) normalize_inplace(w, stats, NormDirection::Forward);
        }
        if (de_detector.size() > 5 &&
            de_detector.substr(de_detector.size() - 5) == ".json") {
            if (de_model.empty())
                throw std::runtime_error("dire detection needs --model (reference generator)");
            DireDetector det = load_dire_detector(de_detector);
            DenoiserModel reference = load_denoiser(de_model);
            const StepGrid grid = StepGrid::uniform(reference.schedule.T, 20);
            std::vector<ReconstructionRecord> records;
            for (const auto& w : windows)
                records.push_back(make_reconstruction_record(reference, grid, w, det.aggregation));
            write_dire_scores_csv(det, records, de_out);
        } else {
            ClassifierModel model = load_classifier(de_detector);
            write_classifier_scores_csv(model, windows, de_out);
        }
        std::cout << "wrote " << de_out << " (" << windows.size() << " windows)\n";
    });

    // ---- evaluate ----------------------------------------------------------
    auto* evaluate = app.add_subcommand("evaluate", "compute detection metrics from a scores CSV");
    std::string ev_scores, ev_out;
    evaluate->add_option("--scores", ev_scores, "scores CSV from 'detect'")->required();
    evaluate->add_option("--out", ev_out, "optional metrics CSV");
    evaluate->callback([&] {
        std::ifstream in(ev_scores);
        if (!in) throw std::runtime_error("cannot open " + ev_scores);
        std::string line;
        std::getline(in, line);
        std::stringstream hs(line);
        std::vector<std::string> header;
        std::string tok;
        while (std::getline(hs, tok, ',')) header.push_back(tok);
        int src_col = -1, prob_col = -1, label_col = -1;
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == "source") src_col = static_cast<int>(i);
            if (header[i] == "probability") prob_col = static_cast<int>(i);
            if (header[i] == "label") label_col = static_cast<int>(i);
        }
        if (src_col < 0 || prob_col < 0 || label_col < 0)
            throw std::runtime_error("scores CSV needs source, probability and label columns");
        ScoredBatch batch;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::vector<std::string> fields;
            while (std::getline(ss, tok, ',')) fields.push_back(tok);
            batch.labels.push_back(fields[src_col] == "real" ? 0 : 1);
            batch.scores.push_back(std::stod(fields[prob_col]));
            batch.predictions.push_back(std::stoi(fields[label_col]));
        }
        const MetricRow m = compute_metrics(batch);
        std::cout << "f1 " << format_percent(m.f1) << "  accuracy " << format_percent(m.accuracy)
                  << "  ap " << format_percent(m.ap) << "  auc " << format_percent(m.auc)
                  << "  tpr@1%fpr " << format_percent(m.tpr_at_1fpr) << "\n";
        if (!ev_out.empty()) {
            std::ofstream out(ev_out);
            out << "f1,accuracy,ap,auc,tpr_at_1fpr\n";
            out.precision(17);
            out << m.f1 << "," << m.accuracy << "," << m.ap << "," << m.auc << ","
                << m.tpr_at_1fpr << "\n";
        }
    });

    // ---- report ----------------------------------------------------------
    auto* report_cmd = app.add_subcommand("report", "render the metric tables of a finished run");
    std::string rp_run;
    report_cmd->add_option("--run", rp_run, "run directory")->required();
    report_cmd->callback([&] {
        std::ifstream in(rp_run + "/metrics.json");
        if (!in) throw std::runtime_error("no metrics.json under " + rp_run);
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
            r.metrics = {rj.at("f1"), rj.at("accuracy"), rj.at("ap"), rj.at("auc"),
                         rj.at("tpr_at_1fpr")};
            rows.push_back(std::move(r));
        }
        print_metric_table(rows);
    });

    // ---- run-experiment ---------------------------------------------------
    auto* run_cmd = app.add_subcommand("run-experiment", "full protocol from one config file");
    SharedOverrides ov;
    std::string only_stage;
    run_cmd->add_option("--config", ov.config_path, "experiment config JSON");
    run_cmd->add_option("--out", ov.out_dir, "output directory override");
    run_cmd->add_option("--seed", ov.seed, "global seed override");
    run_cmd->add_option("--lengths", ov.lengths_csv, "comma-separated window lengths");
    run_cmd->add_option("--only", only_stage, "run one stage: data|zoo|detectors|evaluate|quality|report");
    run_cmd->callback([&] {
        ExperimentConfig cfg = ov.resolve();
        std::optional<Stage> only;
        if (!only_stage.empty()) {
            only = stage_from_name(only_stage);
            if (!only) throw std::runtime_error("unknown stage '" + only_stage + "'");
        }
        const ExperimentReport report = run_experiment(cfg, only);
        if (!report.rows.empty()) print_metric_table(report.rows);
        std::cout << "artifacts under " << cfg.out_dir << "\n";
    });

    CLI11_PARSE(app, argc, argv);
    return 0;
}
