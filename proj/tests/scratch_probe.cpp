// Throwaway probe for calibrating test fixtures (not registered with ctest).
#include "tsdet/dataio.hpp"
#include "tsdet/synthetic.hpp"
#include <algorithm>
#include <cmath>
#include <iostream>

#include "tsdet/dire.hpp"
#include "tsdet/diffusion.hpp"
#include "tsdet/metrics.hpp"
#include "tsdet/quality.hpp"
#include "tsdet/rng.hpp"

using namespace tsdet;

std::vector<Window> sine_windows(int count, int length, std::uint64_t seed, double noise) {
    Rng rng = make_rng(seed);
    std::vector<Window> out;
    for (int i = 0; i < count; ++i) {
        Window w;
        w.values = Matrix(length, 1);
        const double phase = uniform_real(rng, 0.0, 2.0 * M_PI);
        const double freq = uniform_real(rng, 0.5, 1.5);
        for (int t = 0; t < length; ++t)
            w.values.at(t, 0) = 0.7 * std::sin(2.0 * M_PI * freq * t / length + phase) +
                                gaussian(rng, 0.0, noise);
        w.dataset_id = "sine";
        w.id = static_cast<std::uint64_t>(i);
        out.push_back(std::move(w));
    }
    return out;
}

int main(int argc, char** argv) {
    const std::string mode = argc > 1 ? argv[1] : "recon";

    if (mode == "recon") {
        for (double beta_end : {0.02, 0.1, 0.3}) {
        for (int steps : {800, 1600}) {
            const auto windows = sine_windows(96, 16, 11, 0.18);
            NoiseSchedule sched = make_schedule(ScheduleKind::Linear, 50, 1e-3, beta_end);
            std::cout << "beta_end=" << beta_end << " abar_last=" << sched.alpha_bar[49] << " ";
            DenoiserHyper hyper;
            hyper.batch = 16;
            hyper.steps = steps;
            hyper.lr = 2e-3;
            std::vector<double> trace;
            const auto model = train_denoiser(windows, make_denoiser_arch(16, 1, 16, 2, 5, 8),
                                              sched, hyper, 33, "m", &trace);
            const StepGrid grid = StepGrid::uniform(50, 10);
            const auto gen = ddim_generate(model, grid, 60, 77, "sine");
            const auto real = sine_windows(60, 16, 1234, 0.18);
            std::vector<double> ge, re;
            ScoredBatch batch;
            for (const auto& w : gen) {
                const auto rec = make_reconstruction_record(model, grid, w, DireAggregation::LogMean);
                ge.push_back(rec.scalar_error);
                batch.labels.push_back(1);
                batch.scores.push_back(-rec.scalar_error);
            }
            for (const auto& w : real) {
                const auto rec = make_reconstruction_record(model, grid, w, DireAggregation::LogMean);
                re.push_back(rec.scalar_error);
                batch.labels.push_back(0);
                batch.scores.push_back(-rec.scalar_error);
            }
            std::sort(ge.begin(), ge.end());
            std::sort(re.begin(), re.end());
            std::cout << "steps=" << steps << " final_loss=" << model.final_train_loss
                      << " med_gen_logmse=" << ge[ge.size() / 2]
                      << " med_real_logmse=" << re[re.size() / 2]
                      << " auc(low-err=synth)=" << roc_auc(batch) << "\n";
        }
        }
    } else if (mode == "gstar") {
        // desk-scale reference-generator quality vs training setup
        
        DeskDataConfig desk;
        desk.length = 6144;
        desk.noise_scale = 0.45;
        desk.ar_coeff = 0.6;
        desk.seed = 101;
        const auto series = make_desk_series(desk);
        auto gen_windows = slide_windows(series, 32, 32, "desk-a");
        auto det_windows = slide_windows(series, 32, 16, "desk-a");
        SplitResult gen_split = split(std::move(gen_windows), SplitRatios{}, 11);
        SplitResult det_split = split(std::move(det_windows), SplitRatios{}, 12);
        const auto stats = fit_normalizer(det_split.train, NormScheme::MinMax);
        for (auto& w : gen_split.train) normalize_inplace(w, stats, NormDirection::Forward);
        for (auto& w : det_split.test) normalize_inplace(w, stats, NormDirection::Forward);

        struct Variant { const char* name; ScheduleKind kind; int T; double b0, b1; int epochs; int width, depth; int sample_steps; std::uint64_t seed; };
        const Variant variants[] = {
            {"g-star lin200 w32d3 e30 s50", ScheduleKind::Linear, 200, 5e-4, 0.1, 30, 32, 3, 50, 1},
            {"gen-b  lin200 w20d2 e25 s30", ScheduleKind::Linear, 200, 5e-4, 0.1, 25, 20, 2, 30, 2},
            {"gen-c  lin200 w48d3 e60 s50", ScheduleKind::Linear, 200, 5e-4, 0.1, 60, 48, 3, 50, 3},
            {"gen-d  cos100 w40d3 e40 s20", ScheduleKind::Cosine, 100, 0, 0, 40, 40, 3, 20, 4},
        };
        std::vector<DenoiserModel> zoo;
        for (const auto& v : variants) {
            NoiseSchedule sched = make_schedule(v.kind, v.T, v.b0, v.b1);
            DenoiserHyper hyper;
            hyper.batch = 16;
            hyper.steps = v.epochs * static_cast<int>((gen_split.train.size() + 15) / 16);
            hyper.lr = 1e-3;
            zoo.push_back(train_denoiser(gen_split.train,
                                         make_denoiser_arch(32, 3, v.width, v.depth, 5, 16),
                                         sched, hyper, v.seed, v.name));
            std::cout << v.name << " trained, loss=" << zoo.back().final_train_loss << "\n";
        }
        const auto& gstar = zoo[0];
        const StepGrid grid = StepGrid::uniform(gstar.schedule.T, 20);
        std::vector<double> real_err;
        int used = 0;
        for (const auto& w : det_split.test) {
            if (used++ >= 60) break;
            real_err.push_back(
                make_reconstruction_record(gstar, grid, w, DireAggregation::LogMean).scalar_error);
        }
        int vi = 0;
        for (const auto& model : zoo) {
            const StepGrid own = StepGrid::uniform(model.schedule.T, variants[vi++].sample_steps);
            const auto gen = ddim_generate(model, own, 60, 7, "desk-a");
            ScoredBatch batch;
            std::vector<double> ge;
            for (const auto& w : gen) {
                const auto rec = make_reconstruction_record(gstar, grid, w, DireAggregation::LogMean);
                ge.push_back(rec.scalar_error);
                batch.labels.push_back(1);
                batch.scores.push_back(-rec.scalar_error);
            }
            for (double e : real_err) {
                batch.labels.push_back(0);
                batch.scores.push_back(-e);
            }
            std::sort(ge.begin(), ge.end());
            std::sort(real_err.begin(), real_err.end());
            std::cout << model.generator_id << ": med_under_gstar=" << ge[ge.size() / 2]
                      << " med_real=" << real_err[real_err.size() / 2]
                      << " dire_auc=" << roc_auc(batch) << "\n";
        }
    } else if (mode == "invert") {
        const auto windows = sine_windows(96, 16, 11, 0.18);
        NoiseSchedule sched = make_schedule(ScheduleKind::Linear, 50, 1e-3, 0.3);
        DenoiserHyper hyper;
        hyper.batch = 16;
        hyper.steps = 3200;
        hyper.lr = 2e-3;
        const auto model = train_denoiser(windows, make_denoiser_arch(16, 1, 24, 3, 5, 8), sched,
                                          hyper, 33, "m");
        for (int g : {10, 25, 50}) {
            const StepGrid grid = StepGrid::uniform(50, g);
            const auto gen = ddim_generate(model, grid, 200, 55, "sine");
            double sum_sq = 0.0;
            std::size_t n = 0;
            for (const auto& w : gen) {
                const Matrix x_t = ddim_invert(model, grid, w.values);
                for (double v : x_t.v) {
                    sum_sq += v * v;
                    ++n;
                }
            }
            std::cout << "grid=" << g << " mean_sq=" << sum_sq / n << "\n";
        }
    } else if (mode == "pred") {
        Rng rng = make_rng(20);
        auto ar_pool = [&](int count, std::uint64_t seed) {
            Rng r2 = make_rng(seed);
            std::vector<Window> out;
            for (int i = 0; i < count; ++i) {
                Window w;
                w.values = Matrix(10, 2);
                for (int c = 0; c < 2; ++c) {
                    double x = gaussian(r2);
                    for (int t = 0; t < 10; ++t) {
                        x = 0.9 * x + gaussian(r2, 0.0, 0.1);
                        w.values.at(t, c) = x;
                    }
                }
                w.id = i;
                out.push_back(std::move(w));
            }
            return out;
        };
        const auto a = ar_pool(160, 1);
        const auto b = ar_pool(160, 2);
        const double in_sample = predictive_score(a, a, 41);
        const double cross = predictive_score(a, b, 41);
        std::cout << "in_sample=" << in_sample << " cross=" << cross
                  << " rel_gap=" << std::abs(cross - in_sample) / in_sample << "\n";
    }
    return 0;
}
