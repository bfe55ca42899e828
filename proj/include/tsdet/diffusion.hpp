#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsdet/dataio.hpp"
#include "tsdet/matrix.hpp"
#include "tsdet/nn.hpp"

namespace tsdet {

enum class ScheduleKind { Linear, Cosine };

/// Forward-process noise schedule: per-step beta_t plus the cumulative
/// signal-retention products alpha_bar_t = prod(1 - beta_s), s <= t.
struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::Linear;
    int T = 0;
    double beta_start = 0.0;
    double beta_end = 0.0;
    std::vector<double> beta;
    std::vector<double> alpha_bar;
};

NoiseSchedule make_schedule(ScheduleKind kind, int T, double beta_start, double beta_end);

void save_schedule(const NoiseSchedule& sched, const std::string& path);
NoiseSchedule load_schedule(const std::string& path);
std::string schedule_kind_name(ScheduleKind kind);
ScheduleKind schedule_kind_from_name(const std::string& name);

/// Closed-form forward noising: x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
Matrix q_sample(const Matrix& x0, int t, const Matrix& eps, const NoiseSchedule& sched);

/// Strictly increasing subsequence of {0..T-1} containing both endpoints;
/// the DDIM trajectory visits exactly these timesteps.
struct StepGrid {
    std::vector<int> indices;

    StepGrid() = default;
    explicit StepGrid(std::vector<int> idx, int T);
    static StepGrid uniform(int T, int count);
    int size() const { return static_cast<int>(indices.size()); }
};

/// Noise predictor eps_theta(x_t, t); doubles as generator and as the
/// reconstruction model for the white-box detector.
struct DenoiserModel {
    std::string generator_id;
    Architecture arch;
    ParamSet params;
    NoiseSchedule schedule;
    double final_train_loss = 0.0;

    Matrix predict_noise(const Matrix& x_t, int t) const;
};

/// Stack of per-channel temporal convolutions with a sinusoidal timestep
/// shift and a final feature projection back to one map per channel.
Architecture make_denoiser_arch(int length, int channels, int width, int depth, int kernel = 5,
                                int embed_dim = 16);

/// Denoiser whose prediction is identically zero; exercises the pure
/// rescaling algebra of the DDIM updates.
DenoiserModel make_zero_denoiser(int length, int channels, NoiseSchedule sched);

struct DenoiserHyper {
    int batch = 64;
    int steps = 0;
    double lr = 1e-3;
};

DenoiserModel train_denoiser(const std::vector<Window>& train_windows, Architecture arch,
                             NoiseSchedule sched, DenoiserHyper hyper, std::uint64_t seed,
                             const std::string& generator_id,
                             std::vector<double>* loss_trace = nullptr);

/// Timestep index for the noiseless boundary state, treated as alpha_bar = 1.
constexpr int kCleanStep = -1;

/// Deterministic DDIM update between two schedule positions. t_to > t_from
/// adds noise (inversion); t_to < t_from removes it. One model call.
Matrix ddim_step(const DenoiserModel& model, const Matrix& x, int t_from, int t_to);

std::vector<Window> ddim_generate(const DenoiserModel& model, const StepGrid& grid, int n,
                                  std::uint64_t seed, const std::string& dataset_id);

Matrix ddim_invert(const DenoiserModel& model, const StepGrid& grid, const Matrix& x0);

/// Full inversion-then-denoising round trip over the same grid.
Matrix reconstruct(const DenoiserModel& model, const StepGrid& grid, const Matrix& x0);

void save_denoiser(const DenoiserModel& model, const std::string& dir);
DenoiserModel load_denoiser(const std::string& dir);

}  // namespace tsdet
