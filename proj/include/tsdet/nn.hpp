#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsdet/matrix.hpp"

namespace tsdet {

// Minimal differentiable substrate for the denoiser, the raw-signal
// classifiers, and the quality-metric models. Networks are sequential layer
// stacks over (time, channel, feature) tensors; gradients come from a
// per-layer reverse pass recorded on a tape. Everything is 64-bit and
// deterministic under a fixed seed.

struct Shape3 {
    int steps = 0;
    int channels = 0;
    int features = 0;

    bool operator==(const Shape3&) const = default;
    int size() const { return steps * channels * features; }
    std::string str() const;
};

struct Tensor3 {
    Shape3 shape;
    std::vector<double> v;

    Tensor3() = default;
    explicit Tensor3(Shape3 s, double fill = 0.0)
        : shape(s), v(static_cast<std::size_t>(s.size()), fill) {}

    double& at(int t, int c, int f) {
        return v[(static_cast<std::size_t>(t) * shape.channels + c) * shape.features + f];
    }
    double at(int t, int c, int f) const {
        return v[(static_cast<std::size_t>(t) * shape.channels + c) * shape.features + f];
    }

    static Tensor3 from_matrix(const Matrix& m);  // (rows, cols) -> (rows, cols, 1)
    Matrix to_matrix() const;                     // requires features == 1
};

enum class LayerKind {
    Dense,          // feature-axis linear map, applied at every (t, c)
    ConvTemporal,   // kernel k x 1 along time, per channel, same zero padding
    ConvChannel,    // 1 x C mixing across channels, collapses channel axis to 1
    Activation,
    GlobalMeanPool, // mean over time
    TimeEmbedding,  // adds a learned projection of a sinusoidal timestep code
    Flatten,        // (L, C, F) -> (1, 1, L*C*F)
};

enum class Act { Relu, Gelu, Sigmoid, Tanh };

struct LayerSpec {
    LayerKind kind = LayerKind::Dense;
    int features_in = 0;
    int features_out = 0;
    int kernel = 0;     // ConvTemporal
    Act act = Act::Relu;
    int embed_dim = 0;  // TimeEmbedding sinusoid width

    static LayerSpec dense(int in, int out);
    static LayerSpec conv_temporal(int in, int out, int kernel);
    static LayerSpec conv_channel(int in, int out);
    static LayerSpec activation(Act a);
    static LayerSpec global_mean_pool();
    static LayerSpec time_embedding(int embed_dim, int features);
    static LayerSpec flatten();
};

/// Sequential layer stack with shapes resolved and validated up front, so a
/// composed forward pass can never hit a shape error at runtime.
struct Architecture {
    Shape3 input;
    std::vector<LayerSpec> layers;
    std::vector<Shape3> shapes;  // shapes[0] = input, shapes[i+1] = output of layer i
    bool has_time_embedding = false;

    Architecture() = default;
    Architecture(int steps, int channels, std::vector<LayerSpec> layer_specs);

    const Shape3& output_shape() const { return shapes.back(); }
    std::uint64_t fingerprint() const;
};

struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<double> v;

    std::size_t size() const { return v.size(); }
};

struct ParamSet {
    std::vector<Param> params;

    std::size_t total_size() const;
    bool same_shapes(const ParamSet& o) const;
    bool all_finite() const;
};

/// Weights ~ N(0, 1/fan_in), biases zero; deterministic under seed.
ParamSet init_params(const Architecture& arch, std::uint64_t seed);

/// Activations recorded by forward; consumed by backward. Valid only for the
/// (arch, input) pair that produced it.
struct Tape {
    std::uint64_t arch_fingerprint = 0;
    std::optional<int> timestep;
    std::vector<Tensor3> inputs;  // input seen by each layer
};

Tensor3 forward(const Architecture& arch, const ParamSet& params, const Tensor3& input,
                std::optional<int> timestep = std::nullopt, Tape* tape = nullptr);

/// Exact reverse-mode gradients of a scalar loss with respect to every
/// parameter, given dLoss/dOutput. Optionally also returns dLoss/dInput.
ParamSet backward(const Architecture& arch, const ParamSet& params, const Tape& tape,
                  const Tensor3& output_grad, Tensor3* input_grad = nullptr);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimizerState {
    AdamConfig config;
    std::vector<Param> first_moment;
    std::vector<Param> second_moment;
    long step = 0;
};

OptimizerState make_optimizer_state(const ParamSet& params, AdamConfig config = {});

/// Bias-corrected adaptive-moment update. Throws (leaving params untouched)
/// on shape mismatch or non-finite gradients.
void adam_step(ParamSet& params, const ParamSet& grads, OptimizerState& state);

/// Max relative error between backward gradients and central finite
/// differences of the fixed loss 0.5 * sum(output^2). Returns 0 for
/// parameter-free architectures.
double finite_diff_check(const Architecture& arch, const ParamSet& params, const Tensor3& input,
                         std::optional<int> timestep, double step);

// Checkpoints: <prefix>.json manifest (layers, tensor shapes, hyperparameters)
// plus <prefix>.bin holding every tensor as little-endian float64, in
// manifest order.
void save_checkpoint(const Architecture& arch, const ParamSet& params, const std::string& prefix,
                     const std::string& hyper_json = "{}");
void load_checkpoint(const std::string& prefix, Architecture& arch, ParamSet& params,
                     std::string* hyper_json = nullptr);

std::string act_name(Act a);
Act act_from_name(const std::string& name);

}  // namespace tsdet
