#include "tsdet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tsdet/rng.hpp"

namespace tsdet {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

double apply_act(Act a, double x) {
    switch (a) {
        case Act::Relu: return x > 0.0 ? x : 0.0;
        case Act::Gelu: return 0.5 * x * (1.0 + std::erf(x / kSqrt2));
        case Act::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Act::Tanh: return std::tanh(x);
    }
    throw std::logic_error("unknown activation");
}

double act_grad(Act a, double x) {
    switch (a) {
        case Act::Relu: return x > 0.0 ? 1.0 : 0.0;
        case Act::Gelu: {
            const double cdf = 0.5 * (1.0 + std::erf(x / kSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            return cdf + x * pdf;
        }
        case Act::Sigmoid: {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 - s);
        }
        case Act::Tanh: {
            const double th = std::tanh(x);
            return 1.0 - th * th;
        }
    }
    throw std::logic_error("unknown activation");
}

std::string kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Dense: return "dense";
        case LayerKind::ConvTemporal: return "conv_temporal";
        case LayerKind::ConvChannel: return "conv_channel";
        case LayerKind::Activation: return "activation";
        case LayerKind::GlobalMeanPool: return "global_mean_pool";
        case LayerKind::TimeEmbedding: return "time_embedding";
        case LayerKind::Flatten: return "flatten";
    }
    throw std::logic_error("unknown layer kind");
}

LayerKind kind_from_name(const std::string& name) {
    if (name == "dense") return LayerKind::Dense;
    if (name == "conv_temporal") return LayerKind::ConvTemporal;
    if (name == "conv_channel") return LayerKind::ConvChannel;
    if (name == "activation") return LayerKind::Activation;
    if (name == "global_mean_pool") return LayerKind::GlobalMeanPool;
    if (name == "time_embedding") return LayerKind::TimeEmbedding;
    if (name == "flatten") return LayerKind::Flatten;
    throw std::invalid_argument("unknown layer kind: " + name);
}

// Sinusoidal timestep code, interleaved sin/cos pairs.
std::vector<double> sinusoid_code(int timestep, int dim) {
    std::vector<double> e(dim);
    const int pairs = dim / 2;
    for (int i = 0; i < pairs; ++i) {
        const double freq = std::exp(-std::log(10000.0) * (2.0 * i / dim));
        e[2 * i] = std::sin(timestep * freq);
        e[2 * i + 1] = std::cos(timestep * freq);
    }
    return e;
}

int temporal_offset(int kernel) { return kernel / 2; }

}  // namespace

std::string Shape3::str() const {
    std::ostringstream os;
    os << "(" << steps << ", " << channels << ", " << features << ")";
    return os.str();
}

Tensor3 Tensor3::from_matrix(const Matrix& m) {
    Tensor3 t(Shape3{m.rows, m.cols, 1});
    t.v = m.v;
    return t;
}

Matrix Tensor3::to_matrix() const {
    if (shape.features != 1)
        throw std::logic_error("Tensor3::to_matrix requires a single feature map, got " +
                               shape.str());
    Matrix m(shape.steps, shape.channels);
    m.v = v;
    return m;
}

LayerSpec LayerSpec::dense(int in, int out) {
    if (in < 1 || out < 1) throw std::invalid_argument("dense: feature counts must be >= 1");
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.features_in = in;
    s.features_out = out;
    return s;
}

LayerSpec LayerSpec::conv_temporal(int in, int out, int kernel) {
    if (in < 1 || out < 1) throw std::invalid_argument("conv_temporal: feature counts must be >= 1");
    if (kernel < 1) throw std::invalid_argument("conv_temporal: kernel must be >= 1");
    LayerSpec s;
    s.kind = LayerKind::ConvTemporal;
    s.features_in = in;
    s.features_out = out;
    s.kernel = kernel;
    return s;
}

LayerSpec LayerSpec::conv_channel(int in, int out) {
    if (in < 1 || out < 1) throw std::invalid_argument("conv_channel: feature counts must be >= 1");
    LayerSpec s;
    s.kind = LayerKind::ConvChannel;
    s.features_in = in;
    s.features_out = out;
    return s;
}

LayerSpec LayerSpec::activation(Act a) {
    LayerSpec s;
    s.kind = LayerKind::Activation;
    s.act = a;
    return s;
}

LayerSpec LayerSpec::global_mean_pool() {
    LayerSpec s;
    s.kind = LayerKind::GlobalMeanPool;
    return s;
}

LayerSpec LayerSpec::time_embedding(int embed_dim, int features) {
    if (embed_dim < 2 || embed_dim % 2 != 0)
        throw std::invalid_argument("time_embedding: embed_dim must be even and >= 2");
    if (features < 1) throw std::invalid_argument("time_embedding: features must be >= 1");
    LayerSpec s;
    s.kind = LayerKind::TimeEmbedding;
    s.embed_dim = embed_dim;
    s.features_in = features;
    s.features_out = features;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    return s;
}

Architecture::Architecture(int steps, int channels, std::vector<LayerSpec> layer_specs)
    : input{steps, channels, 1}, layers(std::move(layer_specs)) {
    if (steps < 1 || channels < 1)
        throw std::invalid_argument("Architecture: input shape must be positive");
    shapes.push_back(input);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        const Shape3& in = shapes.back();
        Shape3 out = in;
        const std::string where = "layer " + std::to_string(i) + " (" + kind_name(l.kind) + ")";
        switch (l.kind) {
            case LayerKind::Dense:
                if (l.features_in != in.features)
                    throw std::invalid_argument(where + ": expects " +
                                                std::to_string(l.features_in) + " features, got " +
                                                in.str());
                out.features = l.features_out;
                break;
            case LayerKind::ConvTemporal:
                if (l.features_in != in.features)
                    throw std::invalid_argument(where + ": expects " +
                                                std::to_string(l.features_in) + " features, got " +
                                                in.str());
                if (l.kernel > in.steps)
                    throw std::invalid_argument(where + ": kernel " + std::to_string(l.kernel) +
                                                " exceeds " + std::to_string(in.steps) +
                                                " time steps");
                out.features = l.features_out;
                break;
            case LayerKind::ConvChannel:
                if (l.features_in != in.features)
                    throw std::invalid_argument(where + ": expects " +
                                                std::to_string(l.features_in) + " features, got " +
                                                in.str());
                out.channels = 1;
                out.features = l.features_out;
                break;
            case LayerKind::Activation:
                break;
            case LayerKind::GlobalMeanPool:
                out.steps = 1;
                break;
            case LayerKind::TimeEmbedding:
                if (l.features_in != in.features)
                    throw std::invalid_argument(where + ": expects " +
                                                std::to_string(l.features_in) + " features, got " +
                                                in.str());
                has_time_embedding = true;
                break;
            case LayerKind::Flatten:
                out = Shape3{1, 1, in.size()};
                break;
        }
        shapes.push_back(out);
    }
}

std::uint64_t Architecture::fingerprint() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t x) { h = (h ^ x) * 1099511628211ULL; };
    mix(input.steps);
    mix(input.channels);
    for (const auto& l : layers) {
        mix(static_cast<std::uint64_t>(l.kind));
        mix(l.features_in);
        mix(l.features_out);
        mix(l.kernel);
        mix(static_cast<std::uint64_t>(l.act));
        mix(l.embed_dim);
    }
    return h;
}

std::size_t ParamSet::total_size() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.size();
    return n;
}

bool ParamSet::same_shapes(const ParamSet& o) const {
    if (params.size() != o.params.size()) return false;
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i].shape != o.params[i].shape) return false;
    return true;
}

bool ParamSet::all_finite() const {
    for (const auto& p : params)
        for (double x : p.v)
            if (!std::isfinite(x)) return false;
    return true;
}

namespace {

std::size_t shape_count(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

Param make_param(std::string name, std::vector<int> shape) {
    Param p;
    p.name = std::move(name);
    p.shape = std::move(shape);
    p.v.assign(shape_count(p.shape), 0.0);
    return p;
}

struct LayerParams {
    int weight = -1;  // index into ParamSet, -1 if none
    int bias = -1;
    int fan_in = 0;
};

// Registers the parameter tensors of every layer in declaration order.
std::vector<LayerParams> layout_params(const Architecture& arch, ParamSet& out) {
    std::vector<LayerParams> table(arch.layers.size());
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
        const LayerSpec& l = arch.layers[i];
        const Shape3& in = arch.shapes[i];
        const std::string base = "l" + std::to_string(i) + "." + kind_name(l.kind);
        LayerParams lp;
        switch (l.kind) {
            case LayerKind::Dense:
                lp.weight = static_cast<int>(out.params.size());
                out.params.push_back(make_param(base + ".weight", {l.features_out, l.features_in}));
                lp.bias = static_cast<int>(out.params.size());
                out.params.push_back(make_param(base + ".bias", {l.features_out}));
                lp.fan_in = l.features_in;
                break;
            case LayerKind::ConvTemporal:
                lp.weight = static_cast<int>(out.params.size());
                out.params.push_back(
                    make_param(base + ".weight", {l.features_out, l.features_in, l.kernel}));
                lp.bias = static_cast<int>(out.params.size());
                out.params.push_back(make_param(base + ".bias", {l.features_out}));
                lp.fan_in = l.features_in * l.kernel;
                break;
            case LayerKind::ConvChannel:
                lp.weight = static_cast<int>(out.params.size());
                out.params.push_back(
                    make_param(base + ".weight", {l.features_out, in.channels, l.features_in}));
                lp.bias = static_cast<int>(out.params.size());
                out.params.push_back(make_param(base + ".bias", {l.features_out}));
                lp.fan_in = in.channels * l.features_in;
                break;
            case LayerKind::TimeEmbedding:
                lp.weight = static_cast<int>(out.params.size());
                out.params.push_back(make_param(base + ".weight", {in.features, l.embed_dim}));
                lp.bias = static_cast<int>(out.params.size());
                out.params.push_back(make_param(base + ".bias", {in.features}));
                lp.fan_in = l.embed_dim;
                break;
            default:
                break;
        }
        table[i] = lp;
    }
    return table;
}

}  // namespace

ParamSet init_params(const Architecture& arch, std::uint64_t seed) {
    ParamSet set;
    auto table = layout_params(arch, set);
    for (std::size_t i = 0; i < table.size(); ++i) {
        if (table[i].weight < 0) continue;
        Rng rng = make_rng(derive_seed(seed, "init", i));
        Param& w = set.params[table[i].weight];
        const double stddev = 1.0 / std::sqrt(static_cast<double>(table[i].fan_in));
        for (double& x : w.v) x = gaussian(rng, 0.0, stddev);
        // biases stay zero
    }
    return set;
}

Tensor3 forward(const Architecture& arch, const ParamSet& params, const Tensor3& input,
                std::optional<int> timestep, Tape* tape) {
    if (!(input.shape == arch.input))
        throw std::invalid_argument("forward: input shape " + input.shape.str() +
                                    " does not match architecture input " + arch.input.str());
    if (arch.has_time_embedding != timestep.has_value())
        throw std::invalid_argument(arch.has_time_embedding
                                        ? "forward: architecture has a time embedding but no "
                                          "timestep was provided"
                                        : "forward: timestep provided but architecture has no "
                                          "time embedding");

    ParamSet layout_probe;
    auto table = layout_params(arch, layout_probe);
    if (!params.same_shapes(layout_probe))
        throw std::invalid_argument("forward: parameter shapes do not match architecture");

    if (tape) {
        tape->arch_fingerprint = arch.fingerprint();
        tape->timestep = timestep;
        tape->inputs.clear();
        tape->inputs.reserve(arch.layers.size());
    }

    Tensor3 x = input;
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
        const LayerSpec& l = arch.layers[i];
        const Shape3& in_shape = arch.shapes[i];
        const Shape3& out_shape = arch.shapes[i + 1];
        if (tape) tape->inputs.push_back(x);

        Tensor3 y(out_shape);
        switch (l.kind) {
            case LayerKind::Dense: {
                const Param& w = params.params[table[i].weight];
                const Param& b = params.params[table[i].bias];
                for (int t = 0; t < in_shape.steps; ++t)
                    for (int c = 0; c < in_shape.channels; ++c)
                        for (int g = 0; g < l.features_out; ++g) {
                            double acc = b.v[g];
                            for (int f = 0; f < l.features_in; ++f)
                                acc += w.v[static_cast<std::size_t>(g) * l.features_in + f] *
                                       x.at(t, c, f);
                            y.at(t, c, g) = acc;
                        }
                break;
            }
            case LayerKind::ConvTemporal: {
                const Param& w = params.params[table[i].weight];
                const Param& b = params.params[table[i].bias];
                const int off = temporal_offset(l.kernel);
                for (int t = 0; t < in_shape.steps; ++t)
                    for (int c = 0; c < in_shape.channels; ++c)
                        for (int g = 0; g < l.features_out; ++g) {
                            double acc = b.v[g];
                            for (int j = 0; j < l.kernel; ++j) {
                                const int s = t + j - off;
                                if (s < 0 || s >= in_shape.steps) continue;
                                for (int f = 0; f < l.features_in; ++f)
                                    acc += w.v[(static_cast<std::size_t>(g) * l.features_in + f) *
                                                   l.kernel +
                                               j] *
                                           x.at(s, c, f);
                            }
                            y.at(t, c, g) = acc;
                        }
                break;
            }
            case LayerKind::ConvChannel: {
                const Param& w = params.params[table[i].weight];
                const Param& b = params.params[table[i].bias];
                for (int t = 0; t < in_shape.steps; ++t)
                    for (int g = 0; g < l.features_out; ++g) {
                        double acc = b.v[g];
                        for (int c = 0; c < in_shape.channels; ++c)
                            for (int f = 0; f < l.features_in; ++f)
                                acc += w.v[(static_cast<std::size_t>(g) * in_shape.channels + c) *
                                               l.features_in +
                                           f] *
                                       x.at(t, c, f);
                        y.at(t, 0, g) = acc;
                    }
                break;
            }
            case LayerKind::Activation:
                for (std::size_t k = 0; k < x.v.size(); ++k) y.v[k] = apply_act(l.act, x.v[k]);
                break;
            case LayerKind::GlobalMeanPool: {
                const double inv = 1.0 / in_shape.steps;
                for (int c = 0; c < in_shape.channels; ++c)
                    for (int f = 0; f < in_shape.features; ++f) {
                        double acc = 0.0;
                        for (int t = 0; t < in_shape.steps; ++t) acc += x.at(t, c, f);
                        y.at(0, c, f) = acc * inv;
                    }
                break;
            }
            case LayerKind::TimeEmbedding: {
                const Param& w = params.params[table[i].weight];
                const Param& b = params.params[table[i].bias];
                const auto code = sinusoid_code(*timestep, l.embed_dim);
                std::vector<double> shift(in_shape.features);
                for (int f = 0; f < in_shape.features; ++f) {
                    double acc = b.v[f];
                    for (int d = 0; d < l.embed_dim; ++d)
                        acc += w.v[static_cast<std::size_t>(f) * l.embed_dim + d] * code[d];
                    shift[f] = acc;
                }
                for (int t = 0; t < in_shape.steps; ++t)
                    for (int c = 0; c < in_shape.channels; ++c)
                        for (int f = 0; f < in_shape.features; ++f)
                            y.at(t, c, f) = x.at(t, c, f) + shift[f];
                break;
            }
            case LayerKind::Flatten:
                y.v = x.v;
                break;
        }
        x = std::move(y);
    }
    return x;
}

ParamSet backward(const Architecture& arch, const ParamSet& params, const Tape& tape,
                  const Tensor3& output_grad, Tensor3* input_grad) {
    if (tape.arch_fingerprint != arch.fingerprint() || tape.inputs.size() != arch.layers.size())
        throw std::invalid_argument("backward: tape does not match this architecture");
    if (!(output_grad.shape == arch.output_shape()))
        throw std::invalid_argument("backward: output gradient shape " + output_grad.shape.str() +
                                    " does not match network output " + arch.output_shape().str());

    ParamSet grads;
    auto table = layout_params(arch, grads);
    if (!params.same_shapes(grads))
        throw std::invalid_argument("backward: parameter shapes do not match architecture");

    Tensor3 dy = output_grad;
    for (int li = static_cast<int>(arch.layers.size()) - 1; li >= 0; --li) {
        const LayerSpec& l = arch.layers[li];
        const Shape3& in_shape = arch.shapes[li];
        const Tensor3& x = tape.inputs[li];
        if (!(x.shape == in_shape))
            throw std::invalid_argument("backward: tape entry " + std::to_string(li) +
                                        " has stale shape " + x.shape.str());
        Tensor3 dx(in_shape);

        switch (l.kind) {
            case LayerKind::Dense: {
                const Param& w = params.params[table[li].weight];
                Param& dw = grads.params[table[li].weight];
                Param& db = grads.params[table[li].bias];
                for (int t = 0; t < in_shape.steps; ++t)
                    for (int c = 0; c < in_shape.channels; ++c)
                        for (int g = 0; g < l.features_out; ++g) {
                            const double d = dy.at(t, c, g);
                            db.v[g] += d;
                            for (int f = 0; f < l.features_in; ++f) {
                                const std::size_t wi =
                                    static_cast<std::size_t>(g) * l.features_in + f;
                                dw.v[wi] += d * x.at(t, c, f);
                                dx.at(t, c, f) += d * w.v[wi];
                            }
                        }
                break;
            }
            case LayerKind::ConvTemporal: {
                const Param& w = params.params[table[li].weight];
                Param& dw = grads.params[table[li].weight];
                Param& db = grads.params[table[li].bias];
                const int off = temporal_offset(l.kernel);
                for (int t = 0; t < in_shape.steps; ++t)
                    for (int c = 0; c < in_shape.channels; ++c)
                        for (int g = 0; g < l.features_out; ++g) {
                            const double d = dy.at(t, c, g);
                            db.v[g] += d;
                            for (int j = 0; j < l.kernel; ++j) {
                                const int s = t + j - off;
                                if (s < 0 || s >= in_shape.steps) continue;
                                for (int f = 0; f < l.features_in; ++f) {
                                    const std::size_t wi =
                                        (static_cast<std::size_t>(g) * l.features_in + f) *
                                            l.kernel +
                                        j;
                                    dw.v[wi] += d * x.at(s, c, f);
                                    dx.at(s, c, f) += d * w.v[wi];
                                }
                            }
                        }
                break;
            }
            case LayerKind::ConvChannel: {
                const Param& w = params.params[table[li].weight];
                Param& dw = grads.params[table[li].weight];
                Param& db = grads.params[table[li].bias];
                for (int t = 0; t < in_shape.steps; ++t)
                    for (int g = 0; g < l.features_out; ++g) {
                        const double d = dy.at(t, 0, g);
                        db.v[g] += d;
                        for (int c = 0; c < in_shape.channels; ++c)
                            for (int f = 0; f < l.features_in; ++f) {
                                const std::size_t wi =
                                    (static_cast<std::size_t>(g) * in_shape.channels + c) *
                                        l.features_in +
                                    f;
                                dw.v[wi] += d * x.at(t, c, f);
                                dx.at(t, c, f) += d * w.v[wi];
                            }
                    }
                break;
            }
            case LayerKind::Activation:
                for (std::size_t k = 0; k < x.v.size(); ++k)
                    dx.v[k] = dy.v[k] * act_grad(l.act, x.v[k]);
                break;
            case LayerKind::GlobalMeanPool: {
                const double inv = 1.0 / in_shape.steps;
                for (int t = 0; t < in_shape.steps; ++t)
                    for (int c = 0; c < in_shape.channels; ++c)
                        for (int f = 0; f < in_shape.features; ++f)
                            dx.at(t, c, f) = dy.at(0, c, f) * inv;
                break;
            }
            case LayerKind::TimeEmbedding: {
                Param& dw = grads.params[table[li].weight];
                Param& db = grads.params[table[li].bias];
                const auto code = sinusoid_code(*tape.timestep, l.embed_dim);
                for (int f = 0; f < in_shape.features; ++f) {
                    double total = 0.0;
                    for (int t = 0; t < in_shape.steps; ++t)
                        for (int c = 0; c < in_shape.channels; ++c) total += dy.at(t, c, f);
                    db.v[f] += total;
                    for (int d = 0; d < l.embed_dim; ++d)
                        dw.v[static_cast<std::size_t>(f) * l.embed_dim + d] += total * code[d];
                }
                dx = dy;
                break;
            }
            case LayerKind::Flatten:
                dx.v = dy.v;
                break;
        }
        dy = std::move(dx);
    }
    if (input_grad) *input_grad = std::move(dy);
    return grads;
}

OptimizerState make_optimizer_state(const ParamSet& params, AdamConfig config) {
    OptimizerState st;
    st.config = config;
    for (const auto& p : params.params) {
        st.first_moment.push_back(make_param(p.name, p.shape));
        st.second_moment.push_back(make_param(p.name, p.shape));
    }
    return st;
}

void adam_step(ParamSet& params, const ParamSet& grads, OptimizerState& state) {
    if (!params.same_shapes(grads))
        throw std::invalid_argument("adam_step: gradient shapes do not match parameters");
    if (params.params.size() != state.first_moment.size())
        throw std::invalid_argument("adam_step: optimizer state does not match parameters");
    if (!grads.all_finite())
        throw std::runtime_error("adam_step: non-finite gradient, step skipped");

    const AdamConfig& c = state.config;
    state.step += 1;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t p = 0; p < params.params.size(); ++p) {
        auto& theta = params.params[p].v;
        const auto& g = grads.params[p].v;
        auto& m = state.first_moment[p].v;
        auto& v = state.second_moment[p].v;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            theta[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
        }
    }
}

double finite_diff_check(const Architecture& arch, const ParamSet& params, const Tensor3& input,
                         std::optional<int> timestep, double step) {
    if (step <= 0.0) throw std::invalid_argument("finite_diff_check: step must be positive");
    if (params.total_size() == 0) return 0.0;

    auto loss_of = [&](const ParamSet& p) {
        Tensor3 out = forward(arch, p, input, timestep);
        double l = 0.0;
        for (double x : out.v) l += 0.5 * x * x;
        return l;
    };

    Tape tape;
    Tensor3 out = forward(arch, params, input, timestep, &tape);
    Tensor3 dout = out;  // d(0.5*sum(out^2))/dout = out
    ParamSet analytic = backward(arch, params, tape, dout);

    double max_rel = 0.0;
    ParamSet probe = params;
    for (std::size_t p = 0; p < probe.params.size(); ++p) {
        for (std::size_t i = 0; i < probe.params[p].v.size(); ++i) {
            const double original = probe.params[p].v[i];
            probe.params[p].v[i] = original + step;
            const double lp = loss_of(probe);
            probe.params[p].v[i] = original - step;
            const double lm = loss_of(probe);
            probe.params[p].v[i] = original;
            const double numeric = (lp - lm) / (2.0 * step);
            const double exact = analytic.params[p].v[i];
            const double denom = std::max({1e-6, std::abs(numeric), std::abs(exact)});
            max_rel = std::max(max_rel, std::abs(numeric - exact) / denom);
        }
    }
    return max_rel;
}

namespace {

nlohmann::json layer_to_json(const LayerSpec& l) {
    nlohmann::json j;
    j["kind"] = kind_name(l.kind);
    switch (l.kind) {
        case LayerKind::Dense:
        case LayerKind::ConvChannel:
            j["features_in"] = l.features_in;
            j["features_out"] = l.features_out;
            break;
        case LayerKind::ConvTemporal:
            j["features_in"] = l.features_in;
            j["features_out"] = l.features_out;
            j["kernel"] = l.kernel;
            break;
        case LayerKind::Activation:
            j["act"] = act_name(l.act);
            break;
        case LayerKind::TimeEmbedding:
            j["embed_dim"] = l.embed_dim;
            j["features"] = l.features_in;
            break;
        default:
            break;
    }
    return j;
}

LayerSpec layer_from_json(const nlohmann::json& j) {
    const LayerKind kind = kind_from_name(j.at("kind").get<std::string>());
    switch (kind) {
        case LayerKind::Dense:
            return LayerSpec::dense(j.at("features_in"), j.at("features_out"));
        case LayerKind::ConvTemporal:
            return LayerSpec::conv_temporal(j.at("features_in"), j.at("features_out"),
                                            j.at("kernel"));
        case LayerKind::ConvChannel:
            return LayerSpec::conv_channel(j.at("features_in"), j.at("features_out"));
        case LayerKind::Activation:
            return LayerSpec::activation(act_from_name(j.at("act").get<std::string>()));
        case LayerKind::GlobalMeanPool:
            return LayerSpec::global_mean_pool();
        case LayerKind::TimeEmbedding:
            return LayerSpec::time_embedding(j.at("embed_dim"), j.at("features"));
        case LayerKind::Flatten:
            return LayerSpec::flatten();
    }
    throw std::logic_error("unreachable");
}

void write_le_doubles(std::ofstream& out, const std::vector<double>& v) {
    for (double x : v) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, sizeof(bits));
        unsigned char bytes[8];
        for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
        out.write(reinterpret_cast<const char*>(bytes), 8);
    }
}

void read_le_doubles(std::ifstream& in, std::vector<double>& v) {
    for (double& x : v) {
        unsigned char bytes[8];
        in.read(reinterpret_cast<char*>(bytes), 8);
        if (!in) throw std::runtime_error("checkpoint blob truncated");
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
        std::memcpy(&x, &bits, sizeof(x));
    }
}

}  // namespace

void save_checkpoint(const Architecture& arch, const ParamSet& params, const std::string& prefix,
                     const std::string& hyper_json) {
    nlohmann::json manifest;
    manifest["input"] = {{"steps", arch.input.steps}, {"channels", arch.input.channels}};
    manifest["layers"] = nlohmann::json::array();
    for (const auto& l : arch.layers) manifest["layers"].push_back(layer_to_json(l));
    manifest["tensors"] = nlohmann::json::array();
    for (const auto& p : params.params)
        manifest["tensors"].push_back({{"name", p.name}, {"shape", p.shape}});
    manifest["hyper"] = nlohmann::json::parse(hyper_json);
    manifest["dtype"] = "float64-le";

    std::ofstream mj(prefix + ".json");
    if (!mj) throw std::runtime_error("save_checkpoint: cannot write " + prefix + ".json");
    mj << manifest.dump(2) << "\n";

    std::ofstream blob(prefix + ".bin", std::ios::binary);
    if (!blob) throw std::runtime_error("save_checkpoint: cannot write " + prefix + ".bin");
    for (const auto& p : params.params) write_le_doubles(blob, p.v);
}

void load_checkpoint(const std::string& prefix, Architecture& arch, ParamSet& params,
                     std::string* hyper_json) {
    std::ifstream mj(prefix + ".json");
    if (!mj) throw std::runtime_error("load_checkpoint: cannot open " + prefix + ".json");
    nlohmann::json manifest;
    mj >> manifest;

    std::vector<LayerSpec> layers;
    for (const auto& lj : manifest.at("layers")) layers.push_back(layer_from_json(lj));
    arch = Architecture(manifest.at("input").at("steps"), manifest.at("input").at("channels"),
                        std::move(layers));

    params.params.clear();
    for (const auto& tj : manifest.at("tensors"))
        params.params.push_back(
            make_param(tj.at("name").get<std::string>(), tj.at("shape").get<std::vector<int>>()));

    ParamSet expected;
    layout_params(arch, expected);
    if (!params.same_shapes(expected))
        throw std::runtime_error("load_checkpoint: tensor shapes do not match architecture");

    std::ifstream blob(prefix + ".bin", std::ios::binary);
    if (!blob) throw std::runtime_error("load_checkpoint: cannot open " + prefix + ".bin");
    for (auto& p : params.params) read_le_doubles(blob, p.v);

    if (hyper_json) *hyper_json = manifest.at("hyper").dump();
}

std::string act_name(Act a) {
    switch (a) {
        case Act::Relu: return "relu";
        case Act::Gelu: return "gelu";
        case Act::Sigmoid: return "sigmoid";
        case Act::Tanh: return "tanh";
    }
    throw std::logic_error("unknown activation");
}

Act act_from_name(const std::string& name) {
    if (name == "relu") return Act::Relu;
    if (name == "gelu") return Act::Gelu;
    if (name == "sigmoid") return Act::Sigmoid;
    if (name == "tanh") return Act::Tanh;
    throw std::invalid_argument("unknown activation: " + name);
}

}  // namespace tsdet
