#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "tsdet/nn.hpp"
#include "tsdet/rng.hpp"

using namespace tsdet;

namespace {

Tensor3 random_input(const Architecture& arch, std::uint64_t seed) {
    Tensor3 x(arch.input);
    Rng rng = make_rng(seed);
    for (double& v : x.v) v = gaussian(rng);
    return x;
}

Param* find_param(ParamSet& set, const std::string& name) {
    for (auto& p : set.params)
        if (p.name == name) return &p;
    return nullptr;
}

}  // namespace

TEST_CASE("architecture validates shapes at construction") {
    CHECK_NOTHROW(Architecture(8, 2,
                               {LayerSpec::conv_temporal(1, 4, 3), LayerSpec::activation(Act::Relu),
                                LayerSpec::conv_channel(4, 4), LayerSpec::global_mean_pool(),
                                LayerSpec::dense(4, 1), LayerSpec::activation(Act::Sigmoid)}));
    // feature mismatch between layers
    CHECK_THROWS_AS(Architecture(8, 2, {LayerSpec::conv_temporal(1, 4, 3), LayerSpec::dense(8, 1)}),
                    std::invalid_argument);
    // kernel longer than the window
    CHECK_THROWS_AS(Architecture(4, 1, {LayerSpec::conv_temporal(1, 2, 5)}),
                    std::invalid_argument);
}

TEST_CASE("init_params is deterministic, biases zero, variance-scaled") {
    Architecture arch(4, 1, {LayerSpec::flatten(), LayerSpec::dense(4, 4)});
    const ParamSet a = init_params(arch, 42);
    const ParamSet b = init_params(arch, 42);
    REQUIRE(a.params.size() == b.params.size());
    for (std::size_t i = 0; i < a.params.size(); ++i) CHECK(a.params[i].v == b.params[i].v);

    for (const auto& p : a.params)
        if (p.name.find("bias") != std::string::npos)
            for (double x : p.v) CHECK(x == 0.0);

    // dense 100 -> 1: weight standard deviation about 1/sqrt(100)
    Architecture wide(100, 1, {LayerSpec::flatten(), LayerSpec::dense(100, 10)});
    double sum = 0.0, sum_sq = 0.0;
    std::size_t n = 0;
    const ParamSet w = init_params(wide, 5);
    for (const auto& p : w.params)
        if (p.name.find("weight") != std::string::npos)
            for (double x : p.v) {
                sum += x;
                sum_sq += x * x;
                ++n;
            }
    const double stddev = std::sqrt(sum_sq / n - (sum / n) * (sum / n));
    CHECK(stddev == doctest::Approx(0.1).epsilon(0.30));
}

TEST_CASE("forward identity and analytic spot checks") {
    SUBCASE("identity dense layer") {
        Architecture arch(3, 2, {LayerSpec::dense(1, 1)});
        ParamSet params = init_params(arch, 0);
        find_param(params, "l0.dense.weight")->v = {1.0};
        Tensor3 x = random_input(arch, 1);
        const Tensor3 y = forward(arch, params, x);
        CHECK(y.v == x.v);
    }
    SUBCASE("sigmoid of zero is one half") {
        Architecture arch(1, 1, {LayerSpec::activation(Act::Sigmoid)});
        Tensor3 x(arch.input);
        const Tensor3 y = forward(arch, init_params(arch, 0), x);
        CHECK(y.v[0] == 0.5);
    }
    SUBCASE("temporal conv with kernel [1,0,0] shifts the input") {
        Architecture arch(5, 1, {LayerSpec::conv_temporal(1, 1, 3)});
        ParamSet params = init_params(arch, 0);
        find_param(params, "l0.conv_temporal.weight")->v = {1.0, 0.0, 0.0};
        Tensor3 x(arch.input);
        for (int t = 0; t < 5; ++t) x.at(t, 0, 0) = t + 1.0;
        const Tensor3 y = forward(arch, params, x);
        // same zero padding anchored at k/2: y[t] = x[t-1]
        CHECK(y.at(0, 0, 0) == 0.0);
        for (int t = 1; t < 5; ++t) CHECK(y.at(t, 0, 0) == x.at(t - 1, 0, 0));
    }
    SUBCASE("forward is bit-deterministic") {
        Architecture arch(6, 2,
                          {LayerSpec::conv_temporal(1, 3, 3), LayerSpec::activation(Act::Gelu),
                           LayerSpec::dense(3, 1)});
        const ParamSet params = init_params(arch, 9);
        const Tensor3 x = random_input(arch, 2);
        const Tensor3 y1 = forward(arch, params, x);
        const Tensor3 y2 = forward(arch, params, x);
        CHECK(y1.v == y2.v);
    }
    SUBCASE("shape and timestep contract") {
        Architecture arch(4, 1, {LayerSpec::time_embedding(4, 1), LayerSpec::dense(1, 1)});
        const ParamSet params = init_params(arch, 0);
        Tensor3 x(arch.input);
        CHECK_THROWS_AS(forward(arch, params, x), std::invalid_argument);  // missing timestep
        CHECK_NOTHROW(forward(arch, params, x, 3));
        Architecture plain(4, 1, {LayerSpec::dense(1, 1)});
        CHECK_THROWS_AS(forward(plain, init_params(plain, 0), x, 3), std::invalid_argument);
        Tensor3 wrong(Shape3{5, 1, 1});
        CHECK_THROWS_AS(forward(plain, init_params(plain, 0), wrong), std::invalid_argument);
    }
}

TEST_CASE("backward matches the closed form for a single dense layer") {
    // loss = 0.5 * ||W x - y||^2 with y = 0 gives dW = (W x) x^T
    Architecture arch(1, 1, {LayerSpec::flatten(), LayerSpec::dense(1, 2)});
    ParamSet params = init_params(arch, 3);
    Tensor3 x(arch.input);
    x.v[0] = 1.7;
    Tape tape;
    const Tensor3 out = forward(arch, params, x, std::nullopt, &tape);
    const ParamSet grads = backward(arch, params, tape, out);
    const Param* w = find_param(params, "l1.dense.weight");
    for (int g = 0; g < 2; ++g) {
        const double expected = (w->v[g] * 1.7) * 1.7;
        CHECK(grads.params[0].v[g] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("backward rejects stale tapes") {
    Architecture a(4, 1, {LayerSpec::dense(1, 2)});
    Architecture b(4, 1, {LayerSpec::dense(1, 3)});
    const ParamSet pa = init_params(a, 0);
    const ParamSet pb = init_params(b, 0);
    Tape tape;
    const Tensor3 out = forward(a, pa, random_input(a, 4), std::nullopt, &tape);
    Tensor3 dout(b.output_shape());
    CHECK_THROWS_AS(backward(b, pb, tape, dout), std::invalid_argument);
}

TEST_CASE("finite differences agree for every layer kind") {
    const double step = 1e-5;
    const double tol = 1e-4;

    Architecture dense_net(4, 2,
                           {LayerSpec::flatten(), LayerSpec::dense(8, 5),
                            LayerSpec::activation(Act::Sigmoid), LayerSpec::dense(5, 2)});
    Architecture temporal_net(6, 2,
                              {LayerSpec::conv_temporal(1, 3, 3), LayerSpec::activation(Act::Gelu),
                               LayerSpec::conv_temporal(3, 2, 3), LayerSpec::activation(Act::Tanh),
                               LayerSpec::dense(2, 1)});
    Architecture channel_net(5, 3,
                             {LayerSpec::conv_temporal(1, 4, 3), LayerSpec::activation(Act::Relu),
                              LayerSpec::conv_channel(4, 3), LayerSpec::global_mean_pool(),
                              LayerSpec::dense(3, 1), LayerSpec::activation(Act::Sigmoid)});
    Architecture embed_net(5, 2,
                           {LayerSpec::conv_temporal(1, 3, 3), LayerSpec::time_embedding(4, 3),
                            LayerSpec::activation(Act::Gelu), LayerSpec::dense(3, 1)});

    int idx = 0;
    for (const Architecture* arch : {&dense_net, &temporal_net, &channel_net, &embed_net}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const ParamSet params = init_params(*arch, derive_seed(seed, "fd", idx));
            const Tensor3 x = random_input(*arch, seed + 100 * idx);
            const std::optional<int> t =
                arch->has_time_embedding ? std::optional<int>(static_cast<int>(seed) + 1)
                                         : std::nullopt;
            CHECK(finite_diff_check(*arch, params, x, t, step) < tol);
        }
        ++idx;
    }

    SUBCASE("parameter-free architecture returns zero") {
        Architecture act_only(4, 1, {LayerSpec::activation(Act::Tanh)});
        const ParamSet none = init_params(act_only, 0);
        CHECK(finite_diff_check(act_only, none, random_input(act_only, 8), std::nullopt, step) ==
              0.0);
    }
}

TEST_CASE("adam_step behavior") {
    Architecture arch(2, 1, {LayerSpec::dense(1, 2)});
    ParamSet params = init_params(arch, 1);
    OptimizerState state = make_optimizer_state(params);

    SUBCASE("zero gradient leaves parameters unchanged") {
        ParamSet zero = params;
        for (auto& p : zero.params) std::fill(p.v.begin(), p.v.end(), 0.0);
        const ParamSet before = params;
        adam_step(params, zero, state);
        CHECK(state.step == 1);
        for (std::size_t i = 0; i < params.params.size(); ++i)
            CHECK(params.params[i].v == before.params[i].v);
    }
    SUBCASE("first step moves by about lr in the gradient sign") {
        ParamSet grads = params;
        for (auto& p : grads.params) std::fill(p.v.begin(), p.v.end(), 0.5);
        const ParamSet before = params;
        adam_step(params, grads, state);
        // bias correction makes m_hat/sqrt(v_hat) = sign(g) at t=1
        for (std::size_t i = 0; i < params.params.size(); ++i)
            for (std::size_t k = 0; k < params.params[i].v.size(); ++k)
                CHECK(params.params[i].v[k] ==
                      doctest::Approx(before.params[i].v[k] - 1e-3).epsilon(1e-4));
    }
    SUBCASE("non-finite gradient is rejected and parameters stay put") {
        ParamSet grads = params;
        grads.params[0].v[0] = std::numeric_limits<double>::quiet_NaN();
        const ParamSet before = params;
        CHECK_THROWS_AS(adam_step(params, grads, state), std::runtime_error);
        for (std::size_t i = 0; i < params.params.size(); ++i)
            CHECK(params.params[i].v == before.params[i].v);
    }
    SUBCASE("shape mismatch is rejected") {
        Architecture other(2, 1, {LayerSpec::dense(1, 3)});
        const ParamSet grads = init_params(other, 2);
        CHECK_THROWS_AS(adam_step(params, grads, state), std::invalid_argument);
    }
}

TEST_CASE("checkpoint json+blob round trip") {
    Architecture arch(6, 2,
                      {LayerSpec::conv_temporal(1, 3, 3), LayerSpec::time_embedding(4, 3),
                       LayerSpec::activation(Act::Gelu), LayerSpec::dense(3, 1)});
    const ParamSet params = init_params(arch, 77);
    const std::string prefix =
        (std::filesystem::temp_directory_path() / "tsdet_ckpt").string();
    save_checkpoint(arch, params, prefix, "{\"note\":1}");

    Architecture loaded_arch;
    ParamSet loaded;
    std::string hyper;
    load_checkpoint(prefix, loaded_arch, loaded, &hyper);
    CHECK(loaded_arch.fingerprint() == arch.fingerprint());
    REQUIRE(loaded.params.size() == params.params.size());
    for (std::size_t i = 0; i < params.params.size(); ++i)
        CHECK(loaded.params[i].v == params.params[i].v);
    CHECK(hyper.find("note") != std::string::npos);
}
