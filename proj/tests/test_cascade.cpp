#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "hume/cascade.hpp"

using namespace hume;
using namespace hume::cascade;

namespace {

// Single-layer field with constant output, shaped for `cfg`.
nnet::MlpParams constant_s1_field(const S1Config& cfg, std::vector<float> out) {
    nnet::DenseLayer l;
    l.in = cfg.flow_view().field_input_dim();
    l.out = cfg.chunk_dim();
    l.w.assign(static_cast<std::size_t>(l.in) * l.out, 0.0f);
    l.b = std::move(out);
    l.act = nnet::Activation::Identity;
    nnet::MlpParams p;
    p.layers.push_back(std::move(l));
    return p;
}

S1Config tiny_config() {
    S1Config cfg;
    cfg.obs_dim = 3;
    cfg.sub_horizon = 2;
    cfg.act_dim = 1;
    cfg.hidden = 32;
    return cfg;
}

// Synthetic task shared with the planner tests: actions are Gaussian around
// a linear function of the observation.
constexpr float kSynthSigma = 0.3f;

void synth_mean(const float* o, float* mu) {
    mu[0] = 0.6f * o[0] - 0.2f * o[1];
    mu[1] = 0.3f * o[0] - 0.4f * o[1];
}

S1Config synth_config() {
    S1Config cfg;
    cfg.obs_dim = 2;
    cfg.sub_horizon = 1;
    cfg.act_dim = 2;
    cfg.hidden = 64;
    return cfg;
}

// Trains the refiner on the synthetic task once; reused across cases.
const nnet::MlpParams& synth_refiner() {
    static nnet::MlpParams field = [] {
        S1Config cfg = synth_config();
        Rng init(501);
        nnet::MlpParams f = make_s1_net(cfg, init);
        nnet::AdamState adam = nnet::AdamState::zeros_like(f);
        nnet::AdamHyper hyper;
        hyper.lr = 2e-3f;
        nnet::MlpGrads grads = nnet::MlpGrads::zeros_like(f);
        Rng data(502);
        Rng noise(503);
        const int batch = 128;
        flow::FlowBatch b;
        b.obs_dim = 2;
        b.horizon = 1;
        b.act_dim = 2;
        b.obs.resize(batch * 2);
        b.actions.resize(batch * 2);
        for (int step = 0; step < 4000; ++step) {
            for (int i = 0; i < batch; ++i) {
                float* o = b.obs.data() + 2 * i;
                float* a = b.actions.data() + 2 * i;
                o[0] = static_cast<float>(data.uniform(-1.0, 1.0));
                o[1] = static_cast<float>(data.uniform(-1.0, 1.0));
                synth_mean(o, a);
                a[0] += kSynthSigma * data.normal_f();
                a[1] += kSynthSigma * data.normal_f();
            }
            s1_loss_and_grad(f, cfg, b, noise, grads);
            nnet::adam_step(f, grads, adam, hyper);
        }
        return f;
    }();
    return field;
}

}  // namespace

TEST_CASE("s1 config validation and flow view") {
    S1Config cfg;
    cfg.obs_dim = 4;
    CHECK_NOTHROW(cfg.validate());

    flow::FlowConfig fv = cfg.flow_view();
    CHECK(fv.obs_dim == 4);
    CHECK(fv.horizon == 15);
    CHECK(fv.act_dim == 2);
    CHECK(fv.hidden == 128);
    CHECK(fv.candidates == 1);
    CHECK(cfg.chunk_dim() == 30);
    CHECK(fv.field_input_dim() == 4 + 30 + 16);

    S1Config bad = cfg;
    bad.obs_dim = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.sub_horizon = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.delta = 0.3;  // 0.3 * 10 != 1
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.time_embed = 7;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.hidden = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("segmentation cuts in temporal order and inherits the noise level") {
    flow::ActionChunk chunk = flow::make_chunk(30, 2, 0.0f, 0.7f);
    for (int i = 0; i < 60; ++i) chunk.values[static_cast<std::size_t>(i)] = static_cast<float>(i);

    auto subs = segment(chunk, 15);
    REQUIRE(subs.size() == 2);
    for (int k = 0; k < 2; ++k) {
        CHECK(subs[k].k == k);
        CHECK(subs[k].horizon == 15);
        CHECK(subs[k].act_dim == 2);
        CHECK(subs[k].tau_star == 0.7f);
        CHECK(subs[k].dim() == 30);
        for (int i = 0; i < 30; ++i)
            CHECK(subs[k].values[static_cast<std::size_t>(i)] == static_cast<float>(30 * k + i));
    }

    SUBCASE("h equal to H yields the parent itself") {
        auto whole = segment(chunk, 30);
        REQUIRE(whole.size() == 1);
        CHECK(whole[0].values == chunk.values);
        CHECK(whole[0].tau_star == chunk.noise_level);
        CHECK(whole[0].k == 0);
    }

    SUBCASE("non-divisible h fails naming both horizons") {
        try {
            segment(chunk, 7);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("7") != std::string::npos);
            CHECK(msg.find("30") != std::string::npos);
        }
        CHECK_THROWS_AS(segment(chunk, 0), ConfigError);
    }

    SUBCASE("malformed chunks are shape errors") {
        flow::ActionChunk broken = chunk;
        broken.values.pop_back();
        CHECK_THROWS_AS(segment(broken, 15), ShapeError);
    }
}

TEST_CASE("segmentation round-trips exactly at every divisor") {
    Rng rng(61);
    flow::ActionChunk chunk = flow::make_chunk(12, 3, 0.0f, 0.65f);
    for (auto& v : chunk.values) v = rng.normal_f();

    for (int h : {1, 2, 3, 4, 6, 12}) {
        auto subs = segment(chunk, h);
        CHECK(static_cast<int>(subs.size()) == 12 / h);
        flow::ActionChunk back = concatenate(subs);
        CHECK(back.horizon == chunk.horizon);
        CHECK(back.act_dim == chunk.act_dim);
        CHECK(back.noise_level == chunk.noise_level);
        CHECK(std::memcmp(back.values.data(), chunk.values.data(),
                          chunk.values.size() * sizeof(float)) == 0);
    }
}

TEST_CASE("concatenate rejects disorder and shape drift") {
    flow::ActionChunk chunk = flow::make_chunk(4, 2, 1.5f, 0.8f);
    auto subs = segment(chunk, 2);
    REQUIRE(subs.size() == 2);

    auto swapped = subs;
    std::swap(swapped[0], swapped[1]);
    CHECK_THROWS_AS(concatenate(swapped), ConfigError);

    auto drifted = subs;
    drifted[1].tau_star = 0.3f;
    CHECK_THROWS_AS(concatenate(drifted), ConfigError);

    auto misshapen = subs;
    misshapen[1].values.pop_back();
    CHECK_THROWS_AS(concatenate(misshapen), ShapeError);

    std::vector<SubChunk> none;
    CHECK_THROWS_AS(concatenate(none), ShapeError);
}

TEST_CASE("refiner net matches the configured architecture") {
    S1Config cfg;
    cfg.obs_dim = 2;
    Rng rng(62);
    nnet::MlpParams f = make_s1_net(cfg, rng);
    REQUIRE(f.layers.size() == 3);
    CHECK(f.input_dim() == 2 + 30 + 16);
    CHECK(f.layers[0].out == 128);
    CHECK(f.layers[1].out == 128);
    CHECK(f.output_dim() == 30);
    CHECK(f.layers[0].act == nnet::Activation::Silu);
    CHECK(f.layers[1].act == nnet::Activation::Silu);
    CHECK(f.layers[2].act == nnet::Activation::Identity);
}

TEST_CASE("refiner loss matches a hand-computed residual") {
    S1Config cfg = tiny_config();
    flow::FlowBatch b;
    b.obs_dim = 3;
    b.horizon = 2;
    b.act_dim = 1;
    b.obs = {0.3f, -0.7f, 0.1f};
    b.actions = {0.4f, -0.2f};

    nnet::MlpParams f = constant_s1_field(cfg, {1.0f, -1.0f});
    const std::vector<float> omegas = {0.5f};
    const std::vector<float> eps = {0.2f, 0.6f};
    nnet::MlpGrads grads;
    const float loss = s1_loss_and_grad_terms(f, cfg, b, omegas, eps, grads);
    // Targets A - eps = [0.2, -0.8]; residuals [0.8, -0.2].
    CHECK(loss == doctest::Approx(0.8f * 0.8f + 0.2f * 0.2f));

    // And the refiner loss is the planner loss evaluated at sub scale.
    nnet::MlpGrads fgrads;
    const float floss = flow::fm_loss_and_grad_terms(f, cfg.flow_view(), b, omegas, eps, fgrads);
    CHECK(loss == floss);
    for (std::size_t i = 0; i < grads.layers[0].w.size(); ++i)
        CHECK(grads.layers[0].w[i] == fgrads.layers[0].w[i]);
}

TEST_CASE("refiner gradient matches finite differences") {
    S1Config cfg = tiny_config();
    Rng rng(63);
    nnet::MlpParams field = make_s1_net(cfg, rng);
    flow::FlowBatch b;
    b.obs_dim = 3;
    b.horizon = 2;
    b.act_dim = 1;
    b.obs = {0.3f, -0.7f, 0.1f};
    b.actions = {0.4f, -0.2f};
    const std::vector<float> omegas = {0.62f};
    const std::vector<float> eps = {-0.8f, 1.1f};

    std::vector<float> input(static_cast<std::size_t>(cfg.flow_view().field_input_dim()));
    std::vector<float> feat;
    float* x = input.data();
    for (float v : b.obs) *x++ = v;
    for (int i = 0; i < cfg.chunk_dim(); ++i)
        *x++ = omegas[0] * b.actions[i] + (1.0f - omegas[0]) * eps[i];
    flow::time_features(omegas[0], cfg.time_embed, feat);
    for (float v : feat) *x++ = v;
    std::vector<float> target(static_cast<std::size_t>(cfg.chunk_dim()));
    for (int i = 0; i < cfg.chunk_dim(); ++i) target[i] = b.actions[i] - eps[i];

    auto loss_fn = [&](std::span<const double> y) {
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double r = y[i] - target[i];
            s += r * r;
        }
        return s;
    };
    auto loss_grad = [&](std::span<const float> y) {
        std::vector<float> up(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) up[i] = 2.0f * (y[i] - target[i]);
        return up;
    };
    auto fd = nnet::grad_check(field, input, loss_fn, loss_grad);
    CHECK(fd.max_rel_err < 1e-3);
}

TEST_CASE("single sub-datum converges to the constant optimum") {
    S1Config cfg = tiny_config();
    cfg.hidden = 64;
    Rng rng(17);
    nnet::MlpParams field = make_s1_net(cfg, rng);
    flow::FlowBatch b;
    b.obs_dim = 3;
    b.horizon = 2;
    b.act_dim = 1;
    b.obs = {0.3f, -0.7f, 0.1f};
    b.actions = {0.4f, -0.2f};
    const std::vector<float> eps = {0.9f, 0.5f};

    nnet::AdamState adam = nnet::AdamState::zeros_like(field);
    nnet::AdamHyper hyper;
    nnet::MlpGrads grads = nnet::MlpGrads::zeros_like(field);
    Rng omega_rng(18);
    for (int step = 0; step < 2000; ++step) {
        hyper.lr = step < 1000 ? 1e-2f : (step < 1600 ? 1e-3f : 1e-4f);
        std::vector<float> omegas = {static_cast<float>(omega_rng.uniform())};
        s1_loss_and_grad_terms(field, cfg, b, omegas, eps, grads);
        nnet::adam_step(field, grads, adam, hyper);
    }
    for (float omega : {0.0f, 0.25f, 0.5f, 0.75f, 0.99f}) {
        std::vector<float> omegas = {omega};
        const float loss = s1_loss_and_grad_terms(field, cfg, b, omegas, eps, grads);
        CHECK(loss < 1e-4f);
    }
}

TEST_CASE("cascade_denoise oracles: zero field, constant field, errors") {
    S1Config cfg = tiny_config();
    const std::vector<float> obs = {0.2f, -0.1f, 0.5f};
    SubChunk sub;
    sub.horizon = 2;
    sub.act_dim = 1;
    sub.values = {1.0f, -2.0f};
    sub.tau_star = 0.6f;
    sub.k = 1;

    SUBCASE("zero field returns the input bit for bit") {
        nnet::MlpParams zero = constant_s1_field(cfg, {0.0f, 0.0f});
        SubChunk out = cascade_denoise(zero, cfg, sub, obs);
        CHECK(out.values == sub.values);
        CHECK(out.tau_star == 1.0f);
        CHECK(out.k == 1);
        CHECK(out.horizon == 2);
    }

    SUBCASE("constant field telescopes to input + c") {
        nnet::MlpParams f = constant_s1_field(cfg, {0.5f, -1.25f});
        SubChunk out = cascade_denoise(f, cfg, sub, obs);
        CHECK(out.values[0] == doctest::Approx(1.5f).epsilon(1e-5));
        CHECK(out.values[1] == doctest::Approx(-3.25f).epsilon(1e-5));
        CHECK(out.tau_star == 1.0f);
    }

    SUBCASE("determinism: same inputs, same bits") {
        Rng rng(66);
        nnet::MlpParams f = make_s1_net(cfg, rng);
        SubChunk a = cascade_denoise(f, cfg, sub, obs);
        SubChunk b = cascade_denoise(f, cfg, sub, obs);
        CHECK(std::memcmp(a.values.data(), b.values.data(),
                          a.values.size() * sizeof(float)) == 0);
    }

    SUBCASE("shape and numeric guards") {
        nnet::MlpParams f = constant_s1_field(cfg, {0.0f, 0.0f});
        SubChunk wrong = sub;
        wrong.horizon = 3;
        wrong.values = {1.0f, 2.0f, 3.0f};
        CHECK_THROWS_AS(cascade_denoise(f, cfg, wrong, obs), ShapeError);

        SubChunk poisoned = sub;
        poisoned.values[0] = std::nanf("");
        CHECK_THROWS_AS(cascade_denoise(f, cfg, poisoned, obs), NumericError);

        std::vector<float> short_obs = {1.0f};
        CHECK_THROWS_AS(cascade_denoise(f, cfg, sub, short_obs), ShapeError);
    }
}

TEST_CASE("trained refiner leaves clean actions essentially in place") {
    const nnet::MlpParams& field = synth_refiner();
    S1Config cfg = synth_config();
    Rng rng(71);

    const int draws = 3000;
    double shift[2] = {0.0, 0.0};
    for (int i = 0; i < draws; ++i) {
        float o[2] = {static_cast<float>(rng.uniform(-1.0, 1.0)),
                      static_cast<float>(rng.uniform(-1.0, 1.0))};
        float a[2];
        synth_mean(o, a);
        a[0] += kSynthSigma * rng.normal_f();
        a[1] += kSynthSigma * rng.normal_f();

        SubChunk sub;
        sub.horizon = 1;
        sub.act_dim = 2;
        sub.values = {a[0], a[1]};
        sub.tau_star = 1.0f;  // already clean: refinement, not replacement
        SubChunk out = cascade_denoise(field, cfg, sub, std::span<const float>(o, 2));
        shift[0] += out.values[0] - a[0];
        shift[1] += out.values[1] - a[1];
    }
    CHECK(std::abs(shift[0] / draws) < 0.05);
    CHECK(std::abs(shift[1] / draws) < 0.05);
}

TEST_CASE("refinement shrinks as the input noise level rises") {
    const nnet::MlpParams& field = synth_refiner();
    S1Config cfg = synth_config();
    Rng rng(72);

    const float levels[5] = {0.6f, 0.7f, 0.8f, 0.9f, 1.0f};
    double disp[5] = {0, 0, 0, 0, 0};
    const int draws = 3000;
    for (int i = 0; i < draws; ++i) {
        float o[2] = {static_cast<float>(rng.uniform(-1.0, 1.0)),
                      static_cast<float>(rng.uniform(-1.0, 1.0))};
        float a[2];
        synth_mean(o, a);
        a[0] += kSynthSigma * rng.normal_f();
        a[1] += kSynthSigma * rng.normal_f();
        const float e0 = rng.normal_f();
        const float e1 = rng.normal_f();

        for (int l = 0; l < 5; ++l) {
            const float tau = levels[l];
            SubChunk sub;
            sub.horizon = 1;
            sub.act_dim = 2;
            sub.values = {tau * a[0] + (1.0f - tau) * e0, tau * a[1] + (1.0f - tau) * e1};
            sub.tau_star = tau;
            SubChunk out = cascade_denoise(field, cfg, sub, std::span<const float>(o, 2));
            disp[l] += 0.5 * (std::abs(out.values[0] - sub.values[0]) +
                              std::abs(out.values[1] - sub.values[1]));
        }
    }
    for (int l = 0; l < 5; ++l) disp[l] /= draws;
    for (int l = 1; l < 5; ++l) {
        INFO("levels ", levels[l - 1], " -> ", levels[l], ": ", disp[l - 1], " -> ", disp[l]);
        CHECK(disp[l] < disp[l - 1]);
    }
}

TEST_CASE("refinement conditions on the fresh observation") {
    const nnet::MlpParams& field = synth_refiner();
    S1Config cfg = synth_config();

    SubChunk sub;
    sub.horizon = 1;
    sub.act_dim = 2;
    sub.values = {0.1f, -0.1f};
    sub.tau_star = 0.8f;

    const std::vector<float> obs_a = {0.8f, -0.5f};
    const std::vector<float> obs_b = {-0.6f, 0.7f};
    SubChunk out_a = cascade_denoise(field, cfg, sub, obs_a);
    SubChunk out_b = cascade_denoise(field, cfg, sub, obs_b);
    CHECK(std::abs(out_a.values[0] - out_b.values[0]) > 1e-3f);
}
