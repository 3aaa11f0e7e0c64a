#include "hume/pipeline.hpp"

#include <algorithm>
#include <cstdio>

namespace hume::pipeline {

namespace {

float clamp_mag(float v, float bound) { return std::clamp(v, -bound, bound); }

}  // namespace

std::vector<data::Episode> collect_expert_episodes(envsim::EnvId env, int episodes,
                                                   std::uint64_t base_seed, float noise) {
    if (episodes < 1) throw ConfigError("collect_expert_episodes: episodes must be >= 1");
    if (noise < 0.0f) throw ConfigError("collect_expert_episodes: noise must be >= 0");
    std::vector<data::Episode> out;
    out.reserve(static_cast<std::size_t>(episodes));
    for (int e = 0; e < episodes; ++e) {
        const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(e);
        auto [state, obs] = envsim::reset(env, seed);
        Rng jitter = Rng(seed).split(99);
        data::Episode ep;
        ep.env = env;
        ep.obs_dim = static_cast<std::uint32_t>(envsim::obs_dim(env));
        ep.act_dim = 2;
        bool done = false;
        while (!done) {
            envsim::Vec2 a = envsim::expert_action(state);
            if (noise > 0.0f) {
                a.x += noise * envsim::kActionMax * jitter.normal_f();
                a.y += noise * envsim::kActionMax * jitter.normal_f();
            }
            a.x = clamp_mag(a.x, envsim::kActionMax);
            a.y = clamp_mag(a.y, envsim::kActionMax);
            ep.obs.insert(ep.obs.end(), obs.begin(), obs.end());
            ep.act.push_back(a.x);
            ep.act.push_back(a.y);
            ep.rew.push_back(0.0f);
            envsim::StepOut step = envsim::step(state, a);
            state = step.state;
            obs = step.obs;
            done = step.done;
            ep.success = step.success;
        }
        out.push_back(data::label_rewards(std::move(ep)));
    }
    return out;
}

std::vector<data::Episode> collect_mixed_episodes(envsim::EnvId env, int episodes,
                                                  std::uint64_t base_seed,
                                                  const std::vector<float>& noise_levels) {
    if (noise_levels.empty())
        throw ConfigError("collect_mixed_episodes: need at least one noise level");
    std::vector<data::Episode> out;
    out.reserve(static_cast<std::size_t>(episodes));
    for (int e = 0; e < episodes; ++e) {
        const float noise = noise_levels[static_cast<std::size_t>(e) % noise_levels.size()];
        auto one = collect_expert_episodes(env, 1, base_seed + static_cast<std::uint64_t>(e),
                                           noise);
        out.push_back(std::move(one.front()));
    }
    return out;
}

nnet::MlpParams train_field(const flow::FlowConfig& cfg, const std::vector<data::ChunkRow>& rows,
                            const data::NormStats& stats, const TrainKnobs& knobs) {
    cfg.validate();
    if (rows.empty()) throw ConfigError("train_field: no training rows");
    if (knobs.steps < 1 || knobs.batch < 1 || knobs.lr <= 0.0f)
        throw ConfigError("train_field: steps and batch must be >= 1 and lr > 0");
    if (static_cast<int>(rows.front().obs.size()) != cfg.obs_dim ||
        static_cast<int>(rows.front().actions.size()) != cfg.chunk_dim())
        throw ShapeError("train_field: rows do not match the flow config dims");

    Rng rng(knobs.seed);
    nnet::MlpParams field = flow::make_field_net(cfg, rng);
    nnet::MlpGrads grads = nnet::MlpGrads::zeros_like(field);
    nnet::AdamState adam = nnet::AdamState::zeros_like(field);
    const nnet::AdamHyper hyper{knobs.lr, 0.9f, 0.999f, 1e-8f};

    std::vector<int> idx(static_cast<std::size_t>(knobs.batch));
    for (int step = 0; step < knobs.steps; ++step) {
        for (int& i : idx) i = rng.uniform_int(static_cast<int>(rows.size()));
        const flow::FlowBatch batch = flow::batch_from_chunks(rows, idx, stats);
        const float loss = flow::fm_loss_and_grad(field, cfg, batch, rng, grads);
        nnet::adam_step(field, grads, adam, hyper);
        if (knobs.log_every > 0 && (step % knobs.log_every == 0 || step + 1 == knobs.steps))
            std::fprintf(stderr, "  field step %6d/%d  loss %.6f\n", step + 1, knobs.steps,
                         static_cast<double>(loss));
    }
    return field;
}

TrainedValue train_value(const value::ValueTrainConfig& cfg, int obs_dim, int chunk_dim,
                         const std::vector<data::ChunkRow>& rows, const data::NormStats& stats,
                         const ValueKnobs& knobs, const nnet::MlpParams* frozen_s2) {
    cfg.validate();
    if (rows.empty()) throw ConfigError("train_value: no training rows");
    if (knobs.steps < 1 || knobs.hidden < 1)
        throw ConfigError("train_value: steps and hidden must be >= 1");
    if (static_cast<int>(rows.front().obs.size()) != obs_dim ||
        static_cast<int>(rows.front().actions.size()) != chunk_dim)
        throw ShapeError("train_value: rows do not match the requested dims");

    Rng rng(knobs.seed);
    TrainedValue tv{value::make_ensemble(obs_dim, chunk_dim, knobs.hidden, rng),
                    value::make_actor(obs_dim, chunk_dim, knobs.hidden, rng)};
    value::ValueTrainState state = value::ValueTrainState::init(tv.ens, tv.actor);

    std::vector<int> idx(static_cast<std::size_t>(cfg.batch_size));
    for (int step = 0; step < knobs.steps; ++step) {
        for (int& i : idx) i = rng.uniform_int(static_cast<int>(rows.size()));
        const value::ValueBatch batch = value::value_batch_from_chunks(rows, idx, stats);
        const value::ValueStepLog log =
            value::train_step_value(tv.ens, tv.actor, state, batch, cfg, rng, frozen_s2);
        if (knobs.log_every > 0 && (step % knobs.log_every == 0 || step + 1 == knobs.steps))
            std::fprintf(stderr,
                         "  value step %6d/%d  calql %.4f  td %.4f  reg %.4f  q %.3f\n",
                         step + 1, knobs.steps, static_cast<double>(log.calql),
                         static_cast<double>(log.td), static_cast<double>(log.reg),
                         static_cast<double>(log.mean_q));
    }
    return tv;
}

}  // namespace hume::pipeline
