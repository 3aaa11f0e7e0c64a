#include "hume/config.hpp"

#include <json.hpp>

#include <fstream>

namespace hume::toolkit {

using nlohmann::json;

void RunConfig::validate() const {
    flow.validate();
    s1.validate();
    value_train.validate();
    schedule.validate(s1.sub_horizon);
    if (flow.obs_dim != envsim::obs_dim(env))
        throw ConfigError(std::string("RunConfig: flow.obs_dim must be ") +
                          std::to_string(envsim::obs_dim(env)) + " for " + envsim::env_name(env));
    if (flow.act_dim != 2 || s1.act_dim != 2)
        throw ConfigError("RunConfig: actions are 2-D in every environment");
    if (s1.obs_dim != flow.obs_dim)
        throw ConfigError("RunConfig: s1.obs_dim must match flow.obs_dim");
    if (flow.horizon % s1.sub_horizon != 0)
        throw ConfigError("RunConfig: sub-horizon h=" + std::to_string(s1.sub_horizon) +
                          " does not divide chunk horizon H=" + std::to_string(flow.horizon));
    if (episodes < 1 || eval_episodes < 1)
        throw ConfigError("RunConfig: episodes and eval_episodes must be >= 1");
    if (chunk_stride < 1) throw ConfigError("RunConfig: chunk_stride must be >= 1");
    if (noise_levels.empty()) throw ConfigError("RunConfig: noise_levels must be non-empty");
    for (float n : noise_levels)
        if (n < 0.0f) throw ConfigError("RunConfig: noise levels must be >= 0");
    const auto check_knobs = [](const pipeline::TrainKnobs& k, const char* who) {
        if (k.steps < 1 || k.batch < 1 || k.lr <= 0.0f)
            throw ConfigError(std::string("RunConfig: ") + who +
                              " needs steps >= 1, batch >= 1, lr > 0");
    };
    check_knobs(s2_knobs, "s2_knobs");
    check_knobs(s1_knobs, "s1_knobs");
    if (value_knobs.steps < 1 || value_knobs.hidden < 1)
        throw ConfigError("RunConfig: value_knobs needs steps >= 1 and hidden >= 1");
    if (paths.dataset.empty() || paths.stats.empty() || paths.s2.empty() || paths.s1.empty() ||
        paths.value_prefix.empty())
        throw ConfigError("RunConfig: artifact names must be non-empty");
}

namespace {

json knobs_to_json(const pipeline::TrainKnobs& k) {
    return json{{"steps", k.steps}, {"batch", k.batch}, {"lr", k.lr}, {"seed", k.seed}};
}

pipeline::TrainKnobs knobs_from_json(const json& j, pipeline::TrainKnobs def) {
    def.steps = j.value("steps", def.steps);
    def.batch = j.value("batch", def.batch);
    def.lr = j.value("lr", def.lr);
    def.seed = j.value("seed", def.seed);
    return def;
}

}  // namespace

void save_run_config(const RunConfig& cfg, const std::string& path) {
    cfg.validate();
    json j{
        {"schema", "hume-run"},
        {"version", 1},
        {"env", envsim::env_name(cfg.env)},
        {"seed", cfg.seed},
        {"episodes", cfg.episodes},
        {"noise_levels", cfg.noise_levels},
        {"chunk_stride", cfg.chunk_stride},
        {"eval_episodes", cfg.eval_episodes},
        {"mode", runtime::mode_name(cfg.mode)},
        {"paths",
         json{{"dataset", cfg.paths.dataset},
              {"stats", cfg.paths.stats},
              {"s2", cfg.paths.s2},
              {"s1", cfg.paths.s1},
              {"value_prefix", cfg.paths.value_prefix}}},
        {"flow",
         json{{"obs_dim", cfg.flow.obs_dim},
              {"horizon", cfg.flow.horizon},
              {"act_dim", cfg.flow.act_dim},
              {"candidates", cfg.flow.candidates},
              {"noise_gap", cfg.flow.noise_gap},
              {"delta", cfg.flow.delta},
              {"denoise_steps", cfg.flow.denoise_steps},
              {"time_embed", cfg.flow.time_embed},
              {"hidden", cfg.flow.hidden}}},
        {"s1",
         json{{"obs_dim", cfg.s1.obs_dim},
              {"sub_horizon", cfg.s1.sub_horizon},
              {"act_dim", cfg.s1.act_dim},
              {"delta", cfg.s1.delta},
              {"denoise_steps", cfg.s1.denoise_steps},
              {"time_embed", cfg.s1.time_embed},
              {"hidden", cfg.s1.hidden}}},
        {"value_train",
         json{{"alpha", cfg.value_train.alpha},
              {"gamma", cfg.value_train.gamma},
              {"rho_polyak", cfg.value_train.rho_polyak},
              {"proposals", cfg.value_train.proposals},
              {"batch_size", cfg.value_train.batch_size},
              {"entropy_weight", cfg.value_train.entropy_weight},
              {"noise_augment_prob", cfg.value_train.noise_augment_prob},
              {"noise_tau_lo", cfg.value_train.noise_tau_lo},
              {"critic_lr", cfg.value_train.critic_adam.lr},
              {"actor_lr", cfg.value_train.actor_adam.lr}}},
        {"schedule",
         json{{"s2_period", cfg.schedule.s2_period},
              {"s1_period", cfg.schedule.s1_period},
              {"tick_period", cfg.schedule.tick_period},
              {"s2_latency", cfg.schedule.s2_latency},
              {"s1_latency", cfg.schedule.s1_latency}}},
        {"s2_knobs", knobs_to_json(cfg.s2_knobs)},
        {"s1_knobs", knobs_to_json(cfg.s1_knobs)},
        {"value_knobs",
         json{{"steps", cfg.value_knobs.steps},
              {"hidden", cfg.value_knobs.hidden},
              {"seed", cfg.value_knobs.seed}}},
    };
    std::ofstream f(path, std::ios::binary);
    if (!f) throw MissingArtifactError("save_run_config: cannot open " + path);
    f << j.dump(1) << '\n';
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MissingArtifactError("load_run_config: cannot open " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("load_run_config: ") + e.what(), e.byte);
    }
    RunConfig cfg;
    try {
        if (j.value("schema", "") != "hume-run")
            throw ConfigError("load_run_config: not a hume-run config file");
        if (j.at("version").get<int>() != 1)
            throw ConfigError("load_run_config: unsupported config version " +
                              j.at("version").dump());
        cfg.env = envsim::parse_env_id(j.at("env").get<std::string>());
        cfg = default_run_config(cfg.env);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.episodes = j.value("episodes", cfg.episodes);
        cfg.noise_levels = j.value("noise_levels", cfg.noise_levels);
        cfg.chunk_stride = j.value("chunk_stride", cfg.chunk_stride);
        cfg.eval_episodes = j.value("eval_episodes", cfg.eval_episodes);
        if (j.contains("mode")) cfg.mode = runtime::parse_mode(j.at("mode").get<std::string>());
        if (j.contains("paths")) {
            const json& p = j.at("paths");
            cfg.paths.dataset = p.value("dataset", cfg.paths.dataset);
            cfg.paths.stats = p.value("stats", cfg.paths.stats);
            cfg.paths.s2 = p.value("s2", cfg.paths.s2);
            cfg.paths.s1 = p.value("s1", cfg.paths.s1);
            cfg.paths.value_prefix = p.value("value_prefix", cfg.paths.value_prefix);
        }
        if (j.contains("flow")) {
            const json& p = j.at("flow");
            cfg.flow.obs_dim = p.value("obs_dim", cfg.flow.obs_dim);
            cfg.flow.horizon = p.value("horizon", cfg.flow.horizon);
            cfg.flow.act_dim = p.value("act_dim", cfg.flow.act_dim);
            cfg.flow.candidates = p.value("candidates", cfg.flow.candidates);
            cfg.flow.noise_gap = p.value("noise_gap", cfg.flow.noise_gap);
            cfg.flow.delta = p.value("delta", cfg.flow.delta);
            cfg.flow.denoise_steps = p.value("denoise_steps", cfg.flow.denoise_steps);
            cfg.flow.time_embed = p.value("time_embed", cfg.flow.time_embed);
            cfg.flow.hidden = p.value("hidden", cfg.flow.hidden);
        }
        if (j.contains("s1")) {
            const json& p = j.at("s1");
            cfg.s1.obs_dim = p.value("obs_dim", cfg.s1.obs_dim);
            cfg.s1.sub_horizon = p.value("sub_horizon", cfg.s1.sub_horizon);
            cfg.s1.act_dim = p.value("act_dim", cfg.s1.act_dim);
            cfg.s1.delta = p.value("delta", cfg.s1.delta);
            cfg.s1.denoise_steps = p.value("denoise_steps", cfg.s1.denoise_steps);
            cfg.s1.time_embed = p.value("time_embed", cfg.s1.time_embed);
            cfg.s1.hidden = p.value("hidden", cfg.s1.hidden);
        }
        if (j.contains("value_train")) {
            const json& p = j.at("value_train");
            cfg.value_train.alpha = p.value("alpha", cfg.value_train.alpha);
            cfg.value_train.gamma = p.value("gamma", cfg.value_train.gamma);
            cfg.value_train.rho_polyak = p.value("rho_polyak", cfg.value_train.rho_polyak);
            cfg.value_train.proposals = p.value("proposals", cfg.value_train.proposals);
            cfg.value_train.batch_size = p.value("batch_size", cfg.value_train.batch_size);
            cfg.value_train.entropy_weight =
                p.value("entropy_weight", cfg.value_train.entropy_weight);
            cfg.value_train.noise_augment_prob =
                p.value("noise_augment_prob", cfg.value_train.noise_augment_prob);
            cfg.value_train.noise_tau_lo = p.value("noise_tau_lo", cfg.value_train.noise_tau_lo);
            cfg.value_train.critic_adam.lr = p.value("critic_lr", cfg.value_train.critic_adam.lr);
            cfg.value_train.actor_adam.lr = p.value("actor_lr", cfg.value_train.actor_adam.lr);
        }
        if (j.contains("schedule")) {
            const json& p = j.at("schedule");
            cfg.schedule.s2_period = p.value("s2_period", cfg.schedule.s2_period);
            cfg.schedule.s1_period = p.value("s1_period", cfg.schedule.s1_period);
            cfg.schedule.tick_period = p.value("tick_period", cfg.schedule.tick_period);
            cfg.schedule.s2_latency = p.value("s2_latency", cfg.schedule.s2_latency);
            cfg.schedule.s1_latency = p.value("s1_latency", cfg.schedule.s1_latency);
        }
        if (j.contains("s2_knobs")) cfg.s2_knobs = knobs_from_json(j.at("s2_knobs"), cfg.s2_knobs);
        if (j.contains("s1_knobs")) cfg.s1_knobs = knobs_from_json(j.at("s1_knobs"), cfg.s1_knobs);
        if (j.contains("value_knobs")) {
            const json& p = j.at("value_knobs");
            cfg.value_knobs.steps = p.value("steps", cfg.value_knobs.steps);
            cfg.value_knobs.hidden = p.value("hidden", cfg.value_knobs.hidden);
            cfg.value_knobs.seed = p.value("seed", cfg.value_knobs.seed);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("load_run_config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

RunConfig default_run_config(envsim::EnvId env) {
    RunConfig cfg;
    cfg.env = env;
    cfg.flow.obs_dim = envsim::obs_dim(env);
    cfg.flow.act_dim = 2;
    cfg.flow.horizon = 16;
    cfg.flow.hidden = 128;
    cfg.s1.obs_dim = cfg.flow.obs_dim;
    cfg.s1.act_dim = 2;
    cfg.s1.sub_horizon = 8;
    cfg.s1.hidden = 64;
    cfg.chunk_stride = 2;
    cfg.episodes = 120;
    cfg.noise_levels = {0.0f, 0.0f, 0.3f};
    cfg.eval_episodes = 50;
    // Tick grid: 90 Hz control, one refinement cycle per sub-chunk, one
    // plan per chunk span.
    cfg.schedule.tick_period = 1.0 / 90.0;
    cfg.schedule.s1_period = cfg.s1.sub_horizon * cfg.schedule.tick_period;
    cfg.schedule.s2_period = cfg.flow.horizon * cfg.schedule.tick_period;
    cfg.s2_knobs = {8000, 128, 2e-3f, 0, 0};
    cfg.s1_knobs = {6000, 128, 2e-3f, 1, 0};
    cfg.value_knobs = {4000, 128, 2, 0};
    return cfg;
}

}  // namespace hume::toolkit
