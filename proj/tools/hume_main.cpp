// hume: one binary for the whole desk-scale stack — data generation,
// two-stage training, rollouts, ablations, and exports.
//
// Exit codes: 0 success, 2 configuration error, 3 missing or unreadable
// artifact, 4 numeric failure (NaN/rank/frozen-checkpoint violations).
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "hume/config.hpp"
#include "hume/pipeline.hpp"
#include "hume/toolkit.hpp"

namespace fs = std::filesystem;
using namespace hume;

namespace {

struct Global {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string env_name = "reach2d";
};

toolkit::RunConfig load_config(const Global& g) {
    toolkit::RunConfig cfg = g.config_path.empty()
                                 ? toolkit::default_run_config(envsim::parse_env_id(g.env_name))
                                 : toolkit::load_run_config(g.config_path);
    if (g.seed_set) cfg.seed = g.seed;
    cfg.validate();
    return cfg;
}

std::string under_out(const Global& g, const std::string& name) {
    fs::create_directories(g.out_dir);
    return (fs::path(g.out_dir) / name).string();
}

void require_file(const std::string& path, const char* what) {
    if (!fs::exists(path))
        throw MissingArtifactError(std::string(what) + " not found at " + path +
                                   " (run the producing stage first)");
}

std::uint64_t file_params_checksum(const std::string& path) {
    return nnet::params_checksum(nnet::load_params(path));
}

struct LoadedStack {
    runtime::PolicyStack stack;
};

LoadedStack load_stack(const Global& g, const toolkit::RunConfig& cfg, bool need_value) {
    const std::string s2 = under_out(g, cfg.paths.s2);
    const std::string s1 = under_out(g, cfg.paths.s1);
    const std::string stats = under_out(g, cfg.paths.stats);
    require_file(s2, "planner checkpoint");
    require_file(s1, "refiner checkpoint");
    require_file(stats, "normalization stats");
    LoadedStack ls;
    ls.stack.flow_cfg = cfg.flow;
    ls.stack.s1_cfg = cfg.s1;
    ls.stack.flow_field = nnet::load_params(s2);
    ls.stack.s1_field = nnet::load_params(s1);
    ls.stack.stats = data::load_norm_stats(stats);
    if (need_value) {
        const std::string prefix = under_out(g, cfg.paths.value_prefix);
        require_file(prefix + ".q1.bin", "value checkpoint");
        ls.stack.ensemble.q1 = nnet::load_params(prefix + ".q1.bin");
        ls.stack.ensemble.q2 = nnet::load_params(prefix + ".q2.bin");
        ls.stack.ensemble.t1 = nnet::load_params(prefix + ".t1.bin");
        ls.stack.ensemble.t2 = nnet::load_params(prefix + ".t2.bin");
        ls.stack.ensemble.obs_dim = cfg.flow.obs_dim;
        ls.stack.ensemble.chunk_dim = cfg.flow.chunk_dim();
    } else {
        Rng rng(cfg.seed);
        ls.stack.ensemble =
            value::make_ensemble(cfg.flow.obs_dim, cfg.flow.chunk_dim(), 8, rng);
    }
    ls.stack.validate();
    return ls;
}

std::vector<data::Episode> load_episodes(const Global& g, const toolkit::RunConfig& cfg) {
    const std::string path = under_out(g, cfg.paths.dataset);
    require_file(path, "dataset");
    return data::read_dataset(path);
}

int cmd_gen_data(const Global& g) {
    const toolkit::RunConfig cfg = load_config(g);
    std::vector<data::Episode> eps =
        pipeline::collect_mixed_episodes(cfg.env, cfg.episodes, cfg.seed, cfg.noise_levels);
    int ok = 0;
    std::size_t ticks = 0;
    for (const data::Episode& e : eps) {
        ok += e.success ? 1 : 0;
        ticks += e.length();
    }
    data::write_dataset(eps, under_out(g, cfg.paths.dataset));
    data::save_norm_stats(data::compute_norm_stats(eps), under_out(g, cfg.paths.stats));
    std::printf("gen-data: %d episodes on %s, %d successful, %zu ticks -> %s\n", cfg.episodes,
                envsim::env_name(cfg.env), ok, ticks, under_out(g, cfg.paths.dataset).c_str());
    return 0;
}

int cmd_train_s2(const Global& g) {
    const toolkit::RunConfig cfg = load_config(g);
    const std::vector<data::Episode> eps = load_episodes(g, cfg);
    const data::NormStats stats = data::load_norm_stats(under_out(g, cfg.paths.stats));
    const std::vector<data::ChunkRow> rows =
        data::make_chunks(eps, cfg.flow.horizon, cfg.chunk_stride, cfg.value_train.gamma);
    pipeline::TrainKnobs knobs = cfg.s2_knobs;
    if (knobs.log_every == 0) knobs.log_every = std::max(1, knobs.steps / 10);
    const nnet::MlpParams field = pipeline::train_field(cfg.flow, rows, stats, knobs);
    nnet::save_params(field, under_out(g, cfg.paths.s2));
    std::printf("train-s2: %zu rows, %d steps -> %s (checksum %016llx)\n", rows.size(),
                knobs.steps, under_out(g, cfg.paths.s2).c_str(),
                static_cast<unsigned long long>(nnet::params_checksum(field)));
    return 0;
}

int cmd_train_s1(const Global& g) {
    const toolkit::RunConfig cfg = load_config(g);
    const std::string s2_path = under_out(g, cfg.paths.s2);
    require_file(s2_path, "planner checkpoint");  // stage order: planner trains first
    const std::uint64_t s2_before = file_params_checksum(s2_path);

    const std::vector<data::Episode> eps = load_episodes(g, cfg);
    const data::NormStats stats = data::load_norm_stats(under_out(g, cfg.paths.stats));
    const std::vector<data::ChunkRow> rows =
        data::make_chunks(eps, cfg.s1.sub_horizon, cfg.chunk_stride, cfg.value_train.gamma);
    pipeline::TrainKnobs knobs = cfg.s1_knobs;
    if (knobs.log_every == 0) knobs.log_every = std::max(1, knobs.steps / 10);
    const nnet::MlpParams field = pipeline::train_field(cfg.s1.flow_view(), rows, stats, knobs);
    nnet::save_params(field, under_out(g, cfg.paths.s1));

    if (file_params_checksum(s2_path) != s2_before)
        throw FrozenViolationError("train-s1: the frozen planner checkpoint changed on disk");
    std::printf("train-s1: %zu rows, %d steps -> %s\n", rows.size(), knobs.steps,
                under_out(g, cfg.paths.s1).c_str());
    return 0;
}

int cmd_train_value(const Global& g) {
    const toolkit::RunConfig cfg = load_config(g);
    const std::string s2_path = under_out(g, cfg.paths.s2);
    require_file(s2_path, "planner checkpoint");  // stage order: planner trains first
    const nnet::MlpParams frozen = nnet::load_params(s2_path);
    const std::uint64_t s2_before = nnet::params_checksum(frozen);

    const std::vector<data::Episode> eps = load_episodes(g, cfg);
    const data::NormStats stats = data::load_norm_stats(under_out(g, cfg.paths.stats));
    const std::vector<data::ChunkRow> rows =
        data::make_chunks(eps, cfg.flow.horizon, cfg.chunk_stride, cfg.value_train.gamma);
    pipeline::ValueKnobs knobs = cfg.value_knobs;
    if (knobs.log_every == 0) knobs.log_every = std::max(1, knobs.steps / 10);
    const pipeline::TrainedValue tv = pipeline::train_value(
        cfg.value_train, cfg.flow.obs_dim, cfg.flow.chunk_dim(), rows, stats, knobs, &frozen);

    const std::string prefix = under_out(g, cfg.paths.value_prefix);
    nnet::save_params(tv.ens.q1, prefix + ".q1.bin");
    nnet::save_params(tv.ens.q2, prefix + ".q2.bin");
    nnet::save_params(tv.ens.t1, prefix + ".t1.bin");
    nnet::save_params(tv.ens.t2, prefix + ".t2.bin");
    nnet::save_params(tv.actor.net, prefix + ".actor.bin");

    if (file_params_checksum(s2_path) != s2_before)
        throw FrozenViolationError("train-value: the frozen planner checkpoint changed on disk");
    std::printf("train-value: %zu rows, %d steps -> %s.*.bin\n", rows.size(), knobs.steps,
                prefix.c_str());
    return 0;
}

int cmd_rollout(const Global& g) {
    const toolkit::RunConfig cfg = load_config(g);
    const bool need_value = cfg.mode != runtime::Mode::RandomSelect;
    const LoadedStack ls = load_stack(g, cfg, need_value);
    const runtime::RolloutTrace trace =
        runtime::rollout_episode(ls.stack, cfg.env, cfg.seed, cfg.schedule, cfg.mode);
    const std::string path = under_out(g, "trace.txt");
    runtime::save_trace(trace, path);
    std::printf("rollout: env %s mode %s seed %llu -> %s (%d ticks, %zu plans, success %d)\n",
                envsim::env_name(cfg.env), runtime::mode_name(cfg.mode),
                static_cast<unsigned long long>(cfg.seed), path.c_str(), trace.ticks,
                trace.plans.size(), trace.success ? 1 : 0);
    return 0;
}

int cmd_ablate(const Global& g, const std::vector<std::string>& mode_names, bool oracle) {
    const toolkit::RunConfig cfg = load_config(g);
    std::vector<runtime::Mode> modes;
    if (mode_names.empty())
        modes = {runtime::Mode::Full, runtime::Mode::NoCascade, runtime::Mode::NoRepeat,
                 runtime::Mode::NoSystem1, runtime::Mode::RandomSelect};
    else
        for (const std::string& m : mode_names) modes.push_back(runtime::parse_mode(m));

    const LoadedStack ls = load_stack(g, cfg, !oracle);
    runtime::ChunkScorer scorer;
    const runtime::ChunkScorer* scorer_ptr = nullptr;
    if (oracle) {
        scorer = toolkit::make_endpoint_oracle(ls.stack.stats);
        scorer_ptr = &scorer;
    }
    const std::vector<toolkit::AblationRow> rows = toolkit::run_ablation(
        ls.stack, cfg.env, cfg.schedule, modes, cfg.eval_episodes, cfg.seed, scorer_ptr);
    const std::string path = under_out(g, "ablation.json");
    toolkit::write_ablation(rows, path);
    std::printf("ablate: %s scorer, %d episodes per mode -> %s\n",
                oracle ? "oracle" : "learned", cfg.eval_episodes, path.c_str());
    for (const toolkit::AblationRow& r : rows)
        std::printf("  %-14s %3d/%3d  rate %.3f  wilson95 [%.3f, %.3f]\n",
                    runtime::mode_name(r.mode), r.successes, r.episodes, r.ci.rate, r.ci.lo,
                    r.ci.hi);
    return 0;
}

int cmd_export_valuemap(const Global& g) {
    const toolkit::RunConfig cfg = load_config(g);
    const LoadedStack ls = load_stack(g, cfg, true);
    const std::vector<data::Episode> eps = load_episodes(g, cfg);
    const std::vector<data::ChunkRow> gt =
        data::make_chunks(eps, cfg.flow.horizon, cfg.chunk_stride, cfg.value_train.gamma);
    if (gt.empty()) throw ConfigError("export-valuemap: dataset produced no chunks");

    // Log candidate sets at the first observations until at least 100
    // candidates are collected.
    std::vector<toolkit::CandidateLog> cands;
    Rng rng(cfg.seed + 17);
    for (std::size_t i = 0; i < gt.size() && cands.size() < 200; ++i) {
        std::vector<float> obs = gt[i].obs;
        data::normalize_obs(ls.stack.stats, obs);
        flow::CandidateSet set =
            flow::sample_candidates(ls.stack.flow_field, cfg.flow, obs, rng);
        for (const flow::ActionChunk& c : set.chunks)
            cands.push_back({static_cast<std::uint32_t>(i), c.values});
    }
    const std::string path = under_out(g, "valuemap.json");
    const toolkit::ValueMapExport ex =
        toolkit::export_valuemap(gt, cands, ls.stack.ensemble, ls.stack.stats, path);
    std::printf("export-valuemap: %zu gt rows, %zu candidates -> %s\n", ex.gt_q.size(),
                ex.cand_q.size(), path.c_str());
    std::printf("  variance ratios [%.3f, %.3f]  mean Q: gt %.4f  candidates %.4f\n",
                ex.pca.ratios[0], ex.pca.ratios[1], ex.mean_q_gt, ex.mean_q_cand);
    return 0;
}

int cmd_simulate_schedule(const Global& g, double duration) {
    const toolkit::RunConfig cfg = load_config(g);
    const runtime::ScheduleReport rep =
        runtime::simulate_schedule(cfg.schedule, duration, cfg.s1.sub_horizon);
    std::printf("simulate-schedule: %.3f s, %d ticks, %d plans\n", duration, rep.ticks,
                rep.plans);
    std::printf("  starved ticks %d  planner overrun %d\n", rep.starved_ticks,
                rep.planner_overrun ? 1 : 0);
    std::printf("  staleness max %.6f mean %.6f  tick jitter max %.6f\n", rep.max_staleness,
                rep.mean_staleness, rep.max_tick_jitter);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale dual-system action stack"};
    app.require_subcommand(1);

    Global g;
    app.add_option("--config", g.config_path, "Run-config JSON file");
    app.add_option("--out", g.out_dir, "Output directory (all artifacts live here)");
    auto* seed_opt = app.add_option("--seed", g.seed, "Override the config seed");
    app.add_option("--env", g.env_name, "Environment when no config file is given")
        ->check(CLI::IsMember({"reach2d", "pusht_lite"}));

    auto* gen = app.add_subcommand("gen-data", "Generate scripted-expert episodes");
    auto* ts2 = app.add_subcommand("train-s2", "Train the System-2 flow planner");
    auto* tva = app.add_subcommand("train-value", "Train the calibrated value head");
    auto* ts1 = app.add_subcommand("train-s1", "Train the System-1 cascaded refiner");
    auto* rol = app.add_subcommand("rollout", "Run one seeded closed-loop episode");
    auto* abl = app.add_subcommand("ablate", "Success-rate table across runtime modes");
    std::vector<std::string> mode_names;
    bool oracle = false;
    abl->add_option("--mode", mode_names, "Mode subset (repeatable; default: all five)");
    abl->add_flag("--oracle", oracle, "Replace the learned critic with the endpoint oracle");
    auto* exp = app.add_subcommand("export-valuemap", "Project chunks to 2-D with Q values");
    auto* sim = app.add_subcommand("simulate-schedule", "Latency/staleness schedule model");
    double duration = 10000.0 / 90.0;
    sim->add_option("--duration", duration, "Simulated seconds of actor time");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    g.seed_set = seed_opt->count() > 0;

    try {
        if (gen->parsed()) return cmd_gen_data(g);
        if (ts2->parsed()) return cmd_train_s2(g);
        if (tva->parsed()) return cmd_train_value(g);
        if (ts1->parsed()) return cmd_train_s1(g);
        if (rol->parsed()) return cmd_rollout(g);
        if (abl->parsed()) return cmd_ablate(g, mode_names, oracle);
        if (exp->parsed()) return cmd_export_valuemap(g);
        if (sim->parsed()) return cmd_simulate_schedule(g, duration);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const ShapeError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const MissingArtifactError& e) {
        std::fprintf(stderr, "missing artifact: %s\n", e.what());
        return 3;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "unreadable artifact: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 4;
    }
    return 0;
}
