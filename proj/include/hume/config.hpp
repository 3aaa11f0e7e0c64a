#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hume/cascade.hpp"
#include "hume/envsim.hpp"
#include "hume/flowhead.hpp"
#include "hume/pipeline.hpp"
#include "hume/runtime.hpp"
#include "hume/valuehead.hpp"

namespace hume::toolkit {

// Artifact file names, resolved relative to the run's output directory so
// a whole experiment stays inside one tree.
struct ArtifactPaths {
    std::string dataset = "dataset.bin";
    std::string stats = "stats.bin";
    std::string s2 = "s2.bin";
    std::string s1 = "s1.bin";
    std::string value_prefix = "value";  // value.q1.bin, .q2.bin, .t1.bin, .t2.bin, .actor.bin
};

// Everything one run needs: environment, seeds, artifact names, and the
// per-module configurations.  Cross-field constraints are checked by
// validate() and on load.
struct RunConfig {
    envsim::EnvId env = envsim::EnvId::Reach2d;
    std::uint64_t seed = 0;
    int episodes = 100;                       // gen-data episode count
    std::vector<float> noise_levels = {0.0f};  // expert jitter cycle for gen-data
    int chunk_stride = 1;
    int eval_episodes = 50;  // rollout / ablate episode count
    ArtifactPaths paths;
    flow::FlowConfig flow;
    cascade::S1Config s1;
    value::ValueTrainConfig value_train;
    runtime::ScheduleConfig schedule;
    runtime::Mode mode = runtime::Mode::Full;
    pipeline::TrainKnobs s2_knobs;
    pipeline::TrainKnobs s1_knobs;
    pipeline::ValueKnobs value_knobs;

    void validate() const;  // ConfigError on any cross-field violation
};

// Versioned UTF-8 JSON ("schema": "hume-run", "version": 1).  Unknown
// schema or version is a ConfigError; malformed JSON is a FormatError
// with the parser's byte offset; a missing file is a MissingArtifactError.
// Loading validates cross-field constraints.
RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);

// A default configuration sized for the named environment.
RunConfig default_run_config(envsim::EnvId env);

}  // namespace hume::toolkit
