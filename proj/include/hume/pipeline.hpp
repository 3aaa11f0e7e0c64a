#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hume/cascade.hpp"
#include "hume/datastore.hpp"
#include "hume/envsim.hpp"
#include "hume/flowhead.hpp"
#include "hume/valuehead.hpp"

namespace hume::pipeline {

// Rolls the scripted expert with optional N(0, noise * action-bound)
// jitter per action dimension and labels rewards.  Episode e uses seed
// base_seed + e.  Jittered episodes that miss the goal are kept with
// all-zero rewards — mixed-quality data is what calibrates the critic.
std::vector<data::Episode> collect_expert_episodes(envsim::EnvId env, int episodes,
                                                   std::uint64_t base_seed, float noise = 0.0f);

// Interleaves clean and jittered expert episodes: episode e uses
// noise_levels[e % noise_levels.size()].
std::vector<data::Episode> collect_mixed_episodes(envsim::EnvId env, int episodes,
                                                  std::uint64_t base_seed,
                                                  const std::vector<float>& noise_levels);

struct TrainKnobs {
    int steps = 4000;
    int batch = 128;
    float lr = 2e-3f;
    std::uint64_t seed = 0;
    int log_every = 0;  // 0 = silent; otherwise progress lines on stderr
};

// Flow-matching regression of a velocity field over the given chunk rows.
// The same routine trains the planner (H-chunks) and the refiner
// (h-chunks through S1Config::flow_view()).
nnet::MlpParams train_field(const flow::FlowConfig& cfg, const std::vector<data::ChunkRow>& rows,
                            const data::NormStats& stats, const TrainKnobs& knobs);

struct ValueKnobs {
    int steps = 4000;
    int hidden = 128;
    std::uint64_t seed = 0;
    int log_every = 0;
};

struct TrainedValue {
    value::CriticEnsemble ens;
    value::ActorNet actor;
};

// Calibrated conservative critic training over the chunk rows.  When
// `frozen_s2` is given, its checksum is verified every step (the planner
// stays frozen during this stage).
TrainedValue train_value(const value::ValueTrainConfig& cfg, int obs_dim, int chunk_dim,
                         const std::vector<data::ChunkRow>& rows, const data::NormStats& stats,
                         const ValueKnobs& knobs, const nnet::MlpParams* frozen_s2 = nullptr);

}  // namespace hume::pipeline
