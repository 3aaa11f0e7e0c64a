#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hume/common.hpp"
#include "hume/envsim.hpp"

namespace hume::data {

using envsim::EnvId;

// One recorded episode.  Arrays are row-major with one row per control
// tick; observations, actions, and rewards all have the same length.
struct Episode {
    EnvId env = EnvId::Reach2d;
    std::uint32_t obs_dim = 0;
    std::uint32_t act_dim = 0;
    std::vector<float> obs;  // length * obs_dim
    std::vector<float> act;  // length * act_dim
    std::vector<float> rew;  // length
    bool success = false;

    std::size_t length() const { return rew.size(); }
    bool done_at(std::size_t t) const { return t + 1 == length(); }
    std::span<const float> obs_at(std::size_t t) const {
        return {obs.data() + t * obs_dim, obs_dim};
    }
    std::span<const float> act_at(std::size_t t) const {
        return {act.data() + t * act_dim, act_dim};
    }
};

// Throws ShapeError when array lengths or dims are inconsistent.
void validate_episode(const Episode& e);

// Sparse success labeling: the trailing min(3, length) rewards of a
// successful episode are 1, everything else 0.  Failed episodes are kept
// with all-zero rewards.  Idempotent.
Episode label_rewards(Episode e);

// Discounted return-to-go from tick t.  ShapeError when t >= length.
float mc_return(const Episode& e, float gamma, std::size_t t);
std::vector<float> mc_returns(const Episode& e, float gamma);

// Per-dimension observation statistics plus the action bound.
// Observations train as z-scores (std floored at 1e-6); actions train as
// a / act_bound, an exact affine map into [-1, 1] for in-range actions.
struct NormStats {
    std::vector<float> obs_mean, obs_std;
    std::vector<float> act_mean, act_std;  // informational
    float act_bound = envsim::kActionMax;
};

NormStats compute_norm_stats(const std::vector<Episode>& eps,
                             float act_bound = envsim::kActionMax);
void normalize_obs(const NormStats& st, std::span<float> x);
void denormalize_obs(const NormStats& st, std::span<float> x);
void normalize_act(const NormStats& st, std::span<float> a);
void denormalize_act(const NormStats& st, std::span<float> a);

void save_norm_stats(const NormStats& st, const std::string& path);
NormStats load_norm_stats(const std::string& path);

// One training row: an H-step action chunk with its framing transition.
struct ChunkRow {
    std::uint32_t episode = 0;  // index into the source episode list
    std::uint32_t t = 0;        // chunk start tick
    std::vector<float> obs;       // obs_dim
    std::vector<float> actions;   // H * act_dim
    std::vector<float> next_obs;  // obs_dim, observation at min(t+H, length-1)
    float reward = 0.0f;          // reward at the chunk start tick
    float mc = 0.0f;              // discounted return-to-go at t
    bool terminal = false;        // t + H reaches the episode end
    std::uint32_t pad = 0;        // trailing steps that repeat the final action
};

// Enumerate chunks per episode at the given stride.  Chunks never cross
// episode boundaries; tail chunks are padded by repeating the final
// action with the pad count recorded.  ConfigError on invalid H/stride.
std::vector<ChunkRow> make_chunks(const std::vector<Episode>& eps, int H,
                                  int stride, float gamma);

// Dataset file ("HUMEDATA"): all episodes share env and dims.
void write_dataset(const std::vector<Episode>& eps, const std::string& path);
std::vector<Episode> read_dataset(const std::string& path);

}  // namespace hume::data
