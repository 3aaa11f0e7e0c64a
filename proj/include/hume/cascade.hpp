#pragma once

#include <span>
#include <vector>

#include "hume/common.hpp"
#include "hume/flowhead.hpp"
#include "hume/nnet.hpp"

namespace hume::cascade {

// One refinement segment: h consecutive actions cut out of a parent chunk,
// carrying the parent's noise level and its own position k in the chunk.
struct SubChunk {
    int horizon = 0;   // h
    int act_dim = 0;
    std::vector<float> values;  // horizon * act_dim, tick-major
    float tau_star = 1.0f;      // noise level inherited from the parent
    int k = 0;                  // segment index in [0, K)

    int dim() const { return horizon * act_dim; }
};

// Refiner configuration: the sub-horizon h plus a field net that matches
// the planner's architecture at half width, keeping the fast path light.
struct S1Config {
    int obs_dim = 0;
    int sub_horizon = 15;  // h; must divide the parent chunk horizon H
    int act_dim = 2;
    double delta = 0.1;      // Euler step size
    int denoise_steps = 10;  // delta * denoise_steps must equal 1
    int time_embed = 16;
    int hidden = 128;

    int chunk_dim() const { return sub_horizon * act_dim; }
    // The refiner runs the planner's flow machinery at sub-chunk scale;
    // this view makes the shared code paths explicit.
    flow::FlowConfig flow_view() const;
    void validate() const;  // throws ConfigError naming the offending field
};

// Cuts the chunk into K = H/h sub-chunks in temporal order, each
// inheriting the parent's noise level.  Throws ConfigError naming H and h
// when h does not divide H.
std::vector<SubChunk> segment(const flow::ActionChunk& chunk, int h);

// Inverse of segment: stitches sub-chunks back together.  Requires the
// segments in k-order 0..K-1 with matching shapes and noise levels.
flow::ActionChunk concatenate(const std::vector<SubChunk>& subs);

// Refinement field [obs + h*act_dim + time_embed -> hidden -> hidden ->
// h*act_dim], silu hidden activations.
nnet::MlpParams make_s1_net(const S1Config& cfg, Rng& rng);

// Flow-matching loss over h-horizon chunks; identical in form to the
// planner loss (velocity target A - eps at interpolation time omega), so
// both delegate to the same implementation.
float s1_loss_and_grad_terms(const nnet::MlpParams& field, const S1Config& cfg,
                             const flow::FlowBatch& batch, std::span<const float> omegas,
                             std::span<const float> eps, nnet::MlpGrads& grads);

// As above with omega ~ Uniform[0,1) then eps ~ N(0,I) drawn per row.
float s1_loss_and_grad(const nnet::MlpParams& field, const S1Config& cfg,
                       const flow::FlowBatch& batch, Rng& rng, nnet::MlpGrads& grads);

// Refines a partially denoised sub-chunk against a fresh observation by
// integrating the refiner field over omega in [0,1] in denoise_steps Euler
// steps, starting from the sub-chunk values as they are (no re-noising).
// The result carries noise level 1 and the input's segment index.
SubChunk cascade_denoise(const nnet::MlpParams& field, const S1Config& cfg,
                         const SubChunk& sub, std::span<const float> obs);

}  // namespace hume::cascade
