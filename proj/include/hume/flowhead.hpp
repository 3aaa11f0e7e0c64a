#pragma once

#include <span>
#include <vector>

#include "hume/common.hpp"
#include "hume/datastore.hpp"
#include "hume/nnet.hpp"

namespace hume::flow {

// An H x d_a action chunk in normalized action space together with its
// noise level tau in [0, 1]: tau = 1 is clean data, tau = 0 is pure noise.
struct ActionChunk {
    int horizon = 0;
    int act_dim = 0;
    std::vector<float> values;  // horizon * act_dim, tick-major
    float noise_level = 1.0f;

    int dim() const { return horizon * act_dim; }
};

ActionChunk make_chunk(int horizon, int act_dim, float fill = 0.0f, float noise_level = 1.0f);

// Fresh standard-normal chunk (the integration start state, noise_level 0).
ActionChunk noise_chunk(int horizon, int act_dim, Rng& rng);

// Generator configuration.  The candidate ladder is tau_n = 1 - (n-1)*gap
// for n = 1..candidates, so candidate 1 is fully denoised and later ones
// keep progressively more noise.
struct FlowConfig {
    int obs_dim = 0;
    int horizon = 30;        // H: actions per chunk
    int act_dim = 2;
    int candidates = 5;      // N: best-of-N candidate count
    double noise_gap = 0.1;  // gap between adjacent candidate noise levels
    double delta = 0.1;      // Euler step size
    int denoise_steps = 10;  // delta * denoise_steps must equal 1
    int time_embed = 16;     // sinusoidal tau features: time_embed/2 frequencies, sin+cos
    int hidden = 256;        // field-net hidden width

    int chunk_dim() const { return horizon * act_dim; }
    // Field-net input layout: [obs | chunk values | tau features].
    int field_input_dim() const { return obs_dim + chunk_dim() + time_embed; }
    std::vector<double> ladder() const;
    void validate() const;  // throws ConfigError naming the offending field
};

// The N partially denoised candidates for one decision.  `values` is
// filled by the value head; `selected` stays -1 until selection runs.
struct CandidateSet {
    std::vector<ActionChunk> chunks;
    std::vector<float> values;
    int selected = -1;
};

// Element-wise tau*clean + (1-tau)*noise; result carries noise_level tau.
ActionChunk interpolate(const ActionChunk& clean, const ActionChunk& noise, float tau);

// Sinusoidal embedding of tau: interleaved sin/cos at harmonic frequencies
// pi*(k+1), k = 0..embed/2-1.  `out` is resized to embed.
void time_features(double tau, int embed, std::vector<float>& out);

// Velocity-field MLP [field_input_dim -> hidden -> hidden -> chunk_dim], silu.
nnet::MlpParams make_field_net(const FlowConfig& cfg, Rng& rng);

// Training batch: normalized observations and clean normalized chunks.
struct FlowBatch {
    int obs_dim = 0;
    int horizon = 0;
    int act_dim = 0;
    std::vector<float> obs;      // size() * obs_dim
    std::vector<float> actions;  // size() * horizon * act_dim
    int size() const { return obs_dim == 0 ? 0 : static_cast<int>(obs.size()) / obs_dim; }
    std::span<const float> obs_row(int i) const;
    std::span<const float> act_row(int i) const;
};

// Assembles a batch from dataset chunk rows, applying z-score observation
// normalization and action scaling from `stats`.
FlowBatch batch_from_chunks(const std::vector<data::ChunkRow>& rows,
                            std::span<const int> indices,
                            const data::NormStats& stats);

// Flow-matching loss with caller-supplied per-row noise draws: taus has one
// entry per row, eps has chunk_dim() entries per row.  For each row the
// field is evaluated at (obs, tau*A + (1-tau)*eps, tau) and regressed onto
// the velocity target A - eps; loss is the squared L2 residual averaged
// over the batch.  `grads` is (re)shaped and overwritten with the batch
// gradient.
float fm_loss_and_grad_terms(const nnet::MlpParams& field, const FlowConfig& cfg,
                             const FlowBatch& batch, std::span<const float> taus,
                             std::span<const float> eps, nnet::MlpGrads& grads);

// As above but draws tau ~ Uniform[0,1) then eps ~ N(0,I) per row, in row
// order, so runs replay exactly from the rng seed.
float fm_loss_and_grad(const nnet::MlpParams& field, const FlowConfig& cfg,
                       const FlowBatch& batch, Rng& rng, nnet::MlpGrads& grads);

// Forward Euler A <- A + step * v(A, obs, tau) from tau_from to tau_to.
// (tau_to - tau_from) / delta must be within 1e-9 of an integer; the field
// receives the current tau as an input feature at every step.
ActionChunk euler_integrate(const nnet::MlpParams& field, const FlowConfig& cfg,
                            const ActionChunk& start, std::span<const float> obs,
                            double tau_from, double tau_to, double delta);

// Same integrator, but a span that is not an integer multiple of
// cfg.delta ends with one shortened remainder step instead of erroring.
ActionChunk integrate_span(const nnet::MlpParams& field, const FlowConfig& cfg,
                           const ActionChunk& start, std::span<const float> obs,
                           double tau_from, double tau_to);

// Draws an independent noise chunk per candidate (in candidate order) and
// integrates each from tau = 0 up its ladder value.  chunks[0] is fully
// denoised; values are zero-filled and selected is -1.
CandidateSet sample_candidates(const nnet::MlpParams& field, const FlowConfig& cfg,
                               std::span<const float> obs, Rng& rng);

}  // namespace hume::flow
