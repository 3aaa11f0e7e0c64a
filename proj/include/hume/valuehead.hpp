#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hume/common.hpp"
#include "hume/datastore.hpp"
#include "hume/flowhead.hpp"
#include "hume/nnet.hpp"

namespace hume::value {

// Twin critics mapping (obs | flattened action chunk) -> scalar, plus
// delayed target copies that only move through polyak_update.
struct CriticEnsemble {
    nnet::MlpParams q1, q2;  // online
    nnet::MlpParams t1, t2;  // delayed targets
    int obs_dim = 0;
    int chunk_dim = 0;
};

// Critic nets are [obs+chunk -> hidden -> hidden -> 1] silu; targets start
// as exact copies of the online nets.
CriticEnsemble make_ensemble(int obs_dim, int chunk_dim, int hidden, Rng& rng);

// Single-critic forward pass on the concatenated (obs | chunk) input.
float critic_forward(const nnet::MlpParams& q, std::span<const float> obs,
                     std::span<const float> chunk);

// Conservative estimate: min of the two online critics.
float q_value(const CriticEnsemble& ens, std::span<const float> obs,
              std::span<const float> chunk);

// Min of the two delayed target critics.
float target_q(const CriticEnsemble& ens, std::span<const float> obs,
               std::span<const float> chunk);

// Polyak step: every target weight <- (1-rho)*target + rho*online.
void polyak_update(CriticEnsemble& ens, float rho);

// Squashed-Gaussian policy over flattened chunks: the net emits
// [mean | log_std] per chunk dimension; log_std is clamped to [-5, 2] and
// samples are tanh-squashed into [-1, 1].
struct ActorNet {
    nnet::MlpParams net;  // obs -> 2*chunk_dim
    int chunk_dim = 0;
};

ActorNet make_actor(int obs_dim, int chunk_dim, int hidden, Rng& rng);

constexpr float kLogStdMin = -5.0f;
constexpr float kLogStdMax = 2.0f;

struct ActorSample {
    std::vector<float> action;    // tanh(u), in (-1, 1)
    std::vector<float> pre_tanh;  // u = mean + std * zeta
    std::vector<float> zeta;      // the standard-normal draw
    float log_prob = 0.0f;        // squashed-Gaussian density at `action`
};

ActorSample actor_sample(const ActorNet& actor, std::span<const float> obs, Rng& rng);

// Deterministic policy mean, tanh-squashed.
std::vector<float> actor_mean(const ActorNet& actor, std::span<const float> obs);

struct ValueTrainConfig {
    float alpha = 1.0f;        // conservative penalty weight
    float gamma = 0.98f;       // discount
    float rho_polyak = 0.005f;
    int proposals = 4;         // m actor proposals per row for the penalty
    int batch_size = 256;
    float entropy_weight = 1e-3f;
    // Critic-input noising: with this probability a training chunk is
    // interpolated to a random tau in [noise_tau_lo, 1] before the critics
    // see it, matching the partially denoised candidates scored at
    // deployment.  Set to 0 for fully deterministic arithmetic.
    float noise_augment_prob = 0.5f;
    double noise_tau_lo = 0.6;
    nnet::AdamHyper critic_adam{1e-3f, 0.9f, 0.999f, 1e-8f};
    nnet::AdamHyper actor_adam{1e-3f, 0.9f, 0.999f, 1e-8f};

    void validate() const;  // throws ConfigError naming the offending field
};

// Training rows: normalized observations and chunks, plus the chunk-start
// reward, Monte-Carlo return-to-go (the calibration reference) and the
// terminal flag.
struct ValueBatch {
    int obs_dim = 0;
    int chunk_dim = 0;
    std::vector<float> obs;       // size() * obs_dim
    std::vector<float> actions;   // size() * chunk_dim
    std::vector<float> next_obs;  // size() * obs_dim
    std::vector<float> reward;    // size()
    std::vector<float> mc;        // size()
    std::vector<std::uint8_t> terminal;

    int size() const { return static_cast<int>(reward.size()); }
    std::span<const float> obs_row(int i) const;
    std::span<const float> act_row(int i) const;
    std::span<const float> next_obs_row(int i) const;
    void validate() const;  // throws ShapeError on inconsistent sizes
};

// Assembles a batch from dataset chunk rows with the same normalization as
// flow::batch_from_chunks.
ValueBatch value_batch_from_chunks(const std::vector<data::ChunkRow>& rows,
                                   std::span<const int> indices,
                                   const data::NormStats& stats);

// One-step backup r + gamma * (1-terminal) * min-target-Q(next_obs, a'),
// a' drawn from the actor.  Terminal rows never evaluate the critics.
std::vector<float> bellman_target(const CriticEnsemble& ens, const ActorNet& actor,
                                  const ValueBatch& batch, float gamma, Rng& rng);

// Calibrated conservative critic loss.  Per critic i:
//   L_i = alpha * ( mean_b mean_j max(Q_i(s_b, a_bj), mc_b) - mean_b Q_i(s_b, A_b) )
//         + 1/2 * mean_b (Q_i(s_b, A_b) - y_b)^2
// with proposals a_bj from the actor and y the (stop-gradient) Bellman
// target; the reported loss sums both critics.
struct CalqlTerms {
    float loss = 0.0f;
    float td = 0.0f;   // summed TD terms
    float reg = 0.0f;  // summed calibration terms (before alpha)
    float mean_q = 0.0f;
    nnet::MlpGrads g1, g2;
};

CalqlTerms calql_loss(const CriticEnsemble& ens, const ActorNet& actor,
                      const ValueBatch& batch, const ValueTrainConfig& cfg, Rng& rng);

// Optimizer state plus the frozen System-2 guard.  When `frozen_checksum`
// is nonzero, every train step recomputes the checksum of the flow params
// passed in and throws FrozenViolationError on drift.
struct ValueTrainState {
    nnet::AdamState adam_q1, adam_q2, adam_actor;
    std::uint64_t frozen_checksum = 0;

    static ValueTrainState init(const CriticEnsemble& ens, const ActorNet& actor);
};

struct ValueStepLog {
    float calql = 0.0f;
    float td = 0.0f;
    float reg = 0.0f;
    float actor_loss = 0.0f;
    float mean_q = 0.0f;
    float entropy = 0.0f;  // -mean log_prob of the actor samples
};

// One full update: Adam step on both critics via calql_loss, Adam step on
// the actor maximizing min-Q of its samples plus an entropy bonus, then a
// polyak update of the targets.
ValueStepLog train_step_value(CriticEnsemble& ens, ActorNet& actor, ValueTrainState& state,
                              const ValueBatch& batch, const ValueTrainConfig& cfg, Rng& rng,
                              const nnet::MlpParams* frozen_flow = nullptr);

// Scores every candidate with q_value, stores the scores in set.values,
// and returns (and stores) the argmax index with lowest-index tie-break.
int select_best(flow::CandidateSet& set, const CriticEnsemble& ens,
                std::span<const float> obs);

}  // namespace hume::value
