#include "hume/valuehead.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace hume::value {

using nnet::ForwardCache;
using nnet::MlpGrads;
using nnet::MlpParams;

namespace {

constexpr float kTanhEps = 1e-6f;
constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)

void concat_input(std::span<const float> obs, std::span<const float> chunk,
                  std::vector<float>& out) {
    out.resize(obs.size() + chunk.size());
    std::memcpy(out.data(), obs.data(), obs.size() * sizeof(float));
    std::memcpy(out.data() + obs.size(), chunk.data(), chunk.size() * sizeof(float));
}

float scalar_forward(const MlpParams& q, std::span<const float> obs, std::span<const float> chunk,
                     std::vector<float>& scratch, ForwardCache& cache) {
    concat_input(obs, chunk, scratch);
    return nnet::mlp_forward(q, scratch, cache)[0];
}

}  // namespace

CriticEnsemble make_ensemble(int obs_dim, int chunk_dim, int hidden, Rng& rng) {
    if (obs_dim < 1 || chunk_dim < 1 || hidden < 1)
        throw ConfigError("make_ensemble: dims and hidden must be >= 1");
    CriticEnsemble ens;
    ens.obs_dim = obs_dim;
    ens.chunk_dim = chunk_dim;
    const std::vector<int> dims = {obs_dim + chunk_dim, hidden, hidden, 1};
    ens.q1 = nnet::make_mlp(dims, nnet::Activation::Silu, nnet::Activation::Identity, rng);
    ens.q2 = nnet::make_mlp(dims, nnet::Activation::Silu, nnet::Activation::Identity, rng);
    ens.t1 = ens.q1;
    ens.t2 = ens.q2;
    return ens;
}

float critic_forward(const MlpParams& q, std::span<const float> obs,
                     std::span<const float> chunk) {
    if (static_cast<int>(obs.size() + chunk.size()) != q.input_dim())
        throw ShapeError("critic_forward: obs+chunk size does not match critic input");
    std::vector<float> scratch;
    ForwardCache cache;
    return scalar_forward(q, obs, chunk, scratch, cache);
}

float q_value(const CriticEnsemble& ens, std::span<const float> obs,
              std::span<const float> chunk) {
    if (static_cast<int>(obs.size()) != ens.obs_dim ||
        static_cast<int>(chunk.size()) != ens.chunk_dim)
        throw ShapeError("q_value: obs or chunk size does not match ensemble");
    return std::min(critic_forward(ens.q1, obs, chunk), critic_forward(ens.q2, obs, chunk));
}

float target_q(const CriticEnsemble& ens, std::span<const float> obs,
               std::span<const float> chunk) {
    if (static_cast<int>(obs.size()) != ens.obs_dim ||
        static_cast<int>(chunk.size()) != ens.chunk_dim)
        throw ShapeError("target_q: obs or chunk size does not match ensemble");
    return std::min(critic_forward(ens.t1, obs, chunk), critic_forward(ens.t2, obs, chunk));
}

void polyak_update(CriticEnsemble& ens, float rho) {
    if (!(rho > 0.0f && rho <= 1.0f))
        throw ConfigError("polyak_update: rho must lie in (0,1], got " + std::to_string(rho));
    auto blend = [rho](MlpParams& tgt, const MlpParams& src) {
        for (std::size_t l = 0; l < tgt.layers.size(); ++l) {
            auto& t = tgt.layers[l];
            const auto& s = src.layers[l];
            for (std::size_t i = 0; i < t.w.size(); ++i)
                t.w[i] = (1.0f - rho) * t.w[i] + rho * s.w[i];
            for (std::size_t i = 0; i < t.b.size(); ++i)
                t.b[i] = (1.0f - rho) * t.b[i] + rho * s.b[i];
        }
    };
    blend(ens.t1, ens.q1);
    blend(ens.t2, ens.q2);
}

ActorNet make_actor(int obs_dim, int chunk_dim, int hidden, Rng& rng) {
    if (obs_dim < 1 || chunk_dim < 1 || hidden < 1)
        throw ConfigError("make_actor: dims and hidden must be >= 1");
    ActorNet actor;
    actor.chunk_dim = chunk_dim;
    actor.net = nnet::make_mlp({obs_dim, hidden, hidden, 2 * chunk_dim},
                               nnet::Activation::Silu, nnet::Activation::Identity, rng);
    return actor;
}

namespace {

// Sample from the squashed Gaussian given raw net outputs [mean | log_std].
// Fills the sample and returns log pi(a|s) computed in double.
ActorSample squash_sample(std::span<const float> raw, int dim, Rng& rng) {
    ActorSample s;
    s.action.resize(dim);
    s.pre_tanh.resize(dim);
    s.zeta.resize(dim);
    double logp = 0.0;
    for (int d = 0; d < dim; ++d) {
        const float mean = raw[d];
        const float log_std = clampf(raw[dim + d], kLogStdMin, kLogStdMax);
        const float std = std::exp(log_std);
        const float zeta = rng.normal_f();
        const float u = mean + std * zeta;
        const float a = std::tanh(u);
        s.zeta[d] = zeta;
        s.pre_tanh[d] = u;
        s.action[d] = a;
        logp += -static_cast<double>(log_std) - 0.5 * static_cast<double>(zeta) * zeta -
                kHalfLog2Pi - std::log(1.0 - static_cast<double>(a) * a + kTanhEps);
    }
    s.log_prob = static_cast<float>(logp);
    return s;
}

}  // namespace

ActorSample actor_sample(const ActorNet& actor, std::span<const float> obs, Rng& rng) {
    if (static_cast<int>(obs.size()) != actor.net.input_dim())
        throw ShapeError("actor_sample: obs size does not match actor input");
    const std::vector<float> raw = nnet::mlp_forward(actor.net, obs);
    return squash_sample(raw, actor.chunk_dim, rng);
}

std::vector<float> actor_mean(const ActorNet& actor, std::span<const float> obs) {
    if (static_cast<int>(obs.size()) != actor.net.input_dim())
        throw ShapeError("actor_mean: obs size does not match actor input");
    const std::vector<float> raw = nnet::mlp_forward(actor.net, obs);
    std::vector<float> mean(static_cast<std::size_t>(actor.chunk_dim));
    for (int d = 0; d < actor.chunk_dim; ++d) mean[d] = std::tanh(raw[d]);
    return mean;
}

void ValueTrainConfig::validate() const {
    if (alpha < 0.0f) throw ConfigError("ValueTrainConfig: alpha must be >= 0");
    if (!(gamma > 0.0f && gamma < 1.0f))
        throw ConfigError("ValueTrainConfig: gamma must lie in (0,1)");
    if (!(rho_polyak > 0.0f && rho_polyak <= 1.0f))
        throw ConfigError("ValueTrainConfig: rho_polyak must lie in (0,1]");
    if (proposals < 1) throw ConfigError("ValueTrainConfig: proposals must be >= 1");
    if (batch_size < 1) throw ConfigError("ValueTrainConfig: batch_size must be >= 1");
    if (entropy_weight < 0.0f) throw ConfigError("ValueTrainConfig: entropy_weight must be >= 0");
    if (!(noise_augment_prob >= 0.0f && noise_augment_prob <= 1.0f))
        throw ConfigError("ValueTrainConfig: noise_augment_prob must lie in [0,1]");
    if (!(noise_tau_lo >= 0.0 && noise_tau_lo <= 1.0))
        throw ConfigError("ValueTrainConfig: noise_tau_lo must lie in [0,1]");
}

std::span<const float> ValueBatch::obs_row(int i) const {
    return {obs.data() + static_cast<std::size_t>(i) * obs_dim,
            static_cast<std::size_t>(obs_dim)};
}

std::span<const float> ValueBatch::act_row(int i) const {
    return {actions.data() + static_cast<std::size_t>(i) * chunk_dim,
            static_cast<std::size_t>(chunk_dim)};
}

std::span<const float> ValueBatch::next_obs_row(int i) const {
    return {next_obs.data() + static_cast<std::size_t>(i) * obs_dim,
            static_cast<std::size_t>(obs_dim)};
}

void ValueBatch::validate() const {
    const std::size_t n = reward.size();
    if (n == 0) throw ShapeError("ValueBatch: empty batch");
    if (obs_dim < 1 || chunk_dim < 1) throw ShapeError("ValueBatch: dims must be >= 1");
    if (obs.size() != n * obs_dim || next_obs.size() != n * obs_dim)
        throw ShapeError("ValueBatch: obs arrays do not match batch size");
    if (actions.size() != n * chunk_dim)
        throw ShapeError("ValueBatch: action array does not match batch size");
    if (mc.size() != n || terminal.size() != n)
        throw ShapeError("ValueBatch: mc/terminal arrays do not match batch size");
}

ValueBatch value_batch_from_chunks(const std::vector<data::ChunkRow>& rows,
                                   std::span<const int> indices,
                                   const data::NormStats& stats) {
    if (indices.empty()) throw ConfigError("value_batch_from_chunks: empty index list");
    const int obs_dim = static_cast<int>(stats.obs_mean.size());
    ValueBatch b;
    b.obs_dim = obs_dim;
    b.chunk_dim = static_cast<int>(rows.at(static_cast<std::size_t>(indices[0])).actions.size());
    for (int idx : indices) {
        const auto& row = rows.at(static_cast<std::size_t>(idx));
        if (static_cast<int>(row.obs.size()) != obs_dim ||
            static_cast<int>(row.actions.size()) != b.chunk_dim)
            throw ShapeError("value_batch_from_chunks: inconsistent row shapes");
        b.obs.insert(b.obs.end(), row.obs.begin(), row.obs.end());
        b.next_obs.insert(b.next_obs.end(), row.next_obs.begin(), row.next_obs.end());
        b.actions.insert(b.actions.end(), row.actions.begin(), row.actions.end());
        b.reward.push_back(row.reward);
        b.mc.push_back(row.mc);
        b.terminal.push_back(row.terminal ? 1 : 0);
    }
    for (int r = 0; r < b.size(); ++r) {
        std::span<float> o(b.obs.data() + static_cast<std::size_t>(r) * obs_dim,
                           static_cast<std::size_t>(obs_dim));
        std::span<float> no(b.next_obs.data() + static_cast<std::size_t>(r) * obs_dim,
                            static_cast<std::size_t>(obs_dim));
        data::normalize_obs(stats, o);
        data::normalize_obs(stats, no);
    }
    data::normalize_act(stats, std::span<float>(b.actions));
    b.validate();
    return b;
}

std::vector<float> bellman_target(const CriticEnsemble& ens, const ActorNet& actor,
                                  const ValueBatch& batch, float gamma, Rng& rng) {
    batch.validate();
    if (batch.obs_dim != ens.obs_dim || batch.chunk_dim != ens.chunk_dim)
        throw ShapeError("bellman_target: batch shape does not match ensemble");
    std::vector<float> y(static_cast<std::size_t>(batch.size()));
    for (int r = 0; r < batch.size(); ++r) {
        if (batch.terminal[r]) {
            y[r] = batch.reward[r];  // terminal rows bootstrap nothing
            continue;
        }
        const auto next = batch.next_obs_row(r);
        const ActorSample a = actor_sample(actor, next, rng);
        y[r] = batch.reward[r] + gamma * target_q(ens, next, a.action);
    }
    return y;
}

CalqlTerms calql_loss(const CriticEnsemble& ens, const ActorNet& actor, const ValueBatch& batch,
                      const ValueTrainConfig& cfg, Rng& rng) {
    cfg.validate();
    batch.validate();
    if (batch.obs_dim != ens.obs_dim || batch.chunk_dim != ens.chunk_dim)
        throw ShapeError("calql_loss: batch shape does not match ensemble");

    const int B = batch.size();
    const int D = ens.chunk_dim;
    const int m = cfg.proposals;

    // RNG consumption order, pinned for replay: (1) one actor draw per
    // non-terminal row for the Bellman targets, (2) per row an augmentation
    // coin plus, on hit, tau and a fresh noise chunk, (3) per row m actor
    // proposals (skipped entirely when alpha is 0).
    const std::vector<float> y = bellman_target(ens, actor, batch, cfg.gamma, rng);

    CalqlTerms out;
    out.g1 = MlpGrads::zeros_like(ens.q1);
    out.g2 = MlpGrads::zeros_like(ens.q2);

    std::vector<float> chunk_in(static_cast<std::size_t>(D));
    std::vector<float> scratch;
    ForwardCache cache;
    std::vector<float> upstream(1);
    const MlpParams* critics[2] = {&ens.q1, &ens.q2};
    MlpGrads* grads[2] = {&out.g1, &out.g2};

    double td[2] = {0.0, 0.0};
    double reg[2] = {0.0, 0.0};
    double sum_min_q = 0.0;
    const float inv_b = 1.0f / static_cast<float>(B);
    const float inv_bm = inv_b / static_cast<float>(m);

    std::vector<ActorSample> proposals(static_cast<std::size_t>(m));
    for (int r = 0; r < B; ++r) {
        const auto obs = batch.obs_row(r);
        const auto act = batch.act_row(r);

        // Deployment-matched noising of the critic input chunk.
        const bool augment = rng.uniform() < cfg.noise_augment_prob;
        if (augment) {
            const float tau = static_cast<float>(rng.uniform(cfg.noise_tau_lo, 1.0));
            for (int d = 0; d < D; ++d)
                chunk_in[d] = tau * act[d] + (1.0f - tau) * rng.normal_f();
        } else {
            std::copy(act.begin(), act.end(), chunk_in.begin());
        }

        if (cfg.alpha > 0.0f)
            for (int j = 0; j < m; ++j) proposals[j] = actor_sample(actor, obs, rng);

        float qmin = 0.0f;
        for (int i = 0; i < 2; ++i) {
            const float q = scalar_forward(*critics[i], obs, chunk_in, scratch, cache);
            qmin = i == 0 ? q : std::min(qmin, q);
            const float delta = q - y[r];
            td[i] += static_cast<double>(delta) * delta;
            // Data-chunk gradient: TD pull plus the -alpha E_D[Q] term.
            upstream[0] = (delta - cfg.alpha) * inv_b;
            nnet::mlp_backward(*critics[i], cache, upstream, *grads[i]);
            reg[i] -= q;

            if (cfg.alpha > 0.0f) {
                double prop = 0.0;
                for (int j = 0; j < m; ++j) {
                    const float qp =
                        scalar_forward(*critics[i], obs, proposals[j].action, scratch, cache);
                    if (qp > batch.mc[r]) {
                        prop += qp;
                        upstream[0] = cfg.alpha * inv_bm;
                        nnet::mlp_backward(*critics[i], cache, upstream, *grads[i]);
                    } else {
                        prop += batch.mc[r];  // clamped to the calibration floor
                    }
                }
                reg[i] += prop / m;
            } else {
                reg[i] += batch.mc[r];  // alpha = 0: regularizer reported but untrained
            }
        }
        sum_min_q += qmin;
    }

    out.td = static_cast<float>(0.5 * (td[0] + td[1]) / B);
    out.reg = static_cast<float>((reg[0] + reg[1]) / B);
    out.loss = out.td + cfg.alpha * out.reg;
    out.mean_q = static_cast<float>(sum_min_q / B);
    if (!std::isfinite(out.loss)) throw NumericError("calql_loss: non-finite loss");
    return out;
}

ValueTrainState ValueTrainState::init(const CriticEnsemble& ens, const ActorNet& actor) {
    ValueTrainState st;
    st.adam_q1 = nnet::AdamState::zeros_like(ens.q1);
    st.adam_q2 = nnet::AdamState::zeros_like(ens.q2);
    st.adam_actor = nnet::AdamState::zeros_like(actor.net);
    return st;
}

ValueStepLog train_step_value(CriticEnsemble& ens, ActorNet& actor, ValueTrainState& state,
                              const ValueBatch& batch, const ValueTrainConfig& cfg, Rng& rng,
                              const MlpParams* frozen_flow) {
    if (frozen_flow != nullptr) {
        const std::uint64_t cs = nnet::params_checksum(*frozen_flow);
        if (state.frozen_checksum == 0)
            state.frozen_checksum = cs;  // latch on first sight
        else if (state.frozen_checksum != cs)
            throw FrozenViolationError(
                "train_step_value: frozen flow parameters changed (checksum " +
                std::to_string(cs) + " != " + std::to_string(state.frozen_checksum) + ")");
    }

    CalqlTerms terms = calql_loss(ens, actor, batch, cfg, rng);
    nnet::adam_step(ens.q1, terms.g1, state.adam_q1, cfg.critic_adam);
    nnet::adam_step(ens.q2, terms.g2, state.adam_q2, cfg.critic_adam);

    // Actor step: maximize min-Q of its own samples plus an entropy bonus,
    // reparametrized through a = tanh(mean + std * zeta).
    const int B = batch.size();
    const int D = ens.chunk_dim;
    MlpGrads actor_grads = MlpGrads::zeros_like(actor.net);
    ForwardCache actor_cache, cache1, cache2;
    MlpGrads critic_scratch = MlpGrads::zeros_like(ens.q1);
    std::vector<float> input_grad, scratch;
    std::vector<float> upstream(static_cast<std::size_t>(2 * D));
    const std::vector<float> one = {1.0f};
    double loss_sum = 0.0, logp_sum = 0.0;
    const float inv_b = 1.0f / static_cast<float>(B);
    for (int r = 0; r < B; ++r) {
        const auto obs = batch.obs_row(r);
        const auto& raw = nnet::mlp_forward(actor.net, obs, actor_cache);
        ActorSample s = squash_sample(raw, D, rng);

        const float q1 = scalar_forward(ens.q1, obs, s.action, scratch, cache1);
        const float q2 = scalar_forward(ens.q2, obs, s.action, scratch, cache2);
        const bool first_active = q1 <= q2;
        const float qmin = first_active ? q1 : q2;
        // dQ/da of the active critic via its input gradient; the critic's
        // own parameter gradients land in a discarded scratch buffer.
        const MlpParams& active = first_active ? ens.q1 : ens.q2;
        nnet::mlp_backward(active, first_active ? cache1 : cache2, one, critic_scratch,
                           &input_grad);

        loss_sum += cfg.entropy_weight * s.log_prob - qmin;
        logp_sum += s.log_prob;

        for (int d = 0; d < D; ++d) {
            const float a = s.action[d];
            const float one_m_a2 = 1.0f - a * a;
            // Weight of d log(1-a^2+eps)/du relative to the eps-free form.
            const float w = one_m_a2 / (one_m_a2 + kTanhEps);
            const float dq_da = input_grad[obs.size() + d];
            const float raw_log_std = raw[D + d];
            const float log_std = clampf(raw_log_std, kLogStdMin, kLogStdMax);
            const float std = std::exp(log_std);
            const float du_dlogstd = std * s.zeta[d];

            const float dlogp_du = 2.0f * a * w;
            const float dq_du = dq_da * one_m_a2;
            upstream[d] = (cfg.entropy_weight * dlogp_du - dq_du) * inv_b;
            float g_logstd =
                cfg.entropy_weight * (-1.0f + dlogp_du * du_dlogstd) - dq_du * du_dlogstd;
            if (raw_log_std < kLogStdMin || raw_log_std > kLogStdMax) g_logstd = 0.0f;
            upstream[D + d] = g_logstd * inv_b;
        }
        nnet::mlp_backward(actor.net, actor_cache, upstream, actor_grads);
    }
    nnet::adam_step(actor.net, actor_grads, state.adam_actor, cfg.actor_adam);

    polyak_update(ens, cfg.rho_polyak);

    ValueStepLog log;
    log.calql = terms.loss;
    log.td = terms.td;
    log.reg = terms.reg;
    log.mean_q = terms.mean_q;
    log.actor_loss = static_cast<float>(loss_sum / B);
    log.entropy = static_cast<float>(-logp_sum / B);
    return log;
}

int select_best(flow::CandidateSet& set, const CriticEnsemble& ens,
                std::span<const float> obs) {
    if (set.chunks.empty()) throw ShapeError("select_best: empty candidate set");
    set.values.resize(set.chunks.size());
    for (std::size_t n = 0; n < set.chunks.size(); ++n)
        set.values[n] = q_value(ens, obs, set.chunks[n].values);
    set.selected = argmax_lowest_tie(set.values);
    return set.selected;
}

}  // namespace hume::value
