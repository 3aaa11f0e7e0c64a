#include "hume/flowhead.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace hume::flow {

using nnet::MlpGrads;
using nnet::MlpParams;

ActionChunk make_chunk(int horizon, int act_dim, float fill, float noise_level) {
    if (horizon < 1 || act_dim < 1)
        throw ConfigError("make_chunk: horizon and act_dim must be >= 1");
    ActionChunk c;
    c.horizon = horizon;
    c.act_dim = act_dim;
    c.values.assign(static_cast<std::size_t>(horizon) * act_dim, fill);
    c.noise_level = noise_level;
    return c;
}

ActionChunk noise_chunk(int horizon, int act_dim, Rng& rng) {
    ActionChunk c = make_chunk(horizon, act_dim, 0.0f, 0.0f);
    for (float& v : c.values) v = rng.normal_f();
    return c;
}

std::vector<double> FlowConfig::ladder() const {
    std::vector<double> taus(static_cast<std::size_t>(candidates));
    for (int n = 0; n < candidates; ++n) taus[n] = 1.0 - static_cast<double>(n) * noise_gap;
    return taus;
}

void FlowConfig::validate() const {
    if (obs_dim < 1) throw ConfigError("FlowConfig: obs_dim must be >= 1");
    if (horizon < 1) throw ConfigError("FlowConfig: horizon must be >= 1");
    if (act_dim < 1) throw ConfigError("FlowConfig: act_dim must be >= 1");
    if (candidates < 1) throw ConfigError("FlowConfig: candidates must be >= 1");
    if (noise_gap < 0.0)
        throw ConfigError("FlowConfig: noise_gap must be >= 0, got " + std::to_string(noise_gap));
    if (noise_gap > 1.0 / candidates)
        throw ConfigError("FlowConfig: noise_gap " + std::to_string(noise_gap) +
                          " exceeds 1/candidates = " + std::to_string(1.0 / candidates));
    if (!(1.0 - (candidates - 1) * noise_gap > 0.0))
        throw ConfigError("FlowConfig: last ladder level 1-(N-1)*gap must stay positive");
    if (delta <= 0.0) throw ConfigError("FlowConfig: delta must be > 0");
    if (denoise_steps < 1) throw ConfigError("FlowConfig: denoise_steps must be >= 1");
    if (std::abs(delta * denoise_steps - 1.0) > 1e-9)
        throw ConfigError("FlowConfig: delta * denoise_steps must equal 1 within 1e-9, got " +
                          std::to_string(delta * denoise_steps));
    if (time_embed < 2 || time_embed % 2 != 0)
        throw ConfigError("FlowConfig: time_embed must be an even count >= 2");
    if (hidden < 1) throw ConfigError("FlowConfig: hidden must be >= 1");
}

ActionChunk interpolate(const ActionChunk& clean, const ActionChunk& noise, float tau) {
    if (clean.horizon != noise.horizon || clean.act_dim != noise.act_dim ||
        clean.values.size() != noise.values.size())
        throw ShapeError("interpolate: chunk shapes differ");
    if (!(tau >= 0.0f && tau <= 1.0f))
        throw ConfigError("interpolate: tau must lie in [0,1], got " + std::to_string(tau));
    ActionChunk out = clean;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = tau * clean.values[i] + (1.0f - tau) * noise.values[i];
    out.noise_level = tau;
    return out;
}

void time_features(double tau, int embed, std::vector<float>& out) {
    if (embed < 2 || embed % 2 != 0)
        throw ConfigError("time_features: embed must be an even count >= 2");
    out.resize(static_cast<std::size_t>(embed));
    for (int k = 0; k < embed / 2; ++k) {
        const double freq = M_PI * (k + 1);
        out[2 * k] = static_cast<float>(std::sin(freq * tau));
        out[2 * k + 1] = static_cast<float>(std::cos(freq * tau));
    }
}

nnet::MlpParams make_field_net(const FlowConfig& cfg, Rng& rng) {
    cfg.validate();
    return nnet::make_mlp({cfg.field_input_dim(), cfg.hidden, cfg.hidden, cfg.chunk_dim()},
                          nnet::Activation::Silu, nnet::Activation::Identity, rng);
}

std::span<const float> FlowBatch::obs_row(int i) const {
    if (i < 0 || i >= size()) throw ShapeError("FlowBatch: row index out of range");
    return {obs.data() + static_cast<std::size_t>(i) * obs_dim, static_cast<std::size_t>(obs_dim)};
}

std::span<const float> FlowBatch::act_row(int i) const {
    if (i < 0 || i >= size()) throw ShapeError("FlowBatch: row index out of range");
    const std::size_t d = static_cast<std::size_t>(horizon) * act_dim;
    return {actions.data() + static_cast<std::size_t>(i) * d, d};
}

FlowBatch batch_from_chunks(const std::vector<data::ChunkRow>& rows,
                            std::span<const int> indices, const data::NormStats& stats) {
    if (indices.empty()) throw ConfigError("batch_from_chunks: empty index list");
    const int obs_dim = static_cast<int>(stats.obs_mean.size());
    const int act_dim = static_cast<int>(stats.act_mean.size());
    const auto& first = rows.at(static_cast<std::size_t>(indices[0]));
    if (static_cast<int>(first.obs.size()) != obs_dim)
        throw ShapeError("batch_from_chunks: row obs size does not match norm stats");
    if (first.actions.size() % act_dim != 0)
        throw ShapeError("batch_from_chunks: row action size not a multiple of act_dim");
    FlowBatch b;
    b.obs_dim = obs_dim;
    b.act_dim = act_dim;
    b.horizon = static_cast<int>(first.actions.size()) / act_dim;
    b.obs.reserve(indices.size() * first.obs.size());
    b.actions.reserve(indices.size() * first.actions.size());
    for (int idx : indices) {
        const auto& row = rows.at(static_cast<std::size_t>(idx));
        if (row.obs.size() != first.obs.size() || row.actions.size() != first.actions.size())
            throw ShapeError("batch_from_chunks: inconsistent row shapes");
        b.obs.insert(b.obs.end(), row.obs.begin(), row.obs.end());
        b.actions.insert(b.actions.end(), row.actions.begin(), row.actions.end());
    }
    for (std::size_t r = 0; r < indices.size(); ++r)
        data::normalize_obs(stats, std::span<float>(b.obs.data() + r * obs_dim,
                                                    static_cast<std::size_t>(obs_dim)));
    data::normalize_act(stats, std::span<float>(b.actions));
    return b;
}

float fm_loss_and_grad_terms(const MlpParams& field, const FlowConfig& cfg,
                             const FlowBatch& batch, std::span<const float> taus,
                             std::span<const float> eps, MlpGrads& grads) {
    const int B = batch.size();
    if (B == 0) throw ConfigError("fm_loss: batch is empty");
    const int D = cfg.chunk_dim();
    if (batch.obs_dim != cfg.obs_dim || batch.horizon != cfg.horizon ||
        batch.act_dim != cfg.act_dim)
        throw ShapeError("fm_loss: batch shape does not match config");
    if (static_cast<int>(taus.size()) != B)
        throw ShapeError("fm_loss: need one tau per batch row");
    if (static_cast<int>(eps.size()) != B * D)
        throw ShapeError("fm_loss: need chunk_dim noise values per batch row");

    if (grads.layers.size() != field.layers.size()) {
        grads = MlpGrads::zeros_like(field);
    } else {
        for (auto& layer : grads.layers) {
            std::fill(layer.w.begin(), layer.w.end(), 0.0f);
            std::fill(layer.b.begin(), layer.b.end(), 0.0f);
        }
    }

    std::vector<float> input(static_cast<std::size_t>(cfg.field_input_dim()));
    std::vector<float> tau_feat;
    std::vector<float> upstream(static_cast<std::size_t>(D));
    nnet::ForwardCache cache;
    double loss = 0.0;
    const float inv_b = 1.0f / static_cast<float>(B);
    for (int b = 0; b < B; ++b) {
        const auto obs = batch.obs_row(b);
        const auto act = batch.act_row(b);
        const float tau = taus[b];
        const float* eb = eps.data() + static_cast<std::size_t>(b) * D;
        float* x = input.data();
        for (float v : obs) *x++ = v;
        for (int i = 0; i < D; ++i) *x++ = tau * act[i] + (1.0f - tau) * eb[i];
        time_features(tau, cfg.time_embed, tau_feat);
        for (float v : tau_feat) *x++ = v;

        const auto& out = nnet::mlp_forward(field, input, cache);
        double row = 0.0;
        for (int i = 0; i < D; ++i) {
            const float r = out[i] - (act[i] - eb[i]);
            row += static_cast<double>(r) * r;
            upstream[i] = 2.0f * r * inv_b;
        }
        loss += row;
        nnet::mlp_backward(field, cache, upstream, grads);
    }
    loss /= B;
    if (!std::isfinite(loss)) throw NumericError("fm_loss: non-finite loss");
    return static_cast<float>(loss);
}

float fm_loss_and_grad(const MlpParams& field, const FlowConfig& cfg, const FlowBatch& batch,
                       Rng& rng, MlpGrads& grads) {
    const int B = batch.size();
    if (B == 0) throw ConfigError("fm_loss: batch is empty");
    const int D = cfg.chunk_dim();
    std::vector<float> taus(static_cast<std::size_t>(B));
    std::vector<float> eps(static_cast<std::size_t>(B) * D);
    for (int b = 0; b < B; ++b) {
        taus[b] = static_cast<float>(rng.uniform());
        float* eb = eps.data() + static_cast<std::size_t>(b) * D;
        for (int i = 0; i < D; ++i) eb[i] = rng.normal_f();
    }
    return fm_loss_and_grad_terms(field, cfg, batch, taus, eps, grads);
}

namespace {

// Shared Euler core: `full` steps of `delta` plus an optional remainder
// step, with tau recomputed as tau_from + k*delta each iteration so long
// spans do not accumulate drift.
ActionChunk euler_core(const MlpParams& field, const FlowConfig& cfg, const ActionChunk& start,
                       std::span<const float> obs, double tau_from, double tau_to, double delta,
                       long long full, double remainder) {
    if (static_cast<int>(obs.size()) != cfg.obs_dim)
        throw ShapeError("euler_integrate: obs size does not match config");
    if (start.dim() != cfg.chunk_dim() || static_cast<int>(start.values.size()) != cfg.chunk_dim())
        throw ShapeError("euler_integrate: chunk shape does not match config");

    ActionChunk cur = start;
    std::vector<float> input(static_cast<std::size_t>(cfg.field_input_dim()));
    std::vector<float> tau_feat;
    nnet::ForwardCache cache;
    const int D = cfg.chunk_dim();
    const long long total = full + (remainder > 0.0 ? 1 : 0);
    for (long long k = 0; k < total; ++k) {
        const double tau = tau_from + static_cast<double>(k) * delta;
        const float step = static_cast<float>(k < full ? delta : remainder);
        float* x = input.data();
        for (float v : obs) *x++ = v;
        for (int i = 0; i < D; ++i) *x++ = cur.values[i];
        time_features(tau, cfg.time_embed, tau_feat);
        for (float v : tau_feat) *x++ = v;
        const auto& vel = nnet::mlp_forward(field, input, cache);
        for (int i = 0; i < D; ++i) cur.values[i] += step * vel[i];
    }
    if (!all_finite(cur.values)) throw NumericError("euler_integrate: non-finite chunk values");
    cur.noise_level = static_cast<float>(tau_to);
    return cur;
}

}  // namespace

ActionChunk euler_integrate(const MlpParams& field, const FlowConfig& cfg,
                            const ActionChunk& start, std::span<const float> obs, double tau_from,
                            double tau_to, double delta) {
    if (!(0.0 <= tau_from && tau_from <= tau_to && tau_to <= 1.0))
        throw ConfigError("euler_integrate: need 0 <= tau_from <= tau_to <= 1, got [" +
                          std::to_string(tau_from) + ", " + std::to_string(tau_to) + "]");
    if (delta <= 0.0) throw ConfigError("euler_integrate: delta must be > 0");
    const double ratio = (tau_to - tau_from) / delta;
    const long long steps = std::llround(ratio);
    if (std::abs(ratio - static_cast<double>(steps)) > 1e-9)
        throw ConfigError("euler_integrate: span " + std::to_string(tau_to - tau_from) +
                          " is not an integer multiple of delta " + std::to_string(delta));
    return euler_core(field, cfg, start, obs, tau_from, tau_to, delta, steps, 0.0);
}

ActionChunk integrate_span(const MlpParams& field, const FlowConfig& cfg, const ActionChunk& start,
                           std::span<const float> obs, double tau_from, double tau_to) {
    if (!(0.0 <= tau_from && tau_from <= tau_to && tau_to <= 1.0))
        throw ConfigError("integrate_span: need 0 <= tau_from <= tau_to <= 1, got [" +
                          std::to_string(tau_from) + ", " + std::to_string(tau_to) + "]");
    const double span = tau_to - tau_from;
    const long long full = static_cast<long long>(std::floor(span / cfg.delta + 1e-9));
    double remainder = span - static_cast<double>(full) * cfg.delta;
    if (remainder <= 1e-9) remainder = 0.0;
    return euler_core(field, cfg, start, obs, tau_from, tau_to, cfg.delta, full, remainder);
}

CandidateSet sample_candidates(const MlpParams& field, const FlowConfig& cfg,
                               std::span<const float> obs, Rng& rng) {
    cfg.validate();
    CandidateSet set;
    set.chunks.reserve(static_cast<std::size_t>(cfg.candidates));
    set.values.assign(static_cast<std::size_t>(cfg.candidates), 0.0f);
    for (double tau_n : cfg.ladder()) {
        ActionChunk eps = noise_chunk(cfg.horizon, cfg.act_dim, rng);
        set.chunks.push_back(integrate_span(field, cfg, eps, obs, 0.0, tau_n));
    }
    return set;
}

}  // namespace hume::flow
