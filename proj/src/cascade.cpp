#include "hume/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hume::cascade {

flow::FlowConfig S1Config::flow_view() const {
    flow::FlowConfig f;
    f.obs_dim = obs_dim;
    f.horizon = sub_horizon;
    f.act_dim = act_dim;
    f.candidates = 1;  // the refiner never fans out
    f.noise_gap = 0.1;
    f.delta = delta;
    f.denoise_steps = denoise_steps;
    f.time_embed = time_embed;
    f.hidden = hidden;
    return f;
}

void S1Config::validate() const {
    if (obs_dim < 1) throw ConfigError("S1Config: obs_dim must be >= 1");
    if (sub_horizon < 1) throw ConfigError("S1Config: sub_horizon must be >= 1");
    if (act_dim < 1) throw ConfigError("S1Config: act_dim must be >= 1");
    if (hidden < 1) throw ConfigError("S1Config: hidden must be >= 1");
    // Shared constraints (step count, embedding shape) live in the flow view.
    flow_view().validate();
}

std::vector<SubChunk> segment(const flow::ActionChunk& chunk, int h) {
    if (chunk.horizon < 1 || chunk.act_dim < 1 ||
        static_cast<int>(chunk.values.size()) != chunk.dim())
        throw ShapeError("segment: malformed chunk");
    if (h < 1 || chunk.horizon % h != 0)
        throw ConfigError("segment: sub-horizon h=" + std::to_string(h) +
                          " does not divide chunk horizon H=" + std::to_string(chunk.horizon));
    const int K = chunk.horizon / h;
    const int sub_dim = h * chunk.act_dim;
    std::vector<SubChunk> subs(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        SubChunk& s = subs[static_cast<std::size_t>(k)];
        s.horizon = h;
        s.act_dim = chunk.act_dim;
        s.tau_star = chunk.noise_level;
        s.k = k;
        const auto first = chunk.values.begin() + static_cast<std::ptrdiff_t>(k) * sub_dim;
        s.values.assign(first, first + sub_dim);
    }
    return subs;
}

flow::ActionChunk concatenate(const std::vector<SubChunk>& subs) {
    if (subs.empty()) throw ShapeError("concatenate: no sub-chunks");
    const SubChunk& head = subs.front();
    flow::ActionChunk chunk;
    chunk.horizon = head.horizon * static_cast<int>(subs.size());
    chunk.act_dim = head.act_dim;
    chunk.noise_level = head.tau_star;
    chunk.values.reserve(static_cast<std::size_t>(chunk.dim()));
    for (std::size_t k = 0; k < subs.size(); ++k) {
        const SubChunk& s = subs[k];
        if (s.horizon != head.horizon || s.act_dim != head.act_dim ||
            static_cast<int>(s.values.size()) != s.dim())
            throw ShapeError("concatenate: sub-chunk shapes disagree");
        if (s.k != static_cast<int>(k))
            throw ConfigError("concatenate: sub-chunks out of k-order at position " +
                              std::to_string(k));
        if (s.tau_star != head.tau_star)
            throw ConfigError("concatenate: sub-chunk noise levels disagree");
        chunk.values.insert(chunk.values.end(), s.values.begin(), s.values.end());
    }
    return chunk;
}

nnet::MlpParams make_s1_net(const S1Config& cfg, Rng& rng) {
    cfg.validate();
    return flow::make_field_net(cfg.flow_view(), rng);
}

float s1_loss_and_grad_terms(const nnet::MlpParams& field, const S1Config& cfg,
                             const flow::FlowBatch& batch, std::span<const float> omegas,
                             std::span<const float> eps, nnet::MlpGrads& grads) {
    cfg.validate();
    return flow::fm_loss_and_grad_terms(field, cfg.flow_view(), batch, omegas, eps, grads);
}

float s1_loss_and_grad(const nnet::MlpParams& field, const S1Config& cfg,
                       const flow::FlowBatch& batch, Rng& rng, nnet::MlpGrads& grads) {
    cfg.validate();
    return flow::fm_loss_and_grad(field, cfg.flow_view(), batch, rng, grads);
}

SubChunk cascade_denoise(const nnet::MlpParams& field, const S1Config& cfg,
                         const SubChunk& sub, std::span<const float> obs) {
    cfg.validate();
    if (sub.horizon != cfg.sub_horizon || sub.act_dim != cfg.act_dim ||
        static_cast<int>(sub.values.size()) != sub.dim())
        throw ShapeError("cascade_denoise: sub-chunk shape does not match config");
    if (!all_finite(sub.values)) throw NumericError("cascade_denoise: non-finite sub-chunk");

    // Integration restarts at omega = 0 from the partial values themselves;
    // the field sees the current omega, not the inherited noise level.
    flow::ActionChunk start;
    start.horizon = sub.horizon;
    start.act_dim = sub.act_dim;
    start.values = sub.values;
    start.noise_level = 0.0f;
    const flow::ActionChunk done =
        flow::euler_integrate(field, cfg.flow_view(), start, obs, 0.0, 1.0, cfg.delta);

    SubChunk out;
    out.horizon = sub.horizon;
    out.act_dim = sub.act_dim;
    out.values = done.values;
    out.tau_star = done.noise_level;  // fully denoised: 1
    out.k = sub.k;
    return out;
}

}  // namespace hume::cascade
