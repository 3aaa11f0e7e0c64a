#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hume/common.hpp"

namespace hume::nnet {

enum class Activation : std::uint8_t {
    Identity = 0,
    Relu = 1,
    Silu = 2,
    Tanh = 3,
};

const char* activation_name(Activation a);

// One dense layer, weights row-major [out x in], bias [out].
struct DenseLayer {
    int in = 0;
    int out = 0;
    std::vector<float> w;
    std::vector<float> b;
    Activation act = Activation::Identity;
};

struct MlpParams {
    std::vector<DenseLayer> layers;

    int input_dim() const { return layers.empty() ? 0 : layers.front().in; }
    int output_dim() const { return layers.empty() ? 0 : layers.back().out; }
    std::size_t param_count() const;
};

// Gradients shaped exactly like the parameter set they refer to.
struct MlpGrads {
    struct LayerGrad {
        std::vector<float> w;
        std::vector<float> b;
    };
    std::vector<LayerGrad> layers;

    static MlpGrads zeros_like(const MlpParams& p);
    void add(const MlpGrads& other);
    void scale(float s);
};

// Kaiming-uniform weights (bound sqrt(6/fan_in)), zero biases.
MlpParams make_mlp(const std::vector<int>& dims, Activation hidden, Activation output, Rng& rng);

// Pre/post-activation buffers kept per layer so backward can reuse a
// forward pass; reusing one cache across calls avoids reallocation.
struct ForwardCache {
    std::vector<std::vector<float>> pre;
    std::vector<std::vector<float>> post;
    std::vector<float> input;
};

std::vector<float> mlp_forward(const MlpParams& p, std::span<const float> x);
const std::vector<float>& mlp_forward(const MlpParams& p, std::span<const float> x, ForwardCache& cache);

// Accumulates parameter gradients of <upstream, output> into `grads`
// (which must be zeros_like or a running sum), returns via `input_grad`
// (optional) the gradient w.r.t. the input vector.  Uses the cache from a
// prior mlp_forward call on the same input.
void mlp_backward(const MlpParams& p, const ForwardCache& cache, std::span<const float> upstream,
                  MlpGrads& grads, std::vector<float>* input_grad = nullptr);

// Convenience: forward + backward in one call on a fresh cache.
MlpGrads mlp_backward(const MlpParams& p, std::span<const float> x, std::span<const float> upstream,
                      std::vector<float>* input_grad = nullptr);

struct AdamHyper {
    float lr = 3e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

struct AdamState {
    std::vector<MlpGrads::LayerGrad> m;
    std::vector<MlpGrads::LayerGrad> v;
    std::int64_t step = 0;

    static AdamState zeros_like(const MlpParams& p);
};

// In-place bias-corrected Adam update.  Throws NumericError naming the
// first offending layer if any gradient entry is non-finite.
void adam_step(MlpParams& p, const MlpGrads& g, AdamState& st, const AdamHyper& hy);

// Central-difference gradient check against the analytic backward pass.
// Probes run a 64-bit shadow of the network at epsilon 1e-4 so the
// difference signal is not drowned by f32 quantization.  `loss` maps the
// network output to a scalar and must be deterministic; `loss_grad` is its
// analytic derivative.  Returns the worst relative error over parameters.
struct GradCheckResult {
    double max_rel_err = 0.0;
    double mean_rel_err = 0.0;
};
GradCheckResult grad_check(const MlpParams& p, std::span<const float> x,
                           const std::function<double(std::span<const double>)>& loss,
                           const std::function<std::vector<float>(std::span<const float>)>& loss_grad);

// Binary checkpoint IO.  Layout: magic "HUMEPARM", version u32, layer
// count u32, then per layer in/out u32, activation u8, row-major f32
// weights, f32 biases.  All integers and floats little-endian.
void save_params(const MlpParams& p, const std::string& path);
MlpParams load_params(const std::string& path);

std::uint64_t params_checksum(const MlpParams& p);

}  // namespace hume::nnet
