#include "hume/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "hume/binio.hpp"

namespace hume::nnet {

namespace {

constexpr char kMagic[8] = {'H', 'U', 'M', 'E', 'P', 'A', 'R', 'M'};
constexpr std::uint32_t kVersion = 1;

float apply_act(Activation a, float z) {
    switch (a) {
        case Activation::Identity: return z;
        case Activation::Relu: return z > 0.0f ? z : 0.0f;
        case Activation::Silu: return z / (1.0f + std::exp(-z));
        case Activation::Tanh: return std::tanh(z);
    }
    throw ShapeError("unknown activation");
}

float act_deriv(Activation a, float z) {
    switch (a) {
        case Activation::Identity: return 1.0f;
        case Activation::Relu: return z > 0.0f ? 1.0f : 0.0f;
        case Activation::Silu: {
            float s = 1.0f / (1.0f + std::exp(-z));
            return s * (1.0f + z * (1.0f - s));
        }
        case Activation::Tanh: {
            float t = std::tanh(z);
            return 1.0f - t * t;
        }
    }
    throw ShapeError("unknown activation");
}

void check_layer_shapes(const MlpParams& p) {
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const auto& L = p.layers[l];
        if (L.w.size() != static_cast<std::size_t>(L.in) * L.out || L.b.size() != static_cast<std::size_t>(L.out))
            throw ShapeError("layer " + std::to_string(l) + " has inconsistent weight shape");
        if (l > 0 && p.layers[l - 1].out != L.in)
            throw ShapeError("layer " + std::to_string(l) + " input dim " + std::to_string(L.in) +
                             " does not match previous output " + std::to_string(p.layers[l - 1].out));
    }
}

}  // namespace

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::Silu: return "silu";
        case Activation::Tanh: return "tanh";
    }
    return "?";
}

std::size_t MlpParams::param_count() const {
    std::size_t n = 0;
    for (const auto& L : layers) n += L.w.size() + L.b.size();
    return n;
}

MlpGrads MlpGrads::zeros_like(const MlpParams& p) {
    MlpGrads g;
    g.layers.resize(p.layers.size());
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        g.layers[l].w.assign(p.layers[l].w.size(), 0.0f);
        g.layers[l].b.assign(p.layers[l].b.size(), 0.0f);
    }
    return g;
}

void MlpGrads::add(const MlpGrads& other) {
    if (layers.size() != other.layers.size()) throw ShapeError("gradient layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        for (std::size_t i = 0; i < layers[l].w.size(); ++i) layers[l].w[i] += other.layers[l].w[i];
        for (std::size_t i = 0; i < layers[l].b.size(); ++i) layers[l].b[i] += other.layers[l].b[i];
    }
}

void MlpGrads::scale(float s) {
    for (auto& L : layers) {
        for (auto& x : L.w) x *= s;
        for (auto& x : L.b) x *= s;
    }
}

MlpParams make_mlp(const std::vector<int>& dims, Activation hidden, Activation output, Rng& rng) {
    if (dims.size() < 2) throw ShapeError("mlp needs at least input and output dims");
    for (int d : dims)
        if (d <= 0) throw ShapeError("mlp dims must be positive");
    MlpParams p;
    p.layers.resize(dims.size() - 1);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        DenseLayer& L = p.layers[l];
        L.in = dims[l];
        L.out = dims[l + 1];
        L.act = (l + 2 == dims.size()) ? output : hidden;
        L.w.resize(static_cast<std::size_t>(L.in) * L.out);
        L.b.assign(L.out, 0.0f);
        float bound = std::sqrt(6.0f / static_cast<float>(L.in));
        for (auto& w : L.w) w = static_cast<float>(rng.uniform(-bound, bound));
    }
    return p;
}

const std::vector<float>& mlp_forward(const MlpParams& p, std::span<const float> x, ForwardCache& cache) {
    check_layer_shapes(p);
    if (static_cast<int>(x.size()) != p.input_dim())
        throw ShapeError("forward input dim " + std::to_string(x.size()) + " != " + std::to_string(p.input_dim()));
    cache.pre.resize(p.layers.size());
    cache.post.resize(p.layers.size());
    cache.input.assign(x.begin(), x.end());
    const float* cur = cache.input.data();
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const DenseLayer& L = p.layers[l];
        auto& pre = cache.pre[l];
        auto& post = cache.post[l];
        pre.resize(L.out);
        post.resize(L.out);
        for (int o = 0; o < L.out; ++o) {
            const float* wrow = L.w.data() + static_cast<std::size_t>(o) * L.in;
            float acc = L.b[o];
            for (int i = 0; i < L.in; ++i) acc += wrow[i] * cur[i];
            pre[o] = acc;
            post[o] = apply_act(L.act, acc);
        }
        cur = post.data();
    }
    return cache.post.back();
}

std::vector<float> mlp_forward(const MlpParams& p, std::span<const float> x) {
    ForwardCache cache;
    return mlp_forward(p, x, cache);
}

void mlp_backward(const MlpParams& p, const ForwardCache& cache, std::span<const float> upstream,
                  MlpGrads& grads, std::vector<float>* input_grad) {
    if (grads.layers.size() != p.layers.size()) throw ShapeError("gradient buffer does not match params");
    if (static_cast<int>(upstream.size()) != p.output_dim())
        throw ShapeError("upstream dim " + std::to_string(upstream.size()) + " != output dim");

    std::vector<float> delta(upstream.begin(), upstream.end());
    std::vector<float> next;
    for (int l = static_cast<int>(p.layers.size()) - 1; l >= 0; --l) {
        const DenseLayer& L = p.layers[l];
        const auto& pre = cache.pre[l];
        const float* below = (l == 0) ? cache.input.data() : cache.post[l - 1].data();
        auto& G = grads.layers[l];
        for (int o = 0; o < L.out; ++o) delta[o] *= act_deriv(L.act, pre[o]);
        for (int o = 0; o < L.out; ++o) {
            float d = delta[o];
            G.b[o] += d;
            float* grow = G.w.data() + static_cast<std::size_t>(o) * L.in;
            for (int i = 0; i < L.in; ++i) grow[i] += d * below[i];
        }
        bool need_below = l > 0 || input_grad != nullptr;
        if (need_below) {
            next.assign(L.in, 0.0f);
            for (int o = 0; o < L.out; ++o) {
                float d = delta[o];
                const float* wrow = L.w.data() + static_cast<std::size_t>(o) * L.in;
                for (int i = 0; i < L.in; ++i) next[i] += d * wrow[i];
            }
            delta.swap(next);
        }
    }
    if (input_grad) *input_grad = delta;
}

MlpGrads mlp_backward(const MlpParams& p, std::span<const float> x, std::span<const float> upstream,
                      std::vector<float>* input_grad) {
    ForwardCache cache;
    mlp_forward(p, x, cache);
    MlpGrads g = MlpGrads::zeros_like(p);
    mlp_backward(p, cache, upstream, g, input_grad);
    return g;
}

AdamState AdamState::zeros_like(const MlpParams& p) {
    AdamState st;
    st.m.resize(p.layers.size());
    st.v.resize(p.layers.size());
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        st.m[l].w.assign(p.layers[l].w.size(), 0.0f);
        st.m[l].b.assign(p.layers[l].b.size(), 0.0f);
        st.v[l].w.assign(p.layers[l].w.size(), 0.0f);
        st.v[l].b.assign(p.layers[l].b.size(), 0.0f);
    }
    return st;
}

namespace {

void adam_update_span(std::span<float> param, std::span<const float> grad, std::span<float> m,
                      std::span<float> v, const AdamHyper& hy, float bc1, float bc2,
                      std::size_t layer, const char* which) {
    for (std::size_t i = 0; i < param.size(); ++i) {
        float g = grad[i];
        if (!std::isfinite(g))
            throw NumericError("non-finite gradient in layer " + std::to_string(layer) + " (" + which + ")");
        m[i] = hy.beta1 * m[i] + (1.0f - hy.beta1) * g;
        v[i] = hy.beta2 * v[i] + (1.0f - hy.beta2) * g * g;
        float mhat = m[i] / bc1;
        float vhat = v[i] / bc2;
        param[i] -= hy.lr * mhat / (std::sqrt(vhat) + hy.eps);
    }
}

}  // namespace

void adam_step(MlpParams& p, const MlpGrads& g, AdamState& st, const AdamHyper& hy) {
    if (g.layers.size() != p.layers.size() || st.m.size() != p.layers.size())
        throw ShapeError("adam state does not match params");
    st.step += 1;
    float bc1 = 1.0f - std::pow(hy.beta1, static_cast<float>(st.step));
    float bc2 = 1.0f - std::pow(hy.beta2, static_cast<float>(st.step));
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        adam_update_span(p.layers[l].w, g.layers[l].w, st.m[l].w, st.v[l].w, hy, bc1, bc2, l, "weights");
        adam_update_span(p.layers[l].b, g.layers[l].b, st.m[l].b, st.v[l].b, hy, bc1, bc2, l, "biases");
    }
}

namespace {

struct ShadowNet {
    struct Layer {
        int in, out;
        Activation act;
        std::vector<double> w, b;
    };
    std::vector<Layer> layers;

    explicit ShadowNet(const MlpParams& p) {
        layers.resize(p.layers.size());
        for (std::size_t l = 0; l < p.layers.size(); ++l) {
            layers[l].in = p.layers[l].in;
            layers[l].out = p.layers[l].out;
            layers[l].act = p.layers[l].act;
            layers[l].w.assign(p.layers[l].w.begin(), p.layers[l].w.end());
            layers[l].b.assign(p.layers[l].b.begin(), p.layers[l].b.end());
        }
    }

    std::vector<double> forward(std::span<const float> x) const {
        std::vector<double> cur(x.begin(), x.end());
        for (const auto& L : layers) {
            std::vector<double> nxt(L.out);
            for (int o = 0; o < L.out; ++o) {
                double acc = L.b[o];
                const double* wrow = L.w.data() + static_cast<std::size_t>(o) * L.in;
                for (int i = 0; i < L.in; ++i) acc += wrow[i] * cur[i];
                switch (L.act) {
                    case Activation::Identity: break;
                    case Activation::Relu: acc = acc > 0 ? acc : 0; break;
                    case Activation::Silu: acc = acc / (1.0 + std::exp(-acc)); break;
                    case Activation::Tanh: acc = std::tanh(acc); break;
                }
                nxt[o] = acc;
            }
            cur.swap(nxt);
        }
        return cur;
    }
};

}  // namespace

GradCheckResult grad_check(const MlpParams& p, std::span<const float> x,
                           const std::function<double(std::span<const double>)>& loss,
                           const std::function<std::vector<float>(std::span<const float>)>& loss_grad) {
    // Analytic gradient through the f32 network.
    ForwardCache cache;
    const auto& out = mlp_forward(p, x, cache);
    std::vector<float> upstream = loss_grad(out);
    MlpGrads analytic = MlpGrads::zeros_like(p);
    mlp_backward(p, cache, upstream, analytic);

    const double eps = 1e-4;
    ShadowNet shadow(p);
    double max_rel = 0.0, sum_rel = 0.0;
    std::size_t count = 0;
    auto eval = [&]() { return loss(shadow.forward(x)); };
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        auto probe_span = [&](std::vector<double>& par, const std::vector<float>& grad) {
            for (std::size_t i = 0; i < par.size(); ++i) {
                double saved = par[i];
                par[i] = saved + eps;
                double up = eval();
                par[i] = saved - eps;
                double down = eval();
                par[i] = saved;
                double numeric = (up - down) / (2.0 * eps);
                double a = static_cast<double>(grad[i]);
                double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-4});
                max_rel = std::max(max_rel, rel);
                sum_rel += rel;
                ++count;
            }
        };
        probe_span(shadow.layers[l].w, analytic.layers[l].w);
        probe_span(shadow.layers[l].b, analytic.layers[l].b);
    }
    GradCheckResult r;
    r.max_rel_err = max_rel;
    r.mean_rel_err = count ? sum_rel / static_cast<double>(count) : 0.0;
    return r;
}

using io::ByteReader;
using io::ByteWriter;

void save_params(const MlpParams& p, const std::string& path) {
    check_layer_shapes(p);
    ByteWriter w(path);
    w.bytes(kMagic, 8);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(p.layers.size()));
    for (const auto& L : p.layers) {
        w.u32(static_cast<std::uint32_t>(L.in));
        w.u32(static_cast<std::uint32_t>(L.out));
        w.u8(static_cast<std::uint8_t>(L.act));
        w.f32s(L.w);
        w.f32s(L.b);
    }
    if (!w.out) throw MissingArtifactError("write failed: " + path);
}

MlpParams load_params(const std::string& path) {
    ByteReader r(path);
    char magic[8];
    r.bytes(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0) throw FormatError("bad parameter file magic", 0);
    std::uint64_t at = r.offset;
    std::uint32_t version = r.u32();
    if (version != kVersion) throw FormatError("unsupported parameter file version " + std::to_string(version), at);
    std::uint32_t n_layers = r.u32();
    if (n_layers == 0 || n_layers > 64) throw FormatError("implausible layer count " + std::to_string(n_layers), at + 4);
    MlpParams p;
    p.layers.resize(n_layers);
    for (auto& L : p.layers) {
        at = r.offset;
        L.in = static_cast<int>(r.u32());
        L.out = static_cast<int>(r.u32());
        if (L.in <= 0 || L.out <= 0 || static_cast<std::int64_t>(L.in) * L.out > (1 << 28))
            throw FormatError("implausible layer shape", at);
        std::uint8_t act = r.u8();
        if (act > static_cast<std::uint8_t>(Activation::Tanh)) throw FormatError("unknown activation code", at + 8);
        L.act = static_cast<Activation>(act);
        r.f32s(L.w, static_cast<std::size_t>(L.in) * L.out);
        r.f32s(L.b, static_cast<std::size_t>(L.out));
    }
    check_layer_shapes(p);
    return p;
}

std::uint64_t params_checksum(const MlpParams& p) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (const auto& L : p.layers) {
        std::uint32_t meta[2] = {static_cast<std::uint32_t>(L.in), static_cast<std::uint32_t>(L.out)};
        h = fnv1a(meta, sizeof(meta), h);
        std::uint8_t act = static_cast<std::uint8_t>(L.act);
        h = fnv1a(&act, 1, h);
        h = fnv1a(L.w.data(), L.w.size() * 4, h);
        h = fnv1a(L.b.data(), L.b.size() * 4, h);
    }
    return h;
}

}  // namespace hume::nnet
