#include "hume/datastore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "hume/binio.hpp"

namespace hume::data {

namespace {
constexpr char kMagic[8] = {'H', 'U', 'M', 'E', 'D', 'A', 'T', 'A'};
constexpr char kNormMagic[8] = {'H', 'U', 'M', 'E', 'N', 'O', 'R', 'M'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void validate_episode(const Episode& e) {
    if (e.obs_dim == 0 || e.act_dim == 0) throw ShapeError("episode with zero dims");
    std::size_t n = e.rew.size();
    if (e.obs.size() != n * e.obs_dim || e.act.size() != n * e.act_dim)
        throw ShapeError("episode array lengths disagree");
    if (n == 0) throw ShapeError("empty episode");
}

Episode label_rewards(Episode e) {
    validate_episode(e);
    std::fill(e.rew.begin(), e.rew.end(), 0.0f);
    if (e.success) {
        std::size_t n = std::min<std::size_t>(3, e.length());
        std::fill(e.rew.end() - static_cast<std::ptrdiff_t>(n), e.rew.end(), 1.0f);
    }
    return e;
}

std::vector<float> mc_returns(const Episode& e, float gamma) {
    validate_episode(e);
    std::vector<float> out(e.length());
    double acc = 0.0;
    for (std::size_t i = e.length(); i-- > 0;) {
        acc = e.rew[i] + static_cast<double>(gamma) * acc;
        out[i] = static_cast<float>(acc);
    }
    return out;
}

float mc_return(const Episode& e, float gamma, std::size_t t) {
    if (t >= e.length()) throw ShapeError("mc_return tick out of range");
    double acc = 0.0;
    for (std::size_t i = e.length(); i-- > t;)
        acc = e.rew[i] + static_cast<double>(gamma) * acc;
    return static_cast<float>(acc);
}

NormStats compute_norm_stats(const std::vector<Episode>& eps, float act_bound) {
    if (eps.empty()) throw ShapeError("norm stats over empty dataset");
    std::uint32_t od = eps[0].obs_dim, ad = eps[0].act_dim;
    std::vector<double> os(od, 0.0), os2(od, 0.0), as(ad, 0.0), as2(ad, 0.0);
    std::size_t n = 0;
    for (const Episode& e : eps) {
        validate_episode(e);
        if (e.obs_dim != od || e.act_dim != ad) throw ShapeError("mixed dims in dataset");
        for (std::size_t t = 0; t < e.length(); ++t) {
            for (std::uint32_t j = 0; j < od; ++j) {
                double v = e.obs[t * od + j];
                os[j] += v;
                os2[j] += v * v;
            }
            for (std::uint32_t j = 0; j < ad; ++j) {
                double v = e.act[t * ad + j];
                as[j] += v;
                as2[j] += v * v;
            }
            ++n;
        }
    }
    NormStats st;
    st.act_bound = act_bound;
    st.obs_mean.resize(od);
    st.obs_std.resize(od);
    st.act_mean.resize(ad);
    st.act_std.resize(ad);
    auto finish = [&](std::vector<double>& s, std::vector<double>& s2, float* mean, float* sd,
                      std::uint32_t dim) {
        for (std::uint32_t j = 0; j < dim; ++j) {
            double m = s[j] / static_cast<double>(n);
            double var = std::max(0.0, s2[j] / static_cast<double>(n) - m * m);
            mean[j] = static_cast<float>(m);
            sd[j] = std::max(static_cast<float>(std::sqrt(var)), 1e-6f);
        }
    };
    finish(os, os2, st.obs_mean.data(), st.obs_std.data(), od);
    finish(as, as2, st.act_mean.data(), st.act_std.data(), ad);
    return st;
}

void normalize_obs(const NormStats& st, std::span<float> x) {
    if (x.size() != st.obs_mean.size()) throw ShapeError("normalize_obs dim mismatch");
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = (x[j] - st.obs_mean[j]) / st.obs_std[j];
}

void denormalize_obs(const NormStats& st, std::span<float> x) {
    if (x.size() != st.obs_mean.size()) throw ShapeError("denormalize_obs dim mismatch");
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = x[j] * st.obs_std[j] + st.obs_mean[j];
}

void normalize_act(const NormStats& st, std::span<float> a) {
    for (float& v : a) v /= st.act_bound;
}

void denormalize_act(const NormStats& st, std::span<float> a) {
    for (float& v : a) v *= st.act_bound;
}

void save_norm_stats(const NormStats& st, const std::string& path) {
    io::ByteWriter w(path);
    w.bytes(kNormMagic, 8);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(st.obs_mean.size()));
    w.u32(static_cast<std::uint32_t>(st.act_mean.size()));
    w.f32(st.act_bound);
    w.f32s(st.obs_mean);
    w.f32s(st.obs_std);
    w.f32s(st.act_mean);
    w.f32s(st.act_std);
    if (!w.out) throw MissingArtifactError("write failed: " + path);
}

NormStats load_norm_stats(const std::string& path) {
    io::ByteReader r(path);
    char magic[8];
    r.bytes(magic, 8);
    if (std::memcmp(magic, kNormMagic, 8) != 0) throw FormatError("bad norm stats magic", 0);
    std::uint64_t at = r.offset;
    if (r.u32() != kVersion) throw FormatError("unsupported norm stats version", at);
    at = r.offset;
    std::uint32_t od = r.u32(), ad = r.u32();
    if (od == 0 || od > 4096 || ad == 0 || ad > 4096)
        throw FormatError("implausible norm stats dims", at);
    NormStats st;
    st.act_bound = r.f32();
    r.f32s(st.obs_mean, od);
    r.f32s(st.obs_std, od);
    r.f32s(st.act_mean, ad);
    r.f32s(st.act_std, ad);
    return st;
}

std::vector<ChunkRow> make_chunks(const std::vector<Episode>& eps, int H, int stride,
                                  float gamma) {
    if (H < 1) throw ConfigError("chunk horizon must be >= 1");
    if (H > envsim::kEpisodeCap) throw ConfigError("chunk horizon exceeds episode cap");
    if (stride < 1) throw ConfigError("chunk stride must be >= 1");
    std::vector<ChunkRow> rows;
    for (std::size_t ei = 0; ei < eps.size(); ++ei) {
        const Episode& e = eps[ei];
        validate_episode(e);
        std::vector<float> rtg = mc_returns(e, gamma);
        std::size_t len = e.length();
        for (std::size_t t = 0; t < len; t += static_cast<std::size_t>(stride)) {
            ChunkRow row;
            row.episode = static_cast<std::uint32_t>(ei);
            row.t = static_cast<std::uint32_t>(t);
            auto o = e.obs_at(t);
            row.obs.assign(o.begin(), o.end());
            row.actions.resize(static_cast<std::size_t>(H) * e.act_dim);
            for (int h = 0; h < H; ++h) {
                std::size_t src = std::min(t + static_cast<std::size_t>(h), len - 1);
                std::memcpy(row.actions.data() + static_cast<std::size_t>(h) * e.act_dim,
                            e.act.data() + src * e.act_dim, e.act_dim * sizeof(float));
            }
            std::size_t end = t + static_cast<std::size_t>(H);
            row.pad = static_cast<std::uint32_t>(end > len ? end - len : 0);
            row.terminal = end >= len;
            auto no = e.obs_at(std::min(end, len - 1));
            row.next_obs.assign(no.begin(), no.end());
            row.reward = e.rew[t];
            row.mc = rtg[t];
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

void write_dataset(const std::vector<Episode>& eps, const std::string& path) {
    EnvId env = eps.empty() ? EnvId::Reach2d : eps[0].env;
    std::uint32_t od = eps.empty() ? 0 : eps[0].obs_dim;
    std::uint32_t ad = eps.empty() ? 0 : eps[0].act_dim;
    for (const Episode& e : eps) {
        validate_episode(e);
        if (e.env != env || e.obs_dim != od || e.act_dim != ad)
            throw ShapeError("dataset episodes must share env and dims");
    }
    io::ByteWriter w(path);
    w.bytes(kMagic, 8);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(env));
    w.u32(od);
    w.u32(ad);
    w.u32(static_cast<std::uint32_t>(eps.size()));
    for (const Episode& e : eps) {
        w.u32(static_cast<std::uint32_t>(e.length()));
        w.u8(e.success ? 1 : 0);
        w.f32s(e.obs);
        w.f32s(e.act);
        w.f32s(e.rew);
    }
    if (!w.out) throw MissingArtifactError("write failed: " + path);
}

std::vector<Episode> read_dataset(const std::string& path) {
    io::ByteReader r(path);
    char magic[8];
    r.bytes(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0) throw FormatError("bad dataset magic", 0);
    std::uint64_t at = r.offset;
    std::uint32_t version = r.u32();
    if (version != kVersion)
        throw FormatError("unsupported dataset version " + std::to_string(version), at);
    at = r.offset;
    std::uint32_t env_raw = r.u32();
    if (env_raw > 1) throw FormatError("unknown env tag " + std::to_string(env_raw), at);
    at = r.offset;
    std::uint32_t od = r.u32(), ad = r.u32(), count = r.u32();
    if (od > 4096 || ad > 4096) throw FormatError("implausible dims", at);
    if (count > 10'000'000) throw FormatError("implausible episode count", at + 8);
    if (count > 0 && (od == 0 || ad == 0)) throw FormatError("zero dims with episodes", at);
    std::vector<Episode> eps(count);
    for (Episode& e : eps) {
        e.env = static_cast<EnvId>(env_raw);
        e.obs_dim = od;
        e.act_dim = ad;
        at = r.offset;
        std::uint32_t len = r.u32();
        if (len == 0 || len > 1'000'000) throw FormatError("implausible episode length", at);
        at = r.offset;
        std::uint8_t succ = r.u8();
        if (succ > 1) throw FormatError("bad success flag", at);
        e.success = succ == 1;
        r.f32s(e.obs, static_cast<std::size_t>(len) * od);
        r.f32s(e.act, static_cast<std::size_t>(len) * ad);
        r.f32s(e.rew, len);
    }
    return eps;
}

}  // namespace hume::data
