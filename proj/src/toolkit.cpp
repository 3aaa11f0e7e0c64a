#include "hume/toolkit.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

namespace hume::toolkit {

using nlohmann::json;

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

PcaResult pca_fit(std::span<const float> matrix, int rows, int cols, int k) {
    if (rows < 1 || cols < 1) throw ConfigError("pca_fit: rows and cols must be >= 1");
    if (matrix.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
        throw ShapeError("pca_fit: matrix size does not equal rows * cols");
    if (k < 1 || rows < k || cols < k)
        throw ConfigError("pca_fit: need 1 <= k <= min(rows, cols)");

    const auto at = [&](int r, int c) {
        return static_cast<double>(matrix[static_cast<std::size_t>(r) * cols + c]);
    };
    std::vector<double> mean(static_cast<std::size_t>(cols), 0.0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) mean[static_cast<std::size_t>(c)] += at(r, c);
    for (double& m : mean) m /= rows;

    // Sample covariance, dense (feature count is small at this scale).
    const double denom = rows > 1 ? rows - 1.0 : 1.0;
    std::vector<double> cov(static_cast<std::size_t>(cols) * cols, 0.0);
    for (int r = 0; r < rows; ++r)
        for (int a = 0; a < cols; ++a) {
            const double xa = at(r, a) - mean[static_cast<std::size_t>(a)];
            for (int b = a; b < cols; ++b)
                cov[static_cast<std::size_t>(a) * cols + b] +=
                    xa * (at(r, b) - mean[static_cast<std::size_t>(b)]);
        }
    for (int a = 0; a < cols; ++a)
        for (int b = a; b < cols; ++b) {
            cov[static_cast<std::size_t>(a) * cols + b] /= denom;
            cov[static_cast<std::size_t>(b) * cols + a] =
                cov[static_cast<std::size_t>(a) * cols + b];
        }
    double total_var = 0.0;
    for (int c = 0; c < cols; ++c) total_var += cov[static_cast<std::size_t>(c) * cols + c];

    PcaResult out;
    out.features = cols;
    out.k = k;
    out.mean.resize(static_cast<std::size_t>(cols));
    for (int c = 0; c < cols; ++c)
        out.mean[static_cast<std::size_t>(c)] = static_cast<float>(mean[static_cast<std::size_t>(c)]);
    out.basis.assign(static_cast<std::size_t>(k) * cols, 0.0f);
    out.ratios.assign(static_cast<std::size_t>(k), 0.0f);

    std::vector<std::vector<double>> comps;
    Rng rng(0xC0FFEEu);  // fixed stream: the fit is a pure function of the data
    for (int i = 0; i < k; ++i) {
        std::vector<double> v(static_cast<std::size_t>(cols));
        for (double& x : v) x = rng.normal_f();
        std::vector<double> w(static_cast<std::size_t>(cols));
        double lambda = 0.0;
        for (int it = 0; it < 1000; ++it) {
            // w = C v, then project out the components already extracted.
            for (int a = 0; a < cols; ++a) {
                double s = 0.0;
                for (int b = 0; b < cols; ++b)
                    s += cov[static_cast<std::size_t>(a) * cols + b] *
                         v[static_cast<std::size_t>(b)];
                w[static_cast<std::size_t>(a)] = s;
            }
            for (const auto& c : comps) {
                double d = 0.0;
                for (int a = 0; a < cols; ++a)
                    d += w[static_cast<std::size_t>(a)] * c[static_cast<std::size_t>(a)];
                for (int a = 0; a < cols; ++a) w[static_cast<std::size_t>(a)] -= d * c[static_cast<std::size_t>(a)];
            }
            double norm = 0.0;
            for (double x : w) norm += x * x;
            norm = std::sqrt(norm);
            if (norm <= total_var * 1e-12 + 1e-300) {
                lambda = 0.0;
                break;
            }
            double drift = 0.0;
            for (int a = 0; a < cols; ++a) {
                const double nv = w[static_cast<std::size_t>(a)] / norm;
                drift = std::max(drift, std::abs(nv - v[static_cast<std::size_t>(a)]));
                v[static_cast<std::size_t>(a)] = nv;
            }
            lambda = norm;  // |C v| with unit v after convergence
            if (drift < 1e-13) break;
        }
        // Rayleigh quotient of the converged direction on the deflated matrix.
        double rq = 0.0;
        for (int a = 0; a < cols; ++a) {
            double s = 0.0;
            for (int b = 0; b < cols; ++b)
                s += cov[static_cast<std::size_t>(a) * cols + b] * v[static_cast<std::size_t>(b)];
            rq += s * v[static_cast<std::size_t>(a)];
        }
        lambda = std::max(rq, 0.0);
        if (lambda <= total_var * 1e-9 + 1e-30)
            throw DegenerateRankError("pca_fit: data has rank " + std::to_string(i) +
                                          ", fewer than the requested " + std::to_string(k) +
                                          " components",
                                      i);

        // Deterministic sign: the largest-magnitude entry is positive.
        int arg = 0;
        for (int a = 1; a < cols; ++a)
            if (std::abs(v[static_cast<std::size_t>(a)]) > std::abs(v[static_cast<std::size_t>(arg)]))
                arg = a;
        if (v[static_cast<std::size_t>(arg)] < 0.0)
            for (double& x : v) x = -x;

        for (int a = 0; a < cols; ++a)
            out.basis[static_cast<std::size_t>(i) * cols + a] =
                static_cast<float>(v[static_cast<std::size_t>(a)]);
        out.ratios[static_cast<std::size_t>(i)] =
            static_cast<float>(total_var > 0.0 ? lambda / total_var : 0.0);

        // Deflate: C <- C - lambda v v^T.
        for (int a = 0; a < cols; ++a)
            for (int b = 0; b < cols; ++b)
                cov[static_cast<std::size_t>(a) * cols + b] -=
                    lambda * v[static_cast<std::size_t>(a)] * v[static_cast<std::size_t>(b)];
        comps.push_back(std::move(v));
    }
    return out;
}

std::vector<float> pca_project(const PcaResult& p, std::span<const float> row) {
    if (static_cast<int>(row.size()) != p.features)
        throw ShapeError("pca_project: row size does not match the fitted features");
    std::vector<float> out(static_cast<std::size_t>(p.k));
    for (int i = 0; i < p.k; ++i) {
        double s = 0.0;
        for (int c = 0; c < p.features; ++c)
            s += static_cast<double>(p.basis[static_cast<std::size_t>(i) * p.features + c]) *
                 (static_cast<double>(row[static_cast<std::size_t>(c)]) -
                  static_cast<double>(p.mean[static_cast<std::size_t>(c)]));
        out[static_cast<std::size_t>(i)] = static_cast<float>(s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Value-map export
// ---------------------------------------------------------------------------

namespace {

json pca_to_json(const PcaResult& p) {
    return json{{"features", p.features},
                {"k", p.k},
                {"mean", p.mean},
                {"basis", p.basis},
                {"ratios", p.ratios}};
}

PcaResult pca_from_json(const json& j) {
    PcaResult p;
    p.features = j.at("features").get<int>();
    p.k = j.at("k").get<int>();
    p.mean = j.at("mean").get<std::vector<float>>();
    p.basis = j.at("basis").get<std::vector<float>>();
    p.ratios = j.at("ratios").get<std::vector<float>>();
    return p;
}

float mean_of(const std::vector<float>& xs) {
    double s = 0.0;
    for (float x : xs) s += x;
    return xs.empty() ? 0.0f : static_cast<float>(s / static_cast<double>(xs.size()));
}

}  // namespace

ValueMapExport export_valuemap(const std::vector<data::ChunkRow>& gt,
                               const std::vector<CandidateLog>& candidates,
                               const value::CriticEnsemble& ens, const data::NormStats& stats,
                               const std::string& path) {
    if (gt.empty()) throw ConfigError("export_valuemap: no ground-truth chunks");
    if (candidates.size() < 100)
        throw ConfigError("export_valuemap: need at least 100 logged candidates, have " +
                          std::to_string(candidates.size()));
    const int chunk_dim = static_cast<int>(gt.front().actions.size());
    const int n_gt = static_cast<int>(gt.size());
    const int n_cand = static_cast<int>(candidates.size());

    // One joint fitting set: normalized ground truth, then candidates
    // (already in normalized action space).
    std::vector<float> joint;
    joint.reserve(static_cast<std::size_t>(n_gt + n_cand) * chunk_dim);
    for (const data::ChunkRow& row : gt) {
        if (static_cast<int>(row.actions.size()) != chunk_dim)
            throw ShapeError("export_valuemap: ragged ground-truth chunks");
        std::vector<float> a = row.actions;
        data::normalize_act(stats, a);
        joint.insert(joint.end(), a.begin(), a.end());
    }
    for (const CandidateLog& c : candidates) {
        if (static_cast<int>(c.chunk.size()) != chunk_dim)
            throw ShapeError("export_valuemap: candidate chunk size mismatch");
        if (c.row >= gt.size())
            throw ShapeError("export_valuemap: candidate references a missing row");
        joint.insert(joint.end(), c.chunk.begin(), c.chunk.end());
    }

    ValueMapExport out;
    out.pca = pca_fit(joint, n_gt + n_cand, chunk_dim, 2);

    const auto norm_obs = [&](const data::ChunkRow& row) {
        std::vector<float> o = row.obs;
        data::normalize_obs(stats, o);
        return o;
    };
    out.gt_points.reserve(static_cast<std::size_t>(n_gt) * 2);
    out.gt_q.reserve(static_cast<std::size_t>(n_gt));
    for (int i = 0; i < n_gt; ++i) {
        const std::span<const float> chunk{joint.data() + static_cast<std::size_t>(i) * chunk_dim,
                                           static_cast<std::size_t>(chunk_dim)};
        const std::vector<float> pt = pca_project(out.pca, chunk);
        out.gt_points.insert(out.gt_points.end(), pt.begin(), pt.end());
        out.gt_q.push_back(value::q_value(ens, norm_obs(gt[static_cast<std::size_t>(i)]), chunk));
    }
    out.cand_points.reserve(static_cast<std::size_t>(n_cand) * 2);
    out.cand_q.reserve(static_cast<std::size_t>(n_cand));
    for (int j = 0; j < n_cand; ++j) {
        const CandidateLog& c = candidates[static_cast<std::size_t>(j)];
        const std::vector<float> pt = pca_project(out.pca, c.chunk);
        out.cand_points.insert(out.cand_points.end(), pt.begin(), pt.end());
        out.cand_q.push_back(value::q_value(ens, norm_obs(gt[c.row]), c.chunk));
    }
    out.mean_q_gt = mean_of(out.gt_q);
    out.mean_q_cand = mean_of(out.cand_q);

    if (!path.empty()) {
        json j{{"schema", "hume-valuemap"},
               {"version", 1},
               {"pca", pca_to_json(out.pca)},
               {"gt", json{{"points", out.gt_points}, {"q", out.gt_q}}},
               {"cand", json{{"points", out.cand_points}, {"q", out.cand_q}}},
               {"summary",
                json{{"mean_q_gt", out.mean_q_gt}, {"mean_q_cand", out.mean_q_cand}}}};
        std::ofstream f(path, std::ios::binary);
        if (!f) throw MissingArtifactError("export_valuemap: cannot open " + path);
        f << j.dump(1) << '\n';
    }
    return out;
}

ValueMapExport read_valuemap(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MissingArtifactError("read_valuemap: cannot open " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("read_valuemap: ") + e.what(), e.byte);
    }
    try {
        if (j.value("schema", "") != "hume-valuemap")
            throw FormatError("read_valuemap: not a value-map file", 0);
        if (j.at("version").get<int>() != 1)
            throw FormatError("read_valuemap: unsupported version", 0);
        ValueMapExport out;
        out.pca = pca_from_json(j.at("pca"));
        out.gt_points = j.at("gt").at("points").get<std::vector<float>>();
        out.gt_q = j.at("gt").at("q").get<std::vector<float>>();
        out.cand_points = j.at("cand").at("points").get<std::vector<float>>();
        out.cand_q = j.at("cand").at("q").get<std::vector<float>>();
        out.mean_q_gt = j.at("summary").at("mean_q_gt").get<float>();
        out.mean_q_cand = j.at("summary").at("mean_q_cand").get<float>();
        if (out.pca.basis.size() != static_cast<std::size_t>(out.pca.k) * out.pca.features ||
            out.gt_points.size() != out.gt_q.size() * 2 ||
            out.cand_points.size() != out.cand_q.size() * 2)
            throw FormatError("read_valuemap: inconsistent array sizes", 0);
        return out;
    } catch (const json::exception& e) {
        throw FormatError(std::string("read_valuemap: ") + e.what(), 0);
    }
}

// ---------------------------------------------------------------------------
// Ablation harness
// ---------------------------------------------------------------------------

WilsonInterval wilson95(int successes, int n) {
    if (n < 1) throw ConfigError("wilson95: n must be >= 1");
    if (successes < 0 || successes > n)
        throw ConfigError("wilson95: successes must lie in [0, n]");
    constexpr double z = 1.959963984540054;  // 97.5th standard-normal percentile
    const double nn = n;
    const double p = successes / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double center = (p + z2 / (2.0 * nn)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
    WilsonInterval w;
    w.rate = p;
    w.lo = std::max(0.0, center - half);
    w.hi = std::min(1.0, center + half);
    return w;
}

std::vector<AblationRow> run_ablation(const runtime::PolicyStack& stack, envsim::EnvId env,
                                      const runtime::ScheduleConfig& sched,
                                      const std::vector<runtime::Mode>& modes,
                                      int episodes, std::uint64_t base_seed,
                                      const runtime::ChunkScorer* scorer) {
    if (modes.empty()) throw ConfigError("run_ablation: no modes requested");
    if (episodes < 1) throw ConfigError("run_ablation: episodes must be >= 1");
    std::vector<AblationRow> rows;
    rows.reserve(modes.size());
    for (runtime::Mode mode : modes) {
        AblationRow row;
        row.mode = mode;
        row.episodes = episodes;
        for (int e = 0; e < episodes; ++e) {
            const runtime::RolloutTrace t = runtime::rollout_episode(
                stack, env, base_seed + static_cast<std::uint64_t>(e), sched, mode, scorer);
            if (t.success) ++row.successes;
        }
        row.ci = wilson95(row.successes, episodes);
        rows.push_back(row);
    }
    return rows;
}

void write_ablation(const std::vector<AblationRow>& rows, const std::string& path) {
    json arr = json::array();
    for (const AblationRow& r : rows)
        arr.push_back(json{{"mode", runtime::mode_name(r.mode)},
                           {"episodes", r.episodes},
                           {"successes", r.successes},
                           {"rate", r.ci.rate},
                           {"wilson_lo", r.ci.lo},
                           {"wilson_hi", r.ci.hi}});
    json j{{"schema", "hume-ablation"}, {"version", 1}, {"rows", arr}};
    std::ofstream f(path, std::ios::binary);
    if (!f) throw MissingArtifactError("write_ablation: cannot open " + path);
    f << j.dump(1) << '\n';
}

runtime::ChunkScorer make_endpoint_oracle(data::NormStats stats) {
    return [stats = std::move(stats)](const envsim::EnvState& s,
                                      const flow::ActionChunk& chunk) -> float {
        if (chunk.act_dim != 2) throw ShapeError("endpoint oracle: actions must be 2-D");
        envsim::EnvState cand = s;
        bool done = false;
        for (int t = 0; t < chunk.horizon && !done; ++t) {
            std::vector<float> a{chunk.values[static_cast<std::size_t>(2 * t)],
                                 chunk.values[static_cast<std::size_t>(2 * t + 1)]};
            data::denormalize_act(stats, a);
            const envsim::StepOut out = envsim::step(cand, {a[0], a[1]});
            cand = out.state;
            done = out.done;
        }
        envsim::EnvState ref = s;
        done = false;
        for (int t = 0; t < chunk.horizon && !done; ++t) {
            const envsim::StepOut out = envsim::step(ref, envsim::expert_action(ref));
            ref = out.state;
            done = out.done;
        }
        const std::vector<float> oc = envsim::observe(cand);
        const std::vector<float> oe = envsim::observe(ref);
        double d2 = 0.0;
        for (std::size_t i = 0; i < oc.size(); ++i) {
            const double d = static_cast<double>(oc[i]) - static_cast<double>(oe[i]);
            d2 += d * d;
        }
        return static_cast<float>(-std::sqrt(d2));
    };
}

}  // namespace hume::toolkit
