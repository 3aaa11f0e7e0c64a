#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hume/common.hpp"
#include "hume/datastore.hpp"
#include "hume/runtime.hpp"
#include "hume/valuehead.hpp"

namespace hume::toolkit {

// ---------------------------------------------------------------------------
// Principal component analysis (power iteration with deflation).
// ---------------------------------------------------------------------------

struct PcaResult {
    int features = 0;
    int k = 0;
    std::vector<float> mean;    // features: column means of the fit data
    std::vector<float> basis;   // k * features, row-major; rows orthonormal
    std::vector<float> ratios;  // k explained-variance fractions, descending
};

// Top-k eigenvectors of the sample covariance of `matrix` (rows x cols,
// row-major).  Sign convention: each component's largest-magnitude entry
// is positive.  Throws ConfigError when rows < k or cols < k, ShapeError
// on a malformed matrix, and DegenerateRankError carrying the achieved
// rank when the data spans fewer than k directions.
PcaResult pca_fit(std::span<const float> matrix, int rows, int cols, int k = 2);

// Projects one row (length features) onto the basis: out[i] = b_i . (x - mean).
std::vector<float> pca_project(const PcaResult& p, std::span<const float> row);

// ---------------------------------------------------------------------------
// Value-map export: ground-truth and candidate chunks projected to 2-D
// with their critic scores, for external plotting.
// ---------------------------------------------------------------------------

// One logged candidate: the chunk (normalized action space) plus the index
// of the ground-truth row whose observation it was generated from.
struct CandidateLog {
    std::uint32_t row = 0;
    std::vector<float> chunk;
};

struct ValueMapExport {
    PcaResult pca;                   // fitted jointly on candidates + ground truth
    std::vector<float> gt_points;    // n_gt * 2
    std::vector<float> gt_q;         // n_gt
    std::vector<float> cand_points;  // n_cand * 2
    std::vector<float> cand_q;       // n_cand
    float mean_q_gt = 0.0f;
    float mean_q_cand = 0.0f;
};

// Projects ground-truth chunks (normalized with `stats`) and logged
// candidates into one shared 2-D plane and scores both with the ensemble.
// Requires at least 100 logged candidates (ConfigError).  When `path` is
// non-empty the export is also written there as JSON.
ValueMapExport export_valuemap(const std::vector<data::ChunkRow>& gt,
                               const std::vector<CandidateLog>& candidates,
                               const value::CriticEnsemble& ens, const data::NormStats& stats,
                               const std::string& path);

// Parses a written export.  FormatError (with byte offset) on damaged
// files; MissingArtifactError when the file cannot be opened.
ValueMapExport read_valuemap(const std::string& path);

// ---------------------------------------------------------------------------
// Ablation harness.
// ---------------------------------------------------------------------------

struct WilsonInterval {
    double rate = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

// 95% Wilson score interval for `successes` out of `n` trials.
WilsonInterval wilson95(int successes, int n);

struct AblationRow {
    runtime::Mode mode = runtime::Mode::Full;
    int episodes = 0;
    int successes = 0;
    WilsonInterval ci;
};

// Runs `episodes` seeded rollouts per mode (episode e uses base_seed + e,
// the same seeds across modes) and reports success rates with Wilson
// intervals.  An optional scorer replaces the learned critic in every mode
// that scores candidates.  Deterministic given seeds and checkpoints.
std::vector<AblationRow> run_ablation(const runtime::PolicyStack& stack, envsim::EnvId env,
                                      const runtime::ScheduleConfig& sched,
                                      const std::vector<runtime::Mode>& modes,
                                      int episodes, std::uint64_t base_seed,
                                      const runtime::ChunkScorer* scorer = nullptr);

// Machine-readable table (JSON) for the ablation rows.
void write_ablation(const std::vector<AblationRow>& rows, const std::string& path);

// Scores a candidate by simulating its actions from the given state and
// comparing the reached configuration against the one an expert-driven
// rollout of the same length reaches: negative endpoint distance in
// observation space.  Chunks are in normalized action space.
runtime::ChunkScorer make_endpoint_oracle(data::NormStats stats);

}  // namespace hume::toolkit
