#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "hume/config.hpp"
#include "hume/pipeline.hpp"
#include "hume/toolkit.hpp"

using namespace hume;

namespace {

std::string temp_path(const char* name) {
    return std::string("/tmp/hume_toolkit_") + name;
}

// --- brute-force symmetric 3x3 eigen solver (characteristic polynomial) ---

struct Eigen3 {
    std::array<double, 3> values;                 // descending
    std::array<std::array<double, 3>, 3> vectors;  // unit, sign-normalized
};

std::array<double, 3> cross(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Eigen3 eigen3_brute(const std::array<std::array<double, 3>, 3>& c) {
    // Trigonometric solution of the characteristic cubic of a symmetric
    // matrix (all roots real).
    const double p1 = c[0][1] * c[0][1] + c[0][2] * c[0][2] + c[1][2] * c[1][2];
    const double q = (c[0][0] + c[1][1] + c[2][2]) / 3.0;
    const double p2 = (c[0][0] - q) * (c[0][0] - q) + (c[1][1] - q) * (c[1][1] - q) +
                      (c[2][2] - q) * (c[2][2] - q) + 2.0 * p1;
    const double p = std::sqrt(p2 / 6.0);
    std::array<std::array<double, 3>, 3> b{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) b[i][j] = (c[i][j] - (i == j ? q : 0.0)) / p;
    const double detb = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) -
                        b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0]) +
                        b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    const double r = std::clamp(detb / 2.0, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    Eigen3 out;
    out.values[0] = q + 2.0 * p * std::cos(phi);
    out.values[2] = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
    out.values[1] = 3.0 * q - out.values[0] - out.values[2];

    for (int i = 0; i < 3; ++i) {
        const double lam = out.values[i];
        std::array<std::array<double, 3>, 3> m = c;
        for (int d = 0; d < 3; ++d) m[d][d] -= lam;
        // The null direction is orthogonal to two independent rows.
        std::array<std::array<double, 3>, 3> cands = {cross(m[0], m[1]), cross(m[0], m[2]),
                                                      cross(m[1], m[2])};
        std::array<double, 3> best = cands[0];
        double best_n = 0.0;
        for (const auto& v : cands) {
            const double n = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            if (n > best_n) {
                best_n = n;
                best = v;
            }
        }
        const double n = std::sqrt(best_n);
        for (double& x : best) x /= n;
        int arg = 0;
        for (int d = 1; d < 3; ++d)
            if (std::abs(best[d]) > std::abs(best[arg])) arg = d;
        if (best[arg] < 0.0)
            for (double& x : best) x = -x;
        out.vectors[i] = best;
    }
    return out;
}

// Tiny reach2d stack for the ablation harness (random-init nets).
runtime::PolicyStack tiny_stack() {
    runtime::PolicyStack st;
    st.flow_cfg.obs_dim = envsim::obs_dim(envsim::EnvId::Reach2d);
    st.flow_cfg.horizon = 4;
    st.flow_cfg.act_dim = 2;
    st.flow_cfg.candidates = 3;
    st.flow_cfg.hidden = 32;
    st.s1_cfg.obs_dim = st.flow_cfg.obs_dim;
    st.s1_cfg.sub_horizon = 2;
    st.s1_cfg.act_dim = 2;
    st.s1_cfg.hidden = 32;
    Rng rng(900);
    st.flow_field = flow::make_field_net(st.flow_cfg, rng);
    st.s1_field = cascade::make_s1_net(st.s1_cfg, rng);
    st.ensemble = value::make_ensemble(st.flow_cfg.obs_dim, st.flow_cfg.chunk_dim(), 32, rng);
    st.stats.obs_mean.assign(static_cast<std::size_t>(st.flow_cfg.obs_dim), 0.0f);
    st.stats.obs_std.assign(static_cast<std::size_t>(st.flow_cfg.obs_dim), 1.0f);
    return st;
}

runtime::ScheduleConfig tiny_sched() {
    runtime::ScheduleConfig cfg;
    cfg.tick_period = 1.0 / 90.0;
    cfg.s1_period = 2.0 / 90.0;
    cfg.s2_period = 0.05;
    return cfg;
}

}  // namespace

TEST_CASE("pca finds an axis-aligned component exactly") {
    // Points spread along the first axis only.
    std::vector<float> m;
    for (int i = -5; i <= 5; ++i) {
        m.push_back(static_cast<float>(i));
        m.push_back(0.0f);
        m.push_back(0.0f);
    }
    toolkit::PcaResult p = toolkit::pca_fit(m, 11, 3, 1);
    CHECK(p.basis[0] == doctest::Approx(1.0f).epsilon(1e-6));
    CHECK(std::abs(p.basis[1]) < 1e-6f);
    CHECK(std::abs(p.basis[2]) < 1e-6f);
    CHECK(p.ratios[0] == doctest::Approx(1.0f).epsilon(1e-6));
    CHECK(p.mean[0] == doctest::Approx(0.0f));

    SUBCASE("asking for more components than the data spans is degenerate") {
        try {
            toolkit::pca_fit(m, 11, 3, 2);
            FAIL("expected DegenerateRankError");
        } catch (const DegenerateRankError& e) {
            CHECK(e.achieved_rank == 1);
        }
    }
    SUBCASE("constant data has rank zero") {
        std::vector<float> flat(12, 3.5f);
        try {
            toolkit::pca_fit(flat, 4, 3, 1);
            FAIL("expected DegenerateRankError");
        } catch (const DegenerateRankError& e) {
            CHECK(e.achieved_rank == 0);
        }
    }
    SUBCASE("shape and bound errors") {
        CHECK_THROWS_AS(toolkit::pca_fit(m, 10, 3, 1), ShapeError);
        CHECK_THROWS_AS(toolkit::pca_fit(m, 11, 3, 4), ConfigError);  // k > cols
        std::vector<float> two = {1.0f, 2.0f, 3.0f, 4.0f, 5.0f, 6.0f};
        CHECK_THROWS_AS(toolkit::pca_fit(two, 2, 3, 3), ConfigError);  // k > rows
    }
}

TEST_CASE("pca matches a brute-force characteristic-polynomial eigen solver") {
    // x = R diag(s) z with distinct scales: eigenvalues are well separated.
    const std::array<double, 3> scales = {2.0, 1.1, 0.5};
    std::array<std::array<double, 3>, 3> r = {{{1.0, 2.0, 0.5}, {0.3, -1.0, 1.0},
                                               {0.8, 0.2, -0.4}}};
    // Gram-Schmidt the fixed frame.
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < i; ++j) {
            double d = 0.0;
            for (int c = 0; c < 3; ++c) d += r[i][c] * r[j][c];
            for (int c = 0; c < 3; ++c) r[i][c] -= d * r[j][c];
        }
        double n = 0.0;
        for (int c = 0; c < 3; ++c) n += r[i][c] * r[i][c];
        n = std::sqrt(n);
        for (int c = 0; c < 3; ++c) r[i][c] /= n;
    }

    const int rows = 400;
    Rng rng(321);
    std::vector<float> m;
    m.reserve(rows * 3);
    for (int i = 0; i < rows; ++i) {
        std::array<double, 3> z = {rng.normal_f() * scales[0], rng.normal_f() * scales[1],
                                   rng.normal_f() * scales[2]};
        for (int c = 0; c < 3; ++c)
            m.push_back(static_cast<float>(r[0][c] * z[0] + r[1][c] * z[1] + r[2][c] * z[2]));
    }

    // Sample covariance in double, straight from the definition.
    std::array<double, 3> mu = {0, 0, 0};
    for (int i = 0; i < rows; ++i)
        for (int c = 0; c < 3; ++c) mu[static_cast<std::size_t>(c)] += m[static_cast<std::size_t>(i * 3 + c)];
    for (double& x : mu) x /= rows;
    std::array<std::array<double, 3>, 3> cov{};
    for (int i = 0; i < rows; ++i)
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                cov[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] +=
                    (m[static_cast<std::size_t>(i * 3 + a)] - mu[static_cast<std::size_t>(a)]) *
                    (m[static_cast<std::size_t>(i * 3 + b)] - mu[static_cast<std::size_t>(b)]);
    for (auto& row : cov)
        for (double& x : row) x /= rows - 1.0;

    const Eigen3 oracle = eigen3_brute(cov);
    const toolkit::PcaResult p = toolkit::pca_fit(m, rows, 3, 3);

    const double total = oracle.values[0] + oracle.values[1] + oracle.values[2];
    for (int i = 0; i < 3; ++i) {
        INFO("component ", i);
        for (int c = 0; c < 3; ++c)
            CHECK(p.basis[static_cast<std::size_t>(i * 3 + c)] ==
                  doctest::Approx(oracle.vectors[static_cast<std::size_t>(i)]
                                                [static_cast<std::size_t>(c)])
                      .epsilon(1e-4));
        CHECK(p.ratios[static_cast<std::size_t>(i)] ==
              doctest::Approx(oracle.values[static_cast<std::size_t>(i)] / total).epsilon(1e-4));
    }
}

TEST_CASE("pca on an isotropic Gaussian splits variance evenly") {
    Rng rng(777);
    const int rows = 5000;
    std::vector<float> m;
    m.reserve(rows * 2);
    for (int i = 0; i < 2 * rows; ++i) m.push_back(rng.normal_f());
    toolkit::PcaResult p = toolkit::pca_fit(m, rows, 2, 2);
    CHECK(std::abs(p.ratios[0] - 0.5f) < 0.05f);
    CHECK(std::abs(p.ratios[1] - 0.5f) < 0.05f);
    CHECK(p.ratios[0] >= p.ratios[1]);
}

TEST_CASE("pca bases are orthonormal and fits replay bit-for-bit") {
    Rng rng(555);
    const int rows = 500, cols = 6;
    std::vector<float> m;
    m.reserve(static_cast<std::size_t>(rows * cols));
    for (int i = 0; i < rows * cols; ++i)
        m.push_back(rng.normal_f() * (1.0f + 0.3f * static_cast<float>(i % cols)));

    toolkit::PcaResult a = toolkit::pca_fit(m, rows, cols, 2);
    for (int i = 0; i < 2; ++i) {
        double n = 0.0, d = 0.0;
        for (int c = 0; c < cols; ++c) {
            n += static_cast<double>(a.basis[static_cast<std::size_t>(i * cols + c)]) *
                 a.basis[static_cast<std::size_t>(i * cols + c)];
            d += static_cast<double>(a.basis[static_cast<std::size_t>(c)]) *
                 a.basis[static_cast<std::size_t>(cols + c)];
        }
        CHECK(std::abs(n - 1.0) < 1e-6);
        CHECK(std::abs(d) < 1e-6);
    }

    toolkit::PcaResult b = toolkit::pca_fit(m, rows, cols, 2);
    CHECK(a.basis == b.basis);  // exact: the fit is a pure function of the data
    CHECK(a.ratios == b.ratios);

    std::vector<float> row(m.begin(), m.begin() + cols);
    std::vector<float> pt = toolkit::pca_project(a, row);
    double manual0 = 0.0;
    for (int c = 0; c < cols; ++c)
        manual0 += static_cast<double>(a.basis[static_cast<std::size_t>(c)]) *
                   (static_cast<double>(row[static_cast<std::size_t>(c)]) -
                    static_cast<double>(a.mean[static_cast<std::size_t>(c)]));
    CHECK(pt[0] == doctest::Approx(manual0));
    std::vector<float> bad(cols + 1, 0.0f);
    CHECK_THROWS_AS((void)toolkit::pca_project(a, bad), ShapeError);
}

TEST_CASE("wilson intervals match hand-computed values") {
    toolkit::WilsonInterval w = toolkit::wilson95(8, 10);
    CHECK(w.rate == doctest::Approx(0.8));
    CHECK(w.lo == doctest::Approx(0.49012).epsilon(1e-4));
    CHECK(w.hi == doctest::Approx(0.94336).epsilon(1e-4));

    toolkit::WilsonInterval zero = toolkit::wilson95(0, 20);
    CHECK(zero.rate == 0.0);
    CHECK(zero.lo == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(zero.hi == doctest::Approx(3.841458820694124 / 23.841458820694124).epsilon(1e-9));

    toolkit::WilsonInterval full = toolkit::wilson95(20, 20);
    CHECK(full.hi == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(full.lo == doctest::Approx(20.0 / 23.841458820694124).epsilon(1e-9));

    CHECK_THROWS_AS(toolkit::wilson95(1, 0), ConfigError);
    CHECK_THROWS_AS(toolkit::wilson95(-1, 10), ConfigError);
    CHECK_THROWS_AS(toolkit::wilson95(11, 10), ConfigError);
}

TEST_CASE("value-map export round-trips and projects identical sets identically") {
    Rng rng(4242);
    const int obs_dim = 3, chunk_dim = 4, n_gt = 6;
    std::vector<data::ChunkRow> gt(n_gt);
    for (int i = 0; i < n_gt; ++i) {
        gt[static_cast<std::size_t>(i)].obs = {0.1f * i, -0.2f * i, 0.3f};
        gt[static_cast<std::size_t>(i)].actions.resize(chunk_dim);
        for (float& a : gt[static_cast<std::size_t>(i)].actions)
            a = 4.0f * rng.normal_f();  // raw action units
    }
    data::NormStats stats;
    stats.obs_mean.assign(obs_dim, 0.0f);
    stats.obs_std.assign(obs_dim, 1.0f);

    value::CriticEnsemble ens = value::make_ensemble(obs_dim, chunk_dim, 16, rng);

    // Candidates = the normalized ground-truth chunks, cycled 20x.
    std::vector<toolkit::CandidateLog> cands;
    for (int rep = 0; rep < 20; ++rep)
        for (int i = 0; i < n_gt; ++i) {
            toolkit::CandidateLog c;
            c.row = static_cast<std::uint32_t>(i);
            c.chunk = gt[static_cast<std::size_t>(i)].actions;
            data::normalize_act(stats, c.chunk);
            cands.push_back(std::move(c));
        }

    const std::string path = temp_path("valuemap.json");
    toolkit::ValueMapExport ex = toolkit::export_valuemap(gt, cands, ens, stats, path);

    REQUIRE(ex.gt_points.size() == static_cast<std::size_t>(n_gt) * 2);
    REQUIRE(ex.cand_points.size() == cands.size() * 2);
    // Identical inputs project to identical clouds and score identically.
    for (std::size_t j = 0; j < cands.size(); ++j) {
        const std::size_t i = j % n_gt;
        CHECK(ex.cand_points[2 * j] == ex.gt_points[2 * i]);
        CHECK(ex.cand_points[2 * j + 1] == ex.gt_points[2 * i + 1]);
        CHECK(ex.cand_q[j] == ex.gt_q[i]);
    }
    CHECK(ex.mean_q_gt == doctest::Approx(ex.mean_q_cand).epsilon(1e-6));

    // Basis orthonormality as stored.
    double n0 = 0.0, n1 = 0.0, dot = 0.0;
    for (int c = 0; c < chunk_dim; ++c) {
        n0 += static_cast<double>(ex.pca.basis[static_cast<std::size_t>(c)]) *
              ex.pca.basis[static_cast<std::size_t>(c)];
        n1 += static_cast<double>(ex.pca.basis[static_cast<std::size_t>(chunk_dim + c)]) *
              ex.pca.basis[static_cast<std::size_t>(chunk_dim + c)];
        dot += static_cast<double>(ex.pca.basis[static_cast<std::size_t>(c)]) *
               ex.pca.basis[static_cast<std::size_t>(chunk_dim + c)];
    }
    CHECK(std::abs(n0 - 1.0) < 1e-6);
    CHECK(std::abs(n1 - 1.0) < 1e-6);
    CHECK(std::abs(dot) < 1e-6);

    toolkit::ValueMapExport back = toolkit::read_valuemap(path);
    CHECK(back.pca.mean == ex.pca.mean);  // bit-exact float round trip through JSON
    CHECK(back.pca.basis == ex.pca.basis);
    CHECK(back.pca.ratios == ex.pca.ratios);
    CHECK(back.gt_points == ex.gt_points);
    CHECK(back.gt_q == ex.gt_q);
    CHECK(back.cand_points == ex.cand_points);
    CHECK(back.cand_q == ex.cand_q);
    CHECK(back.mean_q_gt == ex.mean_q_gt);
    CHECK(back.mean_q_cand == ex.mean_q_cand);
    std::remove(path.c_str());

    SUBCASE("fewer than 100 candidates is refused") {
        cands.resize(99);
        CHECK_THROWS_AS(toolkit::export_valuemap(gt, cands, ens, stats, ""), ConfigError);
    }
    SUBCASE("a candidate pointing at a missing row is refused") {
        cands[0].row = 100;
        CHECK_THROWS_AS(toolkit::export_valuemap(gt, cands, ens, stats, ""), ShapeError);
    }
    SUBCASE("damaged files are rejected with positioned errors") {
        const std::string bad = temp_path("valuemap_bad.json");
        {
            std::ofstream f(bad);
            f << "{\"schema\": \"hume-valuemap\", };;;";
        }
        try {
            toolkit::read_valuemap(bad);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.byte_offset > 0);
        }
        {
            std::ofstream f(bad);
            f << "{\"schema\": \"other\", \"version\": 1}";
        }
        CHECK_THROWS_AS(toolkit::read_valuemap(bad), FormatError);
        std::remove(bad.c_str());
        CHECK_THROWS_AS(toolkit::read_valuemap(temp_path("valuemap_missing.json")),
                        MissingArtifactError);
    }
}

TEST_CASE("ablation tables have one deterministic row per mode") {
    runtime::PolicyStack st = tiny_stack();
    runtime::ScheduleConfig sched = tiny_sched();

    std::vector<runtime::Mode> one = {runtime::Mode::Full};
    std::vector<toolkit::AblationRow> rows =
        toolkit::run_ablation(st, envsim::EnvId::Reach2d, sched, one, 1, 100);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].episodes == 1);
    CHECK((rows[0].ci.rate == 0.0 || rows[0].ci.rate == 1.0));

    std::vector<runtime::Mode> three = {runtime::Mode::Full, runtime::Mode::RandomSelect,
                                        runtime::Mode::NoCascade};
    std::vector<toolkit::AblationRow> a =
        toolkit::run_ablation(st, envsim::EnvId::Reach2d, sched, three, 5, 100);
    std::vector<toolkit::AblationRow> b =
        toolkit::run_ablation(st, envsim::EnvId::Reach2d, sched, three, 5, 100);
    REQUIRE(a.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(a[i].mode == three[i]);
        CHECK(a[i].successes == b[i].successes);  // deterministic given seeds
        CHECK(a[i].ci.lo <= a[i].ci.rate);
        CHECK(a[i].ci.rate <= a[i].ci.hi);
    }

    const std::string path = temp_path("ablation.json");
    toolkit::write_ablation(a, path);
    std::ifstream f(path);
    REQUIRE(f.good());
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    CHECK(text.find("\"hume-ablation\"") != std::string::npos);
    CHECK(text.find("\"random_select\"") != std::string::npos);
    std::remove(path.c_str());

    CHECK_THROWS_AS(toolkit::run_ablation(st, envsim::EnvId::Reach2d, sched, {}, 1, 0),
                    ConfigError);
    CHECK_THROWS_AS(toolkit::run_ablation(st, envsim::EnvId::Reach2d, sched, one, 0, 0),
                    ConfigError);
}

TEST_CASE("the endpoint oracle prefers expert-shaped chunks") {
    data::NormStats stats;  // action bound only; observations unused here
    auto [state, obs] = envsim::reset(envsim::EnvId::Reach2d, 42);
    const int H = 6;

    // A chunk that replays the expert, in normalized action units.
    flow::ActionChunk expert_chunk = flow::make_chunk(H, 2, 0.0f, 1.0f);
    envsim::EnvState s = state;
    for (int t = 0; t < H; ++t) {
        const envsim::Vec2 a = envsim::expert_action(s);
        expert_chunk.values[static_cast<std::size_t>(2 * t)] = a.x / envsim::kActionMax;
        expert_chunk.values[static_cast<std::size_t>(2 * t + 1)] = a.y / envsim::kActionMax;
        s = envsim::step(s, a).state;
    }
    flow::ActionChunk garbage = flow::make_chunk(H, 2, 1.0f, 1.0f);  // slam full-throttle

    runtime::ChunkScorer oracle = toolkit::make_endpoint_oracle(stats);
    const float q_expert = oracle(state, expert_chunk);
    const float q_garbage = oracle(state, garbage);
    CHECK(q_expert <= 0.0f);
    CHECK(q_expert > -1e-3f);  // replaying the expert reaches the expert endpoint
    CHECK(q_expert > q_garbage);
}

TEST_CASE("run configs validate, save, and load back") {
    toolkit::RunConfig cfg = toolkit::default_run_config(envsim::EnvId::Reach2d);
    CHECK_NOTHROW(cfg.validate());
    cfg.seed = 7;
    cfg.mode = runtime::Mode::NoCascade;
    cfg.flow.candidates = 4;
    cfg.s2_knobs.steps = 123;

    const std::string path = temp_path("run.json");
    toolkit::save_run_config(cfg, path);
    toolkit::RunConfig back = toolkit::load_run_config(path);
    CHECK(back.env == cfg.env);
    CHECK(back.seed == 7);
    CHECK(back.mode == runtime::Mode::NoCascade);
    CHECK(back.flow.candidates == 4);
    CHECK(back.flow.horizon == cfg.flow.horizon);
    CHECK(back.s1.sub_horizon == cfg.s1.sub_horizon);
    CHECK(back.s2_knobs.steps == 123);
    CHECK(back.paths.dataset == cfg.paths.dataset);
    CHECK(back.value_train.alpha == cfg.value_train.alpha);
    CHECK(back.schedule.s1_period == cfg.schedule.s1_period);
    std::remove(path.c_str());

    SUBCASE("pusht defaults validate too") {
        CHECK_NOTHROW(toolkit::default_run_config(envsim::EnvId::PushtLite).validate());
    }
    SUBCASE("cross-field violations are caught") {
        toolkit::RunConfig bad = cfg;
        bad.s1.sub_horizon = 5;  // does not divide horizon 16
        CHECK_THROWS_AS(bad.validate(), ConfigError);
        bad = cfg;
        bad.flow.obs_dim = 12;  // wrong for reach2d
        CHECK_THROWS_AS(bad.validate(), ConfigError);
        bad = cfg;
        bad.episodes = 0;
        CHECK_THROWS_AS(toolkit::save_run_config(bad, path), ConfigError);
    }
    SUBCASE("schema and version guards") {
        const std::string bad = temp_path("run_bad.json");
        {
            std::ofstream f(bad);
            f << "{\"schema\": \"hume-run\", \"version\": 2, \"env\": \"reach2d\"}";
        }
        CHECK_THROWS_AS(toolkit::load_run_config(bad), ConfigError);
        {
            std::ofstream f(bad);
            f << "{\"schema\": \"elsewhere\", \"version\": 1}";
        }
        CHECK_THROWS_AS(toolkit::load_run_config(bad), ConfigError);
        {
            std::ofstream f(bad);
            f << "{ broken";
        }
        CHECK_THROWS_AS(toolkit::load_run_config(bad), FormatError);
        std::remove(bad.c_str());
        CHECK_THROWS_AS(toolkit::load_run_config(temp_path("run_missing.json")),
                        MissingArtifactError);
    }
    SUBCASE("a sub-horizon change must keep the tick grid consistent") {
        toolkit::RunConfig bad = cfg;
        bad.s1.sub_horizon = 4;  // divides 16, but schedule.s1_period still spans 8 ticks
        CHECK_THROWS_AS(bad.validate(), ConfigError);
    }
}

TEST_CASE("expert collection labels rewards and respects the noise cycle") {
    std::vector<data::Episode> eps =
        pipeline::collect_expert_episodes(envsim::EnvId::Reach2d, 3, 11);
    REQUIRE(eps.size() == 3);
    for (const data::Episode& ep : eps) {
        CHECK_NOTHROW(data::validate_episode(ep));
        CHECK(ep.success);  // the scripted expert solves reach2d
        const std::size_t n = ep.length();
        const std::size_t hot = std::min<std::size_t>(3, n);
        for (std::size_t t = 0; t < n; ++t)
            CHECK(ep.rew[t] == (t >= n - hot ? 1.0f : 0.0f));
        for (float a : ep.act) {
            CHECK(a <= envsim::kActionMax);
            CHECK(a >= -envsim::kActionMax);
        }
    }

    SUBCASE("pusht expert succeeds as well") {
        std::vector<data::Episode> pe =
            pipeline::collect_expert_episodes(envsim::EnvId::PushtLite, 2, 5);
        for (const data::Episode& ep : pe) {
            CHECK_NOTHROW(data::validate_episode(ep));
            CHECK(ep.success);
        }
    }
    SUBCASE("the mixed collection cycles noise levels deterministically") {
        std::vector<data::Episode> mixed =
            pipeline::collect_mixed_episodes(envsim::EnvId::Reach2d, 4, 11, {0.0f, 0.5f});
        REQUIRE(mixed.size() == 4);
        // Even episodes are exactly the clean collection at the same seeds.
        CHECK(mixed[0].act == eps[0].act);
        CHECK(mixed[2].act == eps[2].act);
        CHECK(mixed[1].act != pipeline::collect_expert_episodes(envsim::EnvId::Reach2d, 1, 12,
                                                                0.0f)[0]
                                  .act);
        for (float a : mixed[1].act) {
            CHECK(a <= envsim::kActionMax);
            CHECK(a >= -envsim::kActionMax);
        }
    }
    SUBCASE("bad arguments are refused") {
        CHECK_THROWS_AS(pipeline::collect_expert_episodes(envsim::EnvId::Reach2d, 0, 1),
                        ConfigError);
        CHECK_THROWS_AS(pipeline::collect_expert_episodes(envsim::EnvId::Reach2d, 1, 1, -0.1f),
                        ConfigError);
        CHECK_THROWS_AS(pipeline::collect_mixed_episodes(envsim::EnvId::Reach2d, 1, 1, {}),
                        ConfigError);
    }
}

TEST_CASE("field and value training are deterministic per seed") {
    std::vector<data::Episode> eps =
        pipeline::collect_expert_episodes(envsim::EnvId::Reach2d, 4, 31);
    data::NormStats stats = data::compute_norm_stats(eps);
    std::vector<data::ChunkRow> rows = data::make_chunks(eps, 4, 2, 0.98f);
    REQUIRE(rows.size() >= 8);

    flow::FlowConfig cfg;
    cfg.obs_dim = envsim::obs_dim(envsim::EnvId::Reach2d);
    cfg.horizon = 4;
    cfg.act_dim = 2;
    cfg.hidden = 24;
    pipeline::TrainKnobs knobs;
    knobs.steps = 40;
    knobs.batch = 16;
    knobs.seed = 3;

    nnet::MlpParams f1 = pipeline::train_field(cfg, rows, stats, knobs);
    nnet::MlpParams f2 = pipeline::train_field(cfg, rows, stats, knobs);
    CHECK(nnet::params_checksum(f1) == nnet::params_checksum(f2));
    CHECK(f1.input_dim() == cfg.field_input_dim());
    CHECK(f1.output_dim() == cfg.chunk_dim());

    CHECK_THROWS_AS(pipeline::train_field(cfg, {}, stats, knobs), ConfigError);

    value::ValueTrainConfig vcfg;
    vcfg.batch_size = 16;
    vcfg.noise_augment_prob = 0.25f;
    pipeline::ValueKnobs vk;
    vk.steps = 12;
    vk.hidden = 16;
    vk.seed = 9;
    pipeline::TrainedValue v1 = pipeline::train_value(vcfg, cfg.obs_dim, cfg.chunk_dim(), rows,
                                                      stats, vk, &f1);
    pipeline::TrainedValue v2 = pipeline::train_value(vcfg, cfg.obs_dim, cfg.chunk_dim(), rows,
                                                      stats, vk, &f1);
    CHECK(nnet::params_checksum(v1.ens.q1) == nnet::params_checksum(v2.ens.q1));
    CHECK(nnet::params_checksum(v1.ens.q2) == nnet::params_checksum(v2.ens.q2));
    CHECK(nnet::params_checksum(v1.actor.net) == nnet::params_checksum(v2.actor.net));
    CHECK(v1.ens.obs_dim == cfg.obs_dim);
    CHECK(v1.ens.chunk_dim == cfg.chunk_dim());
}
