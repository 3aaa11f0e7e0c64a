#include "hume/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

namespace hume::runtime {

Mode parse_mode(const std::string& name) {
    if (name == "full") return Mode::Full;
    if (name == "no_cascade") return Mode::NoCascade;
    if (name == "no_repeat") return Mode::NoRepeat;
    if (name == "no_system1") return Mode::NoSystem1;
    if (name == "random_select") return Mode::RandomSelect;
    throw ConfigError("unknown mode '" + name +
                      "'; expected full, no_cascade, no_repeat, no_system1 or random_select");
}

const char* mode_name(Mode m) {
    switch (m) {
        case Mode::Full: return "full";
        case Mode::NoCascade: return "no_cascade";
        case Mode::NoRepeat: return "no_repeat";
        case Mode::NoSystem1: return "no_system1";
        case Mode::RandomSelect: return "random_select";
    }
    throw ConfigError("mode_name: invalid mode value");
}

std::uint64_t PlanSlot::publish(flow::CandidateSet set, double t_pub) {
    auto p = std::make_shared<Plan>();
    p->set = std::move(set);
    p->t_pub = t_pub;
    std::lock_guard<std::mutex> lk(mu_);
    p->seq = next_seq_++;
    cur_ = std::move(p);
    return cur_->seq;
}

std::shared_ptr<const Plan> PlanSlot::fetch() const {
    std::lock_guard<std::mutex> lk(mu_);
    return cur_;
}

void ScheduleConfig::validate(int sub_horizon) const {
    if (s2_period <= 0.0 || s1_period <= 0.0 || tick_period <= 0.0)
        throw ConfigError("ScheduleConfig: periods must be positive");
    if (s2_latency < 0.0 || s1_latency < 0.0)
        throw ConfigError("ScheduleConfig: latencies must be >= 0");
    if (sub_horizon < 1) throw ConfigError("ScheduleConfig: sub_horizon must be >= 1");
    const double implied = sub_horizon * tick_period;
    if (std::abs(implied - s1_period) > 0.01 * s1_period)
        throw ConfigError("ScheduleConfig: sub_horizon * tick_period = " +
                          std::to_string(implied) + " must match s1_period = " +
                          std::to_string(s1_period) + " within 1%");
}

void PolicyStack::validate() const {
    flow_cfg.validate();
    s1_cfg.validate();
    if (s1_cfg.obs_dim != flow_cfg.obs_dim)
        throw ConfigError("PolicyStack: planner and refiner obs dims differ");
    if (s1_cfg.act_dim != flow_cfg.act_dim)
        throw ConfigError("PolicyStack: planner and refiner act dims differ");
    if (flow_cfg.horizon % s1_cfg.sub_horizon != 0)
        throw ConfigError("PolicyStack: sub-horizon h=" + std::to_string(s1_cfg.sub_horizon) +
                          " does not divide chunk horizon H=" + std::to_string(flow_cfg.horizon));
    if (static_cast<int>(stats.obs_mean.size()) != flow_cfg.obs_dim ||
        static_cast<int>(stats.obs_std.size()) != flow_cfg.obs_dim)
        throw ShapeError("PolicyStack: norm stats do not match the observation dim");
    if (flow_field.input_dim() != flow_cfg.field_input_dim() ||
        flow_field.output_dim() != flow_cfg.chunk_dim())
        throw ShapeError("PolicyStack: planner field dims do not match the flow config");
    if (s1_field.input_dim() != s1_cfg.flow_view().field_input_dim() ||
        s1_field.output_dim() != s1_cfg.chunk_dim())
        throw ShapeError("PolicyStack: refiner field dims do not match the refiner config");
    if (ensemble.obs_dim != flow_cfg.obs_dim || ensemble.chunk_dim != flow_cfg.chunk_dim())
        throw ShapeError("PolicyStack: value ensemble dims do not match the flow config");
}

std::uint64_t plan_once(const PolicyStack& stack, const flow::FlowConfig& cfg,
                        std::span<const float> obs_raw, PlanSlot& slot, double now, Rng& rng,
                        bool random_select, const ChunkScorer* scorer,
                        const envsim::EnvState* scorer_state, RolloutTrace* trace) {
    if (static_cast<int>(obs_raw.size()) != cfg.obs_dim)
        throw ShapeError("plan_once: obs size does not match config");
    std::vector<float> obs_n(obs_raw.begin(), obs_raw.end());
    data::normalize_obs(stack.stats, obs_n);

    flow::CandidateSet set = flow::sample_candidates(stack.flow_field, cfg, obs_n, rng);
    if (scorer != nullptr) {
        if (scorer_state == nullptr)
            throw ConfigError("plan_once: an external scorer needs the environment state");
        set.values.resize(set.chunks.size());
        for (std::size_t n = 0; n < set.chunks.size(); ++n)
            set.values[n] = (*scorer)(*scorer_state, set.chunks[n]);
        set.selected = argmax_lowest_tie(set.values);
    } else {
        value::select_best(set, stack.ensemble, obs_n);
    }
    if (random_select) set.selected = rng.uniform_int(static_cast<int>(set.chunks.size()));

    TracePlan row;
    row.t_pub = now;
    row.selected = set.selected;
    row.q = set.values;
    const std::uint64_t seq = slot.publish(std::move(set), now);
    if (trace != nullptr) {
        row.seq = seq;
        trace->plans.push_back(std::move(row));
    }
    return seq;
}

namespace {

// One refinement cycle's worth of environment-space actions.
struct SubBuffer {
    std::vector<float> actions;  // ticks() * act_dim, env units
    std::uint64_t seq = 0;
    int k = 0;
    int ticks = 0;
};

// Fetch-latest, segment, refine: everything the fast worker does except
// stepping the environment.
SubBuffer prepare_cycle(const PolicyStack& stack, const PlanSlot& slot, ActorCursor& cur,
                        std::span<const float> obs_raw, Mode mode, double now,
                        RolloutTrace* trace) {
    const std::shared_ptr<const Plan> plan = slot.fetch();
    if (!plan)
        throw MissingArtifactError(
            "act_subchunk: no plan published yet; compute a blocking first plan before "
            "starting the actor");
    if (plan->set.selected < 0 ||
        plan->set.selected >= static_cast<int>(plan->set.chunks.size()))
        throw ShapeError("act_subchunk: published plan has no valid selection");
    if (plan->seq != cur.seq) {  // newer plan wins; restart its segments
        cur.seq = plan->seq;
        cur.next_k = 0;
    }
    const flow::ActionChunk& chosen =
        plan->set.chunks[static_cast<std::size_t>(plan->set.selected)];

    SubBuffer buf;
    buf.seq = plan->seq;
    if (mode == Mode::NoSystem1) {
        // The whole selected chunk runs open-loop; re-fetch afterwards.
        buf.k = 0;
        buf.actions = chosen.values;
    } else {
        const int h = stack.s1_cfg.sub_horizon;
        const int K = chosen.horizon / h;
        const int k = cur.next_k % K;  // an exhausted plan replays until a newer one lands
        cascade::SubChunk sub = cascade::segment(chosen, h)[static_cast<std::size_t>(k)];
        if (mode != Mode::NoCascade) {
            std::vector<float> obs_n(obs_raw.begin(), obs_raw.end());
            data::normalize_obs(stack.stats, obs_n);
            sub = cascade::cascade_denoise(stack.s1_field, stack.s1_cfg, sub, obs_n);
        }
        buf.k = k;
        buf.actions = std::move(sub.values);
        cur.next_k = k + 1;
    }
    data::denormalize_act(stack.stats, buf.actions);
    buf.ticks = static_cast<int>(buf.actions.size()) / stack.flow_cfg.act_dim;
    if (trace != nullptr) trace->subs.push_back({buf.seq, buf.k, now, now - plan->t_pub});
    return buf;
}

}  // namespace

envsim::EnvState act_subchunk(const PolicyStack& stack, const PlanSlot& slot, ActorCursor& cur,
                              envsim::EnvState env, Mode mode, double now, double tick_period,
                              RolloutTrace* trace, bool* done, bool* success) {
    if (stack.flow_cfg.act_dim != 2)
        throw ConfigError("act_subchunk: environment actions are 2-D");
    (void)tick_period;
    const std::vector<float> obs = envsim::observe(env);
    const SubBuffer buf = prepare_cycle(stack, slot, cur, obs, mode, now, trace);
    bool fin = false, suc = false;
    for (int i = 0; i < buf.ticks && !fin; ++i) {
        const envsim::Vec2 a{buf.actions[static_cast<std::size_t>(2 * i)],
                             buf.actions[static_cast<std::size_t>(2 * i + 1)]};
        envsim::StepOut out = envsim::step(env, a);
        if (trace != nullptr) {
            trace->tick_rows.push_back({trace->ticks, buf.seq, buf.k, a.x, a.y});
            ++trace->ticks;
        }
        env = out.state;
        fin = out.done;
        suc = out.success;
    }
    if (done != nullptr) *done = fin;
    if (success != nullptr) *success = suc;
    return env;
}

RolloutTrace rollout_episode(const PolicyStack& stack, envsim::EnvId env_id, std::uint64_t seed,
                             const ScheduleConfig& sched, Mode mode, const ChunkScorer* scorer) {
    stack.validate();
    const int h = stack.s1_cfg.sub_horizon;
    sched.validate(h);
    if (stack.flow_cfg.act_dim != 2)
        throw ConfigError("rollout_episode: environment actions are 2-D");
    if (stack.flow_cfg.obs_dim != envsim::obs_dim(env_id))
        throw ConfigError("rollout_episode: stack obs dim " +
                          std::to_string(stack.flow_cfg.obs_dim) + " does not match env " +
                          envsim::env_name(env_id));

    flow::FlowConfig eff = stack.flow_cfg;
    if (mode == Mode::NoRepeat) eff.candidates = 1;
    const bool random_select = mode == Mode::RandomSelect;

    RolloutTrace trace;
    trace.env = env_id;
    trace.mode = mode;
    trace.seed = seed;

    Rng plan_rng = Rng(seed).split(17);
    auto [env, obs] = envsim::reset(env_id, seed);

    PlanSlot slot;
    ActorCursor cur;
    // Cold start: the first plan lands before the actor runs.
    plan_once(stack, eff, obs, slot, 0.0, plan_rng, random_select, scorer, &env, &trace);
    double plan_due = sched.s2_period;

    SubBuffer buf;
    int pos = 0;
    bool done = false;
    bool success = false;
    for (int n = 0; !done && n <= 2 * envsim::kEpisodeCap; ++n) {
        const double now = n * sched.tick_period;
        if (n > 0 && now + 1e-12 >= plan_due) {  // planner lands on the tick grid
            obs = envsim::observe(env);
            plan_once(stack, eff, obs, slot, now, plan_rng, random_select, scorer, &env, &trace);
            plan_due += sched.s2_period;
        }
        if (pos >= buf.ticks) {  // refinement cycle boundary (covers the first tick)
            obs = envsim::observe(env);
            buf = prepare_cycle(stack, slot, cur, obs, mode, now, &trace);
            pos = 0;
        }
        const envsim::Vec2 a{buf.actions[static_cast<std::size_t>(2 * pos)],
                             buf.actions[static_cast<std::size_t>(2 * pos + 1)]};
        envsim::StepOut out = envsim::step(env, a);
        trace.tick_rows.push_back({n, buf.seq, buf.k, a.x, a.y});
        ++pos;
        env = out.state;
        done = out.done;
        success = out.success;
    }
    trace.ticks = static_cast<int>(trace.tick_rows.size());
    trace.success = success;
    validate_trace(trace);
    return trace;
}

void validate_trace(const RolloutTrace& trace) {
    if (trace.ticks != static_cast<int>(trace.tick_rows.size()))
        throw FormatError("trace: tick count disagrees with tick rows", 0);
    for (std::size_t i = 0; i < trace.tick_rows.size(); ++i) {
        if (trace.tick_rows[i].tick != static_cast<int>(i))
            throw FormatError("trace: tick indices are not contiguous", i);
        if (i > 0 && trace.tick_rows[i].seq < trace.tick_rows[i - 1].seq)
            throw FormatError("trace: plan sequence decreases along execution", i);
    }
    for (std::size_t i = 0; i < trace.subs.size(); ++i) {
        const TraceSub& sub = trace.subs[i];
        std::uint64_t newest = 0;
        for (const TracePlan& plan : trace.plans)
            if (plan.t_pub <= sub.t_exec + 1e-12) newest = std::max(newest, plan.seq);
        if (sub.seq != newest)
            throw FormatError("trace: sub-chunk did not use the newest plan at fetch time", i);
    }
}

void save_trace(const RolloutTrace& trace, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (f == nullptr) throw MissingArtifactError("save_trace: cannot open " + path);
    std::fprintf(f, "HUMETRACE v1\n");
    std::fprintf(f, "env %s mode %s seed %llu success %d ticks %d\n",
                 envsim::env_name(trace.env), mode_name(trace.mode),
                 static_cast<unsigned long long>(trace.seed), trace.success ? 1 : 0,
                 trace.ticks);
    for (const TracePlan& p : trace.plans) {
        std::fprintf(f, "plan %llu %.9g %d", static_cast<unsigned long long>(p.seq), p.t_pub,
                     p.selected);
        for (float q : p.q) std::fprintf(f, " %.9g", q);
        std::fprintf(f, "\n");
    }
    for (const TraceSub& s : trace.subs)
        std::fprintf(f, "sub %llu %d %.9g %.9g\n", static_cast<unsigned long long>(s.seq), s.k,
                     s.t_exec, s.staleness);
    for (const TraceTick& t : trace.tick_rows)
        std::fprintf(f, "tick %d %llu %d %.9g %.9g\n", t.tick,
                     static_cast<unsigned long long>(t.seq), t.k, t.ax, t.ay);
    std::fclose(f);
}

ScheduleReport simulate_schedule(const ScheduleConfig& cfg, double duration, int sub_horizon) {
    cfg.validate(sub_horizon);
    if (duration <= 0.0) throw ConfigError("simulate_schedule: duration must be positive");

    ScheduleReport rep;
    rep.planner_overrun = cfg.s2_latency > cfg.s2_period + 1e-12;

    // Planner: trigger on the period grid, slipping when a plan overruns.
    std::vector<double> pubs;
    const double t_end = cfg.s2_latency + duration;
    double trigger = 0.0;
    while (true) {
        const double pub = trigger + cfg.s2_latency;
        if (pub > t_end + 1e-12) break;
        pubs.push_back(pub);
        trigger = std::max(trigger + cfg.s2_period, pub);
    }
    rep.plans = static_cast<int>(pubs.size());
    if (pubs.empty()) return rep;

    // Actor: cold start at the first publish, one fetch per refinement
    // cycle, h nominal ticks per cycle pushed back by the refine latency.
    const double t0 = pubs.front();
    double stale_sum = 0.0;
    int cycles = 0;
    std::size_t pi = 0;
    for (int j = 0;; ++j) {
        const double b = t0 + j * cfg.s1_period;
        if (b >= t0 + duration - 1e-12) break;
        while (pi + 1 < pubs.size() && pubs[pi + 1] <= b + 1e-12) ++pi;
        if (pubs[pi] > b + 1e-12) {  // no plan yet: the whole cycle starves
            rep.starved_ticks += sub_horizon;
            continue;
        }
        const double stale = b - pubs[pi];
        rep.max_staleness = std::max(rep.max_staleness, stale);
        stale_sum += stale;
        ++cycles;
        const double ready = b + cfg.s1_latency;
        for (int i = 0; i < sub_horizon; ++i) {
            const double nominal = b + i * cfg.tick_period;
            if (nominal >= t0 + duration - 1e-12) break;
            rep.max_tick_jitter = std::max(rep.max_tick_jitter, std::max(ready - nominal, 0.0));
            ++rep.ticks;
        }
    }
    rep.mean_staleness = cycles > 0 ? stale_sum / cycles : 0.0;
    return rep;
}

}  // namespace hume::runtime
