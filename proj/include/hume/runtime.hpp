#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "hume/cascade.hpp"
#include "hume/common.hpp"
#include "hume/datastore.hpp"
#include "hume/envsim.hpp"
#include "hume/flowhead.hpp"
#include "hume/valuehead.hpp"

namespace hume::runtime {

// Execution variants: the full dual-rate stack plus the ablations that
// knock out one mechanism each.
enum class Mode {
    Full,          // plan, value-select, segment, refine
    NoCascade,     // segments executed raw, no refinement
    NoRepeat,      // a single candidate (N = 1), selection is trivial
    NoSystem1,     // the selected chunk runs to completion unsegmented
    RandomSelect,  // uniform candidate choice, values ignored
};

Mode parse_mode(const std::string& name);  // ConfigError on unknown names
const char* mode_name(Mode m);

// A published plan: the candidate set (with values and selected index),
// the publication time, and a strictly increasing sequence number.
struct Plan {
    flow::CandidateSet set;
    double t_pub = 0.0;
    std::uint64_t seq = 0;
};

// Latest-value mailbox between the planner and the actor: single writer,
// single reader, overwrite semantics.  A fetch returns the newest complete
// plan (never a torn one) or null before the first publish.
class PlanSlot {
  public:
    std::uint64_t publish(flow::CandidateSet set, double t_pub);
    std::shared_ptr<const Plan> fetch() const;

  private:
    mutable std::mutex mu_;
    std::shared_ptr<const Plan> cur_;
    std::uint64_t next_seq_ = 1;
};

// Nominal cadences (planner 4 Hz, refiner 6 Hz, actions 90 Hz) plus
// simulated compute latencies for the timing simulator.
struct ScheduleConfig {
    double s2_period = 0.25;
    double s1_period = 1.0 / 6.0;
    double tick_period = 1.0 / 90.0;
    double s2_latency = 0.0;
    double s1_latency = 0.0;

    // h actions per refinement cycle must spell out the refiner period.
    void validate(int sub_horizon) const;
};

// Everything the runtime needs to act: the planner field and its config,
// the value ensemble, the refiner field and its config, and the dataset
// normalization applied at the model boundary.
struct PolicyStack {
    flow::FlowConfig flow_cfg;
    nnet::MlpParams flow_field;
    value::CriticEnsemble ensemble;
    cascade::S1Config s1_cfg;
    nnet::MlpParams s1_field;
    data::NormStats stats;

    void validate() const;
};

// External scorer used in place of the learned critics (candidate chunks
// arrive in normalized action space).
using ChunkScorer =
    std::function<float(const envsim::EnvState& state, const flow::ActionChunk& chunk)>;

struct TracePlan {
    std::uint64_t seq = 0;
    double t_pub = 0.0;
    int selected = -1;
    std::vector<float> q;  // one value per candidate
};

struct TraceSub {
    std::uint64_t seq = 0;
    int k = 0;
    double t_exec = 0.0;
    double staleness = 0.0;  // plan age (now - t_pub) at fetch time
};

struct TraceTick {
    int tick = 0;
    std::uint64_t seq = 0;
    int k = 0;
    float ax = 0.0f, ay = 0.0f;  // commanded action, environment units
};

struct RolloutTrace {
    envsim::EnvId env = envsim::EnvId::Reach2d;
    Mode mode = Mode::Full;
    std::uint64_t seed = 0;
    bool success = false;
    int ticks = 0;
    std::vector<TracePlan> plans;
    std::vector<TraceSub> subs;
    std::vector<TraceTick> tick_rows;
};

// One planner cycle: sample candidates at the (raw) observation, score
// them (learned critics, or `scorer` when given), pick the winner (or a
// uniform draw when random_select), publish, and log.  Returns the
// published sequence number.  `cfg` is passed separately so ablations can
// override the candidate count without copying the stack.
std::uint64_t plan_once(const PolicyStack& stack, const flow::FlowConfig& cfg,
                        std::span<const float> obs_raw, PlanSlot& slot, double now, Rng& rng,
                        bool random_select = false, const ChunkScorer* scorer = nullptr,
                        const envsim::EnvState* scorer_state = nullptr,
                        RolloutTrace* trace = nullptr);

// The actor's position inside the plan stream: which plan it is consuming
// and the next unexecuted segment.  Resets to segment 0 whenever a newer
// plan appears (latest wins).
struct ActorCursor {
    std::uint64_t seq = 0;
    int next_k = 0;
};

// One fast-worker cycle: fetch the newest plan, take the next segment,
// refine it against the current observation (mode-dependent), and step the
// environment through the segment's actions.  Throws MissingArtifactError when
// no plan has ever been published — run a blocking first plan instead.
// Returns the environment state after the executed ticks.
envsim::EnvState act_subchunk(const PolicyStack& stack, const PlanSlot& slot, ActorCursor& cur,
                              envsim::EnvState env, Mode mode, double now, double tick_period,
                              RolloutTrace* trace, bool* done, bool* success);

// Full dual-rate episode on a logical clock: plans publish on the 4 Hz
// grid (quantized to action ticks), refinement cycles start every h ticks,
// every tick executes one action.  The first plan is computed
// synchronously before the actor starts.  Deterministic per
// (seed, config, mode).
RolloutTrace rollout_episode(const PolicyStack& stack, envsim::EnvId env_id, std::uint64_t seed,
                             const ScheduleConfig& sched, Mode mode,
                             const ChunkScorer* scorer = nullptr);

// Structural checks on a finished trace: contiguous tick indices,
// non-decreasing sequence numbers, and every consumed plan the newest one
// published at its fetch time.  Throws FormatError on violation.
void validate_trace(const RolloutTrace& trace);

// Plain-text export (stable byte-for-byte for a given trace).
void save_trace(const RolloutTrace& trace, const std::string& path);

// Pure timing model of the two workers (no environment, no models).
struct ScheduleReport {
    int ticks = 0;
    int plans = 0;
    int starved_ticks = 0;       // ticks whose cycle found no plan, after warmup
    bool planner_overrun = false;  // planning latency exceeds the period
    double max_staleness = 0.0;    // plan age at fetch, seconds
    double mean_staleness = 0.0;
    double max_tick_jitter = 0.0;  // executed minus nominal tick time
};

// Discrete-event simulation for `duration` seconds of acting: the planner
// triggers every s2_period (immediately on overrun) and publishes after
// s2_latency; the actor starts at the first publish, fetches at each
// refinement boundary, and executes h ticks per cycle delayed by
// s1_latency.
ScheduleReport simulate_schedule(const ScheduleConfig& cfg, double duration, int sub_horizon);

}  // namespace hume::runtime
