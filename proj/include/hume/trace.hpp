#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hume/common.hpp"

namespace hume::envsim {

// One polyline point in the text export.  `kind` is one of agent, block,
// goal, exec or cand<i>; theta is present only for posed records.
struct TraceLine {
    std::string kind;
    int idx = 0;
    int t = 0;
    float x = 0.0f;
    float y = 0.0f;
    std::optional<float> theta;

    bool operator==(const TraceLine&) const = default;
};

// Planner bookkeeping attached to a rollout trace: publication sequence
// number, publish time (ticks), chosen candidate and all candidate scores.
struct TracePlan {
    std::uint64_t seq = 0;
    double t_pub = 0.0;
    int selected = 0;
    std::vector<float> q;

    bool operator==(const TracePlan&) const = default;
};

struct Trace {
    std::vector<TraceLine> lines;
    std::vector<TracePlan> plans;

    bool operator==(const Trace&) const = default;
    bool empty() const { return lines.empty() && plans.empty(); }
};

// Text export, one record per line:
//   kind idx t x y [theta]
//   plan seq t_pub selected q0 .. qN-1
// Floats printed with enough digits to round-trip f32 exactly.
void render_trace(const Trace& trace, const std::string& path);
Trace parse_trace(const std::string& path);

std::string format_trace(const Trace& trace);
Trace parse_trace_text(const std::string& text);

}  // namespace hume::envsim
