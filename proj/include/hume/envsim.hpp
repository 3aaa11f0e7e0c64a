#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hume/common.hpp"

namespace hume::envsim {

enum class EnvId : std::uint8_t {
    Reach2d = 0,
    PushtLite = 1,
};

EnvId parse_env_id(const std::string& name);
const char* env_name(EnvId id);

struct Vec2 {
    float x = 0.0f;
    float y = 0.0f;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(float s) const { return {x * s, y * s}; }
    bool operator==(const Vec2&) const = default;
};

inline float dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline float cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline float norm(Vec2 a) { return std::sqrt(dot(a, a)); }
inline Vec2 perp(Vec2 a) { return {-a.y, a.x}; }
inline Vec2 normalized(Vec2 a) {
    float n = norm(a);
    return n > 1e-9f ? Vec2{a.x / n, a.y / n} : Vec2{0.0f, 0.0f};
}
inline Vec2 rotate(Vec2 a, float theta) {
    float c = std::cos(theta), s = std::sin(theta);
    return {c * a.x - s * a.y, s * a.x + c * a.y};
}

// World and task constants.
constexpr float kArena = 512.0f;
constexpr float kAgentRadius = 15.0f;
constexpr float kActionMax = 8.0f;
constexpr int kEpisodeCap = 300;
constexpr float kReachTolerance = 10.0f;
constexpr float kBlockPosTolerance = 20.0f;
constexpr float kBlockAngTolerance = 0.2f;
constexpr float kMinSeparation = 64.0f;
constexpr float kReachGain = 0.2f;

struct EnvState {
    EnvId env = EnvId::Reach2d;
    Vec2 agent;
    Vec2 block_pos;      // pusht_lite only
    float block_theta = 0.0f;
    Vec2 goal_pos;
    float goal_theta = 0.0f;  // pusht_lite only
    int step_index = 0;
};

struct StepOut {
    EnvState state;
    std::vector<float> obs;
    bool done = false;
    bool success = false;
};

int obs_dim(EnvId id);
int action_dim(EnvId id);

// Feature vector: agent (x,y)/512, then for pusht_lite block pose
// (x/512, y/512, cos th, sin th), goal pose likewise (point only for
// reach2d), then the task one-hot [reach2d, pusht_lite].
std::vector<float> observe(const EnvState& s);

std::pair<EnvState, std::vector<float>> reset(EnvId id, std::uint64_t seed);
StepOut step(const EnvState& s, Vec2 action);
Vec2 expert_action(const EnvState& s);

bool success_of(const EnvState& s);

// (-pi, pi]
float wrap_angle(float a);

// T block in its body frame (centroid at origin): 120x30 bar atop a 30x90
// stem.  Vertices ordered counter-clockwise from the stem's bottom-left.
std::array<Vec2, 8> t_vertices();

// Mean squared vertex distance; the rotation gain is its reciprocal.
float t_moment_proxy();

// Extent of the rotated block along `dir` (unit), from the centroid:
// support plane distance, and the surface distance along the ray itself.
float t_support(float theta, Vec2 dir);
float t_ray_exit(float theta, Vec2 dir);

}  // namespace hume::envsim
