#include "hume/envsim.hpp"

#include <algorithm>
#include <cmath>

namespace hume::envsim {

namespace {

// Design-frame rectangles (stem bottom center at origin, y up), shifted so
// the area centroid sits at the body-frame origin.
constexpr float kStemW = 30.0f, kStemH = 90.0f;
constexpr float kBarW = 120.0f, kBarH = 30.0f;

float centroid_offset() {
    float stem_area = kStemW * kStemH;
    float bar_area = kBarW * kBarH;
    float stem_cy = kStemH * 0.5f;
    float bar_cy = kStemH + kBarH * 0.5f;
    return (stem_area * stem_cy + bar_area * bar_cy) / (stem_area + bar_area);
}

struct Rect {
    float x0, y0, x1, y1;
};

// Stem and bar in body frame.
std::array<Rect, 2> t_rects() {
    float yc = centroid_offset();
    return {Rect{-kStemW / 2, -yc, kStemW / 2, kStemH - yc},
            Rect{-kBarW / 2, kStemH - yc, kBarW / 2, kStemH + kBarH - yc}};
}

struct Contact {
    bool hit = false;
    float depth = 0.0f;  // how far the block must yield
    Vec2 push_dir;       // body frame, unit, direction the block moves
    Vec2 point;          // body frame contact point on the rectangle
};

// Deepest contact between a circle at `c` (body frame) and one rectangle.
Contact circle_rect_contact(Vec2 c, const Rect& r, float radius) {
    Contact out;
    bool inside = c.x > r.x0 && c.x < r.x1 && c.y > r.y0 && c.y < r.y1;
    if (inside) {
        // Escape through the nearest face; the block yields away from it.
        float dl = c.x - r.x0, dr = r.x1 - c.x;
        float db = c.y - r.y0, dt = r.y1 - c.y;
        float m = std::min(std::min(dl, dr), std::min(db, dt));
        Vec2 outward;
        Vec2 point;
        if (m == dl) {
            outward = {-1, 0};
            point = {r.x0, c.y};
        } else if (m == dr) {
            outward = {1, 0};
            point = {r.x1, c.y};
        } else if (m == db) {
            outward = {0, -1};
            point = {c.x, r.y0};
        } else {
            outward = {0, 1};
            point = {c.x, r.y1};
        }
        out.hit = true;
        out.depth = radius + m;
        out.push_dir = {-outward.x, -outward.y};
        out.point = point;
        return out;
    }
    Vec2 q{clampf(c.x, r.x0, r.x1), clampf(c.y, r.y0, r.y1)};
    Vec2 d = q - c;
    float dist = norm(d);
    if (dist >= radius || dist <= 1e-9f) return out;
    out.hit = true;
    out.depth = radius - dist;
    out.push_dir = {d.x / dist, d.y / dist};
    out.point = q;
    return out;
}

Vec2 clamp_arena(Vec2 p) {
    return {clampf(p.x, 0.0f, kArena), clampf(p.y, 0.0f, kArena)};
}

Vec2 clamp_action(Vec2 a) {
    if (!std::isfinite(a.x)) a.x = 0.0f;
    if (!std::isfinite(a.y)) a.y = 0.0f;
    return {clampf(a.x, -kActionMax, kActionMax), clampf(a.y, -kActionMax, kActionMax)};
}

// ---- scripted pusht_lite expert -----------------------------------------

constexpr float kBite = 5.0f;         // commanded penetration while pushing
constexpr float kOrbitRadius = 102.0f;  // contact-free travel radius

// Exit distance of a ray cast from `offset` units beside the centroid
// (along perp(dir)) in direction `dir`; negative when the ray misses.
float ray_exit_at_offset(float theta, Vec2 dir, float offset) {
    Vec2 d = rotate(dir, -theta);
    Vec2 o = rotate(perp(dir) * offset, -theta);
    float best = -1.0f;
    for (const Rect& r : t_rects()) {
        float t0 = 0.0f, t1 = 1e30f;
        bool miss = false;
        auto slab = [&](float p, float v, float lo, float hi) {
            if (std::abs(v) < 1e-9f) {
                if (p < lo || p > hi) miss = true;
                return;
            }
            float a = (lo - p) / v, b = (hi - p) / v;
            if (a > b) std::swap(a, b);
            t0 = std::max(t0, a);
            t1 = std::min(t1, b);
        };
        slab(o.x, d.x, r.x0, r.x1);
        slab(o.y, d.y, r.y0, r.y1);
        if (!miss && t1 >= t0 && t1 > 0.0f) best = std::max(best, t1);
    }
    return best;
}

// Steer toward `w`, orbiting the block when the direct segment would cut
// through it.
Vec2 nav_to(const EnvState& s, Vec2 w) {
    Vec2 to_w = w - s.agent;
    if (norm(to_w) < 1.0f) return {0, 0};
    Vec2 rel_a = s.agent - s.block_pos;
    Vec2 rel_w = w - s.block_pos;
    float bear_a = std::atan2(rel_a.y, rel_a.x);
    float bear_w = std::atan2(rel_w.y, rel_w.x);
    float gap = wrap_angle(bear_w - bear_a);

    // Distance from the block center to the segment agent -> w.
    Vec2 ab = to_w;
    float tseg = clampf(dot(s.block_pos - s.agent, ab) / std::max(dot(ab, ab), 1e-9f), 0.0f, 1.0f);
    Vec2 closest = s.agent + ab * tseg;
    float seg_dist = norm(s.block_pos - closest);

    // 96 > max support radius + agent radius, so a clearing segment can
    // never graze the block; otherwise ride the ring and drop in only once
    // the bearing matches.
    if (seg_dist >= 96.0f || std::abs(gap) < 0.08f)
        return clamp_action(to_w * 0.7f);

    float ring = std::max(norm(rel_w) + 12.0f, 96.0f);
    Vec2 out_dir = normalized(rel_a);
    Vec2 tangent = perp(out_dir) * (gap > 0 ? 1.0f : -1.0f);
    float radial_err = ring - norm(rel_a);
    Vec2 cmd = tangent * 8.0f + out_dir * clampf(radial_err * 0.5f, -6.0f, 6.0f);
    return clamp_action(cmd);
}

// The expert only ever pushes.  Because the T's faces are axis-aligned in
// its body frame, a push along a body axis translates the block exactly
// along that axis (contact normal = push direction), and contact at
// lateral offset b adds torque dtheta ~ -kappa*depth*b per tick.  With a
// large angle error the face with the biggest usable lever is pushed (the
// bar top allows offsets around 50); otherwise the goal-aligned face is
// pushed with a small steering offset that trims the residual angle.
Vec2 pusht_expert(const EnvState& s) {
    Vec2 to_goal = s.goal_pos - s.block_pos;
    float pos_err = norm(to_goal);
    float ang_err = wrap_angle(s.goal_theta - s.block_theta);
    Vec2 dir_goal = pos_err > 1e-6f ? Vec2{to_goal.x / pos_err, to_goal.y / pos_err} : Vec2{1, 0};

    bool rot_mode = std::abs(ang_err) > 0.30f ||
                    (std::abs(ang_err) > 0.22f && pos_err < 40.0f);
    // Near a half-turn error either unwind direction works, but the sign
    // must not flip with tick noise; pin it positive.
    float ang_sign = (ang_err > 0 || std::abs(ang_err) > 2.9f) ? 1.0f : -1.0f;
    // Steering offset ramps in smoothly past a dead band; near the goal
    // with the angle already inside tolerance, push dead center so the
    // final approach cannot knock the angle back out.
    float steer = -ang_sign * clampf((std::abs(ang_err) - 0.08f) * 300.0f, 0.0f, 30.0f);
    if (std::abs(ang_err) < 0.18f) steer *= clampf((pos_err - 15.0f) / 40.0f, 0.0f, 1.0f);
    float want_b = rot_mode ? -52.0f * ang_sign : steer;

    struct Pick {
        Vec2 u, staging;
        float b = 0, surf = 0, score = -1e30f;
    } best;
    for (Vec2 axis : {Vec2{1, 0}, Vec2{-1, 0}, Vec2{0, 1}, Vec2{0, -1}}) {
        Vec2 u = rotate(axis, s.block_theta);
        Vec2 back{-u.x, -u.y};
        float b = want_b;
        float surf = -1.0f;
        for (; std::abs(b) > 1.0f; b *= 0.85f) {
            surf = ray_exit_at_offset(s.block_theta, back, -b);
            if (surf > 0.0f) break;
        }
        if (surf <= 0.0f) {
            b = 0.0f;
            surf = ray_exit_at_offset(s.block_theta, back, 0.0f);
        }
        Vec2 line_off = perp(u) * b;
        Vec2 staging = s.block_pos + back * (surf + kAgentRadius + 8.0f) + line_off;
        // Linear ramps, not cliffs: a hard cutoff flickers with tick noise
        // and makes the face choice thrash.
        auto box_pen = [](Vec2 p, float margin) {
            return std::max(0.0f, margin - p.x) + std::max(0.0f, p.x - (kArena - margin)) +
                   std::max(0.0f, margin - p.y) + std::max(0.0f, p.y - (kArena - margin));
        };
        float score;
        if (rot_mode) {
            // A sustained push on one face makes the block travel an arc
            // (the push direction rotates with the block).  Predict where
            // the next stretch of swing would carry it and keep that
            // endpoint inside the arena and near the goal.
            float swing = std::min(std::abs(ang_err), 1.2f);
            float rate = std::max(std::abs(b), 1.0f) / t_moment_proxy();
            Vec2 chord = rotate(u, 0.5f * ang_sign * swing) *
                         (2.0f * std::sin(0.5f * swing) / rate);
            Vec2 end = s.block_pos + chord;
            score = std::abs(b) - 0.2f * norm(end - s.goal_pos) - 6.0f * box_pen(end, 60.0f);
        } else {
            score = 100.0f * dot(u, dir_goal) + 0.5f * std::abs(b);
        }
        // Never push the block toward a nearby wall.
        score -= 12.0f * box_pen(s.block_pos + u * 35.0f, 55.0f);
        // A face whose contact point lies beyond a wall cannot be pushed.
        score -= 5.0f * box_pen(s.block_pos + back * (surf + kAgentRadius - kBite) + line_off, 2.0f);
        score -= 0.25f * norm(staging - s.agent);
        // Strong commitment to the face currently being pushed: distance
        // stickiness alone balances at flip-flop equilibria.
        Vec2 arel = s.agent - s.block_pos;
        float adepth = dot(arel, back);
        if (adepth >= surf - 6.0f && adepth < surf + 80.0f &&
            std::abs(dot(arel, perp(u)) - b) < 45.0f)
            score += 50.0f;
        // A staging point past a wall is pulled inside instead of vetoed:
        // the contact point itself usually remains reachable.
        Vec2 clamped{clampf(staging.x, 6.0f, kArena - 6.0f),
                     clampf(staging.y, 6.0f, kArena - 6.0f)};
        score -= 2.0f * norm(staging - clamped);
        if (score > best.score) best = {u, clamped, b, surf, score};
    }

    Vec2 back{-best.u.x, -best.u.y};
    Vec2 rel = s.agent - s.block_pos;
    float depth_along = dot(rel, back);
    float lateral = dot(rel, perp(best.u));
    // Wider tolerances while engaged so a rotating contact window is
    // tracked (sliding along the face) instead of abandoned for a fresh
    // staging trip.
    bool engaged = depth_along < best.surf + 12.0f;
    float lat_tol = engaged ? 55.0f : 40.0f;
    bool behind = depth_along >= best.surf - 6.0f && depth_along < best.surf + 80.0f;
    bool in_window = std::abs(lateral - best.b) < lat_tol;
    if (behind && in_window) {
        // Hover just off the face while sliding sideways; bite only once
        // laterally lined up, so repositioning never torques the block.
        float press = std::abs(lateral - best.b) <= 15.0f ? best.surf + kAgentRadius - kBite
                                                          : best.surf + kAgentRadius + 2.0f;
        Vec2 target = s.block_pos + back * press + perp(best.u) * best.b;
        return clamp_action(target - s.agent);
    }
    return nav_to(s, best.staging);
}

}  // namespace

EnvId parse_env_id(const std::string& name) {
    if (name == "reach2d") return EnvId::Reach2d;
    if (name == "pusht_lite") return EnvId::PushtLite;
    throw ConfigError("unknown env id: " + name);
}

const char* env_name(EnvId id) {
    return id == EnvId::Reach2d ? "reach2d" : "pusht_lite";
}

int obs_dim(EnvId id) { return id == EnvId::Reach2d ? 6 : 12; }
int action_dim(EnvId) { return 2; }

float wrap_angle(float a) {
    float w = std::remainder(a, 2.0f * static_cast<float>(M_PI));
    if (w <= -static_cast<float>(M_PI)) w += 2.0f * static_cast<float>(M_PI);
    return w;
}

std::array<Vec2, 8> t_vertices() {
    float yc = centroid_offset();
    return {Vec2{-kStemW / 2, -yc},
            Vec2{kStemW / 2, -yc},
            Vec2{kStemW / 2, kStemH - yc},
            Vec2{kBarW / 2, kStemH - yc},
            Vec2{kBarW / 2, kStemH + kBarH - yc},
            Vec2{-kBarW / 2, kStemH + kBarH - yc},
            Vec2{-kBarW / 2, kStemH - yc},
            Vec2{-kStemW / 2, kStemH - yc}};
}

float t_moment_proxy() {
    float sum = 0.0f;
    for (Vec2 v : t_vertices()) sum += dot(v, v);
    return sum / 8.0f;
}

float t_support(float theta, Vec2 dir) {
    float best = -1e30f;
    for (Vec2 v : t_vertices()) best = std::max(best, dot(rotate(v, theta), dir));
    return best;
}

float t_ray_exit(float theta, Vec2 dir) {
    return std::max(ray_exit_at_offset(theta, dir, 0.0f), 0.0f);
}

std::vector<float> observe(const EnvState& s) {
    std::vector<float> o;
    o.reserve(obs_dim(s.env));
    o.push_back(s.agent.x / kArena);
    o.push_back(s.agent.y / kArena);
    if (s.env == EnvId::PushtLite) {
        o.push_back(s.block_pos.x / kArena);
        o.push_back(s.block_pos.y / kArena);
        o.push_back(std::cos(s.block_theta));
        o.push_back(std::sin(s.block_theta));
    }
    o.push_back(s.goal_pos.x / kArena);
    o.push_back(s.goal_pos.y / kArena);
    if (s.env == EnvId::PushtLite) {
        o.push_back(std::cos(s.goal_theta));
        o.push_back(std::sin(s.goal_theta));
    }
    o.push_back(s.env == EnvId::Reach2d ? 1.0f : 0.0f);
    o.push_back(s.env == EnvId::PushtLite ? 1.0f : 0.0f);
    return o;
}

bool success_of(const EnvState& s) {
    if (s.env == EnvId::Reach2d) return norm(s.agent - s.goal_pos) < kReachTolerance;
    bool pos_ok = norm(s.block_pos - s.goal_pos) < kBlockPosTolerance;
    bool ang_ok = std::abs(wrap_angle(s.block_theta - s.goal_theta)) < kBlockAngTolerance;
    return pos_ok && ang_ok;
}

std::pair<EnvState, std::vector<float>> reset(EnvId id, std::uint64_t seed) {
    Rng rng(seed ^ 0x5EED0000u);
    EnvState s;
    s.env = id;
    s.step_index = 0;
    if (id == EnvId::Reach2d) {
        auto sample = [&]() {
            return Vec2{static_cast<float>(rng.uniform(20.0, kArena - 20.0)),
                        static_cast<float>(rng.uniform(20.0, kArena - 20.0))};
        };
        s.agent = sample();
        do {
            s.goal_pos = sample();
        } while (norm(s.goal_pos - s.agent) < kMinSeparation);
        return {s, observe(s)};
    }
    // Block and goal keep a wall margin so the whole T stays visible; the
    // agent additionally clears the block's largest radius so no spawn
    // starts in contact.
    auto sample_pose = [&](float margin) {
        return Vec2{static_cast<float>(rng.uniform(margin, kArena - margin)),
                    static_cast<float>(rng.uniform(margin, kArena - margin))};
    };
    s.block_pos = sample_pose(100.0f);
    s.block_theta = static_cast<float>(rng.uniform(-M_PI, M_PI));
    do {
        s.goal_pos = sample_pose(100.0f);
    } while (norm(s.goal_pos - s.block_pos) < kMinSeparation);
    s.goal_theta = static_cast<float>(rng.uniform(-M_PI, M_PI));
    do {
        s.agent = sample_pose(20.0f);
    } while (norm(s.agent - s.block_pos) < 110.0f || norm(s.agent - s.goal_pos) < kMinSeparation);
    return {s, observe(s)};
}

StepOut step(const EnvState& s, Vec2 action) {
    EnvState n = s;
    Vec2 a = clamp_action(action);
    n.agent = clamp_arena(s.agent + a);

    if (s.env == EnvId::PushtLite) {
        // Agent circle vs the two body-frame rectangles; the deepest
        // penetration wins and the block yields by exactly that depth.
        Vec2 local = rotate(n.agent - n.block_pos, -n.block_theta);
        Contact best;
        for (const Rect& r : t_rects()) {
            Contact c = circle_rect_contact(local, r, kAgentRadius);
            if (c.hit && c.depth > best.depth) {
                best = c;
                best.hit = true;
            }
        }
        if (best.hit) {
            Vec2 push_w = rotate(best.push_dir, n.block_theta);
            Vec2 r_w = rotate(best.point, n.block_theta);
            Vec2 shift = push_w * best.depth;
            n.block_pos = clamp_arena(n.block_pos + shift);
            float kappa = 1.0f / t_moment_proxy();
            n.block_theta = wrap_angle(n.block_theta + kappa * cross(r_w, shift));
        }
    }

    n.step_index = s.step_index + 1;
    StepOut out;
    out.success = success_of(n);
    out.done = out.success || n.step_index >= kEpisodeCap;
    out.state = n;
    out.obs = observe(n);
    return out;
}

Vec2 expert_action(const EnvState& s) {
    if (s.env == EnvId::Reach2d) {
        Vec2 d = s.goal_pos - s.agent;
        return clamp_action(d * kReachGain);
    }
    return pusht_expert(s);
}

}  // namespace hume::envsim
