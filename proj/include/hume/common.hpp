#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hume {

// Error taxonomy shared across modules.  Process exit codes map config
// errors to 2, missing/unreadable artifacts to 3 and numeric failures to 4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
    FormatError(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
    std::uint64_t byte_offset = 0;
};

struct MissingArtifactError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FrozenViolationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateRankError : std::runtime_error {
    DegenerateRankError(const std::string& what, int rank)
        : std::runtime_error(what), achieved_rank(rank) {}
    int achieved_rank = 0;
};

// Deterministic RNG.  mt19937_64 output is pinned by the standard, and the
// uniform/normal transforms below avoid the implementation-defined
// std::*_distribution adapters, so streams replay bitwise across platforms.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // [0, 1)
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    int uniform_int(int n) {
        return static_cast<int>(uniform() * static_cast<double>(n));
    }

    // Box-Muller, one fresh pair of uniforms per draw.
    double normal() {
        double u1 = 1.0 - uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    float normal_f() { return static_cast<float>(normal()); }

    // Derived stream, decorrelated from the parent by a fixed mix.
    Rng split(std::uint64_t stream) {
        std::uint64_t s = next_u64();
        return Rng(s ^ (0x9E3779B97F4A7C15ull * (stream + 1)));
    }

  private:
    std::mt19937_64 gen_;
};

// FNV-1a over a byte range; used to pin frozen parameter sets.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xCBF29CE484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

inline bool all_finite(std::span<const float> xs) {
    for (float x : xs)
        if (!std::isfinite(x)) return false;
    return true;
}

inline float clampf(float x, float lo, float hi) {
    return x < lo ? lo : (x > hi ? hi : x);
}

// Index of the maximum element; ties resolve to the lowest index.
inline int argmax_lowest_tie(std::span<const float> xs) {
    if (xs.empty()) throw ShapeError("argmax over empty range");
    int best = 0;
    for (int i = 1; i < static_cast<int>(xs.size()); ++i)
        if (xs[i] > xs[best]) best = i;
    return best;
}

}  // namespace hume
