#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace essaystack {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr int kNumTargets = 6;
inline constexpr std::array<std::string_view, kNumTargets> kTargetNames = {
    "cohesion", "syntax", "vocabulary", "phraseology", "grammar", "conventions"};

/// Six analytic scores of one essay, in kTargetNames order.
using ScoreVector = std::array<double, kNumTargets>;

// Score grid {1.0, 1.5, ..., 5.0}.
inline constexpr double kScoreMin = 1.0;
inline constexpr double kScoreMax = 5.0;
inline constexpr double kGridStep = 0.5;
inline constexpr int kGridSize = 9;

inline bool is_on_grid(double v) {
    if (!std::isfinite(v) || v < kScoreMin || v > kScoreMax) return false;
    const double twice = v * 2.0;
    return twice == std::floor(twice);
}

/// Index of a grid value in [0, kGridSize). Caller guarantees is_on_grid(v).
inline int grid_index(double v) { return static_cast<int>(std::lround((v - kScoreMin) * 2.0)); }

inline double grid_value(int index) { return kScoreMin + kGridStep * index; }

inline double clamp_score(double v) { return std::clamp(v, kScoreMin, kScoreMax); }

// ---------------------------------------------------------------------------
// Errors. Every failure surfaced by the library derives from Error; the
// subclasses exist so callers (and the CLI) can tell the failure classes apart.
// ---------------------------------------------------------------------------
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct ParseError : Error {
    explicit ParseError(const std::string& what) : Error("parse", what) {}
};
struct ValidationError : Error {
    explicit ValidationError(const std::string& what) : Error("validation", what) {}
};
struct DimensionError : Error {
    explicit DimensionError(const std::string& what) : Error("dimension", what) {}
};
struct IoError : Error {
    explicit IoError(const std::string& what) : Error("io", what) {}
};
struct SingularSystemError : Error {
    explicit SingularSystemError(const std::string& what) : Error("singular", what) {}
};
struct ConvergenceError : Error {
    ConvergenceError(const std::string& what, double gap)
        : Error("convergence", what), duality_gap(gap) {}
    double duality_gap;
};
struct DivergenceError : Error {
    DivergenceError(const std::string& what, int ep) : Error("divergence", what), epoch(ep) {}
    int epoch;
};
struct VersionError : Error {
    explicit VersionError(const std::string& what) : Error("version", what) {}
};

// ---------------------------------------------------------------------------
// Hashing and seed substreams.
// ---------------------------------------------------------------------------
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Named, independent seed stream derived from a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream) {
    return splitmix64(master ^ fnv1a64(stream));
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

} // namespace essaystack
