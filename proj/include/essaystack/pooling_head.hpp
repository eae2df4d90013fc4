#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "essaystack/core.hpp"

namespace essaystack {

/// Token-level hidden states of one essay: T x d, with a 0/1 attention mask.
struct HiddenStates {
    Matrix h;
    std::vector<int> mask;
};

/// Masked mean over token positions; with an all-ones mask this is the plain mean.
inline Vector mean_pool(const HiddenStates& s) {
    if (s.h.rows() < 1 || s.h.cols() < 1) throw DimensionError("mean_pool: empty hidden states");
    if (static_cast<Eigen::Index>(s.mask.size()) != s.h.rows())
        throw DimensionError("mean_pool: mask length " + std::to_string(s.mask.size()) + " != T " +
                             std::to_string(s.h.rows()));
    if (!s.h.allFinite()) throw ValidationError("mean_pool: non-finite hidden state");
    Vector sum = Vector::Zero(s.h.cols());
    int count = 0;
    for (Eigen::Index t = 0; t < s.h.rows(); ++t) {
        if (s.mask[static_cast<std::size_t>(t)] == 0) continue;
        sum += s.h.row(t).transpose();
        ++count;
    }
    if (count == 0) throw ValidationError("mean_pool: mask has no active positions");
    return sum / count;
}

struct HeadModel {
    Matrix w; // 6 x d
    Vector b; // 6

    Eigen::Index dim() const { return w.cols(); }
};

struct HeadTrainConfig {
    double learning_rate = 0.1;
    int epochs = 100;
    int batch_size = 32;
    std::uint64_t seed = 0;
    double l2 = 0.0;
};

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// Per-target sigmoid(W x + b).
inline Vector head_forward(const HeadModel& m, const Vector& x) {
    if (x.size() != m.dim())
        throw DimensionError("head_forward: model dim " + std::to_string(m.dim()) + ", input dim " +
                             std::to_string(x.size()));
    Vector z = m.w * x + m.b;
    return z.unaryExpr([](double v) { return sigmoid(v); });
}

/// Row-wise forward pass over an n x d matrix; returns n x 6 probabilities.
inline Matrix head_forward_batch(const HeadModel& m, const Matrix& x) {
    if (x.cols() != m.dim()) throw DimensionError("head_forward: dimension mismatch");
    Matrix z = (x * m.w.transpose()).rowwise() + m.b.transpose();
    return z.unaryExpr([](double v) { return sigmoid(v); });
}

inline constexpr double kProbClamp = 1e-7;

/// Mean binary cross-entropy over all entries; p is clamped to [1e-7, 1 - 1e-7].
inline double bce_loss(const Matrix& p, const Matrix& y) {
    if (p.rows() != y.rows() || p.cols() != y.cols()) throw DimensionError("bce_loss: shape mismatch");
    if (p.size() == 0) throw DimensionError("bce_loss: empty input");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            const double q = std::clamp(p(i, j), kProbClamp, 1.0 - kProbClamp);
            acc -= y(i, j) * std::log(q) + (1.0 - y(i, j)) * std::log(1.0 - q);
        }
    }
    return acc / static_cast<double>(p.size());
}

inline double normalize_score(double s) {
    if (!(s >= kScoreMin && s <= kScoreMax)) throw ValidationError("normalize_score: score outside [1,5]");
    return (s - kScoreMin) / (kScoreMax - kScoreMin);
}

inline double denormalize_score(double t) { return kScoreMin + t * (kScoreMax - kScoreMin); }

inline Matrix normalize_targets(const Matrix& scores) { return scores.unaryExpr([](double s) { return normalize_score(s); }); }
inline Matrix denormalize_targets(const Matrix& t) { return t.unaryExpr([](double v) { return denormalize_score(v); }); }

/// Training objective on a batch: mean BCE + l2 * ||W||^2.
inline double head_objective(const HeadModel& m, const Matrix& x, const Matrix& t, double l2) {
    return bce_loss(head_forward_batch(m, x), t) + l2 * m.w.squaredNorm();
}

struct HeadGradient {
    Matrix w;
    Vector b;
};

/// Analytic gradient of head_objective (unclamped BCE derivative).
inline HeadGradient head_gradient(const HeadModel& m, const Matrix& x, const Matrix& t, double l2) {
    const Matrix p = head_forward_batch(m, x);
    const Matrix dz = (p - t) / static_cast<double>(p.size()); // n x 6
    HeadGradient g;
    g.w = dz.transpose() * x + 2.0 * l2 * m.w;
    g.b = dz.colwise().sum().transpose();
    return g;
}

inline HeadModel init_head(Eigen::Index d, std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, "head-init"));
    std::normal_distribution<double> gauss(0.0, 0.01);
    HeadModel m;
    m.w.resize(kNumTargets, d);
    for (Eigen::Index r = 0; r < m.w.rows(); ++r)
        for (Eigen::Index c = 0; c < d; ++c) m.w(r, c) = gauss(rng);
    m.b = Vector::Zero(kNumTargets);
    return m;
}

/// Mini-batch gradient descent on mean BCE + l2 ||W||^2. Targets are scores in
/// [1,5]; they are mapped to [0,1] internally. When `start` is given training
/// continues from it instead of a fresh seeded initialization.
inline HeadModel train_head(const Matrix& features, const Matrix& scores, const HeadTrainConfig& cfg,
                            const std::optional<HeadModel>& start = std::nullopt) {
    if (features.rows() < 1) throw DimensionError("train_head: need at least one row");
    if (features.rows() != scores.rows() || scores.cols() != kNumTargets)
        throw DimensionError("train_head: features and targets disagree");
    if (!(cfg.learning_rate > 0) || cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.l2 >= 0))
        throw ValidationError("train_head: invalid configuration");
    const Matrix t = normalize_targets(scores);
    HeadModel m = start ? *start : init_head(features.cols(), cfg.seed);
    if (m.dim() != features.cols()) throw DimensionError("train_head: start model dimension mismatch");

    const auto n = static_cast<std::size_t>(features.rows());
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(cfg.seed, "batch-order"));
    const auto bs = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start_row = 0; start_row < n; start_row += bs) {
            const std::size_t len = std::min(bs, n - start_row);
            Matrix xb(static_cast<Eigen::Index>(len), features.cols());
            Matrix tb(static_cast<Eigen::Index>(len), kNumTargets);
            for (std::size_t r = 0; r < len; ++r) {
                xb.row(static_cast<Eigen::Index>(r)) = features.row(order[start_row + r]);
                tb.row(static_cast<Eigen::Index>(r)) = t.row(order[start_row + r]);
            }
            const HeadGradient g = head_gradient(m, xb, tb, cfg.l2);
            m.w -= cfg.learning_rate * g.w;
            m.b -= cfg.learning_rate * g.b;
        }
        if (!m.w.allFinite() || !m.b.allFinite() || !std::isfinite(head_objective(m, features, t, cfg.l2)))
            throw DivergenceError("train_head: training diverged at epoch " + std::to_string(epoch + 1) +
                                      "; lower the learning rate",
                                  epoch + 1);
    }
    return m;
}

/// Head output mapped back to the score scale.
inline Matrix predict_head(const HeadModel& m, const Matrix& features) {
    return denormalize_targets(head_forward_batch(m, features));
}

inline nlohmann::json to_json(const HeadModel& m) {
    std::vector<double> w;
    for (Eigen::Index r = 0; r < m.w.rows(); ++r)
        for (Eigen::Index c = 0; c < m.w.cols(); ++c) w.push_back(m.w(r, c));
    return {{"rows", m.w.rows()}, {"cols", m.w.cols()}, {"w", w},
            {"b", std::vector<double>(m.b.data(), m.b.data() + m.b.size())}};
}

inline HeadModel head_from_json(const nlohmann::json& j) {
    HeadModel m;
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto w = j.at("w").get<std::vector<double>>();
    const auto b = j.at("b").get<std::vector<double>>();
    if (rows != kNumTargets || static_cast<Eigen::Index>(w.size()) != rows * cols || b.size() != kNumTargets)
        throw ParseError("head model: inconsistent dimensions");
    m.w.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m.w(r, c) = w[static_cast<std::size_t>(r * cols + c)];
    m.b = Eigen::Map<const Vector>(b.data(), kNumTargets);
    return m;
}

inline nlohmann::json to_json(const HeadTrainConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"epochs", c.epochs}, {"batch_size", c.batch_size},
            {"seed", c.seed}, {"l2", c.l2}};
}

} // namespace essaystack
