#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "essaystack/core.hpp"

namespace essaystack {

/// Root mean squared error over two equal-length, non-empty sequences.
inline double rmse(std::span<const double> y, std::span<const double> yhat) {
    if (y.size() != yhat.size())
        throw DimensionError("rmse: length mismatch " + std::to_string(y.size()) + " vs " + std::to_string(yhat.size()));
    if (y.empty()) throw DimensionError("rmse: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - yhat[i];
        acc += r * r;
    }
    return std::sqrt(acc / static_cast<double>(y.size()));
}

inline double rmse(const Vector& y, const Vector& yhat) {
    return rmse(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())),
                std::span<const double>(yhat.data(), static_cast<std::size_t>(yhat.size())));
}

inline std::array<double, kNumTargets> columnwise_rmse(const Matrix& y, const Matrix& yhat) {
    if (y.rows() != yhat.rows() || y.cols() != kNumTargets || yhat.cols() != kNumTargets)
        throw DimensionError("mcrmse: expected two n x 6 matrices of equal shape");
    std::array<double, kNumTargets> out{};
    for (int t = 0; t < kNumTargets; ++t) out[t] = rmse(Vector(y.col(t)), Vector(yhat.col(t)));
    return out;
}

/// Mean of the six per-target RMSEs.
inline double mcrmse(const Matrix& y, const Matrix& yhat) {
    const auto per = columnwise_rmse(y, yhat);
    double s = 0.0;
    for (double v : per) s += v;
    return s / kNumTargets;
}

/// Clamp to [1,5] and round to the nearest half point, halves rounding up.
inline double discretize(double yhat) {
    if (!std::isfinite(yhat)) throw ValidationError("discretize: non-finite prediction");
    return std::floor(clamp_score(yhat) * 2.0 + 0.5) / 2.0;
}

inline Matrix clamp_scores(Matrix m) { return m.unaryExpr([](double v) { return clamp_score(v); }); }

/// Macro F1 over the nine grid classes. Classes absent from both sides are
/// skipped; a class present on only one side scores 0.
inline double f1_macro(std::span<const double> y_grid, std::span<const double> yhat_grid) {
    if (y_grid.size() != yhat_grid.size()) throw DimensionError("f1_macro: length mismatch");
    if (y_grid.empty()) throw DimensionError("f1_macro: empty input");
    std::array<int, kGridSize> tp{}, fp{}, fn{};
    for (std::size_t i = 0; i < y_grid.size(); ++i) {
        if (!is_on_grid(y_grid[i]) || !is_on_grid(yhat_grid[i])) throw ValidationError("f1_macro: off-grid input");
        const int a = grid_index(y_grid[i]);
        const int b = grid_index(yhat_grid[i]);
        if (a == b) {
            ++tp[a];
        } else {
            ++fn[a];
            ++fp[b];
        }
    }
    double sum = 0.0;
    int classes = 0;
    for (int c = 0; c < kGridSize; ++c) {
        const int in_y = tp[c] + fn[c];
        const int in_hat = tp[c] + fp[c];
        if (in_y == 0 && in_hat == 0) continue;
        ++classes;
        if (tp[c] == 0) continue;
        const double precision = static_cast<double>(tp[c]) / in_hat;
        const double recall = static_cast<double>(tp[c]) / in_y;
        sum += 2.0 * precision * recall / (precision + recall);
    }
    return sum / classes;
}

struct MetricsReport {
    std::array<double, kNumTargets> rmse{};
    double mcrmse = 0.0;
    std::array<double, kNumTargets> f1{};
    double macro_f1 = 0.0;
    std::size_t n = 0;
};

/// RMSE on clamped predictions; F1 on discretized predictions.
inline MetricsReport evaluate(const Matrix& y, const Matrix& yhat) {
    MetricsReport r;
    const Matrix clamped = clamp_scores(yhat);
    r.rmse = columnwise_rmse(y, clamped);
    r.mcrmse = 0.0;
    for (double v : r.rmse) r.mcrmse += v;
    r.mcrmse /= kNumTargets;
    for (int t = 0; t < kNumTargets; ++t) {
        std::vector<double> a(static_cast<std::size_t>(y.rows())), b(a.size());
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
            a[static_cast<std::size_t>(i)] = y(i, t);
            b[static_cast<std::size_t>(i)] = discretize(yhat(i, t));
        }
        r.f1[t] = f1_macro(a, b);
        r.macro_f1 += r.f1[t];
    }
    r.macro_f1 /= kNumTargets;
    r.n = static_cast<std::size_t>(y.rows());
    return r;
}

inline nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json per = nlohmann::json::object();
    for (int t = 0; t < kNumTargets; ++t)
        per[std::string(kTargetNames[t])] = {{"rmse", r.rmse[t]}, {"f1", r.f1[t]}};
    return {{"n", r.n}, {"mcrmse", r.mcrmse}, {"macro_f1", r.macro_f1}, {"per_target", per}};
}

} // namespace essaystack
