#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "essaystack/core.hpp"

namespace essaystack {

struct LinearModel {
    Vector w;
    double b = 0.0;
};

struct RidgeConfig {
    double lambda = 1.0;
};

struct SvrConfig {
    double c = 1.0;
    double epsilon = 0.1;
    long max_iter = 10'000'000;
    double tol = 1e-4;
    bool record_objective = false; // keep the dual objective after every step
};

struct SvrFitInfo {
    long iterations = 0;
    double kkt_gap = 0.0;
    std::vector<double> dual_objective; // filled when record_objective is set
    Vector dual_coef;                   // alpha_i - alpha_i^* per sample
};

namespace detail {
inline void check_finite(const Matrix& x, const Vector& y, const char* who) {
    if (!x.allFinite() || !y.allFinite()) throw ValidationError(std::string(who) + ": non-finite input");
    if (x.rows() != y.size())
        throw DimensionError(std::string(who) + ": X has " + std::to_string(x.rows()) + " rows, y has " +
                             std::to_string(y.size()));
    if (x.rows() < 1) throw DimensionError(std::string(who) + ": need at least one sample");
}
} // namespace detail

/// Minimizes ||y - Xw - b||^2 + lambda ||w||^2 with an unpenalized intercept,
/// via Cholesky on the centered normal equations.
inline LinearModel fit_ridge(const Matrix& x, const Vector& y, const RidgeConfig& cfg) {
    detail::check_finite(x, y, "fit_ridge");
    if (!(cfg.lambda >= 0.0)) throw ValidationError("fit_ridge: lambda must be >= 0");
    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    const double y_mean = y.mean();
    const Matrix xc = x.rowwise() - x_mean;
    const Vector yc = y.array() - y_mean;

    LinearModel m;
    if (x.cols() == 0) {
        m.w = Vector(0);
        m.b = y_mean;
        return m;
    }
    Matrix gram = xc.transpose() * xc;
    gram.diagonal().array() += cfg.lambda;
    const Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success || (cfg.lambda == 0.0 && llt.rcond() < 1e-12))
        throw SingularSystemError("fit_ridge: normal equations are singular; use lambda > 0");
    const Vector rhs = xc.transpose() * yc;
    m.w = llt.solve(rhs);
    // One step of iterative refinement keeps the stationarity residual near machine precision.
    m.w += llt.solve(rhs - gram * m.w);
    m.b = y_mean - x_mean.dot(m.w);
    return m;
}

inline Vector predict_linear(const LinearModel& m, const Matrix& x) {
    if (x.cols() != m.w.size())
        throw DimensionError("predict_linear: model has " + std::to_string(m.w.size()) + " weights, input has " +
                             std::to_string(x.cols()) + " columns");
    return (x * m.w).array() + m.b;
}

/// 0.5 ||w||^2 + C * sum max(0, |y_i - (w.x_i + b)| - epsilon)
inline double svr_objective(const LinearModel& m, const Matrix& x, const Vector& y, double c, double epsilon) {
    const Vector r = y - predict_linear(m, x);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) loss += std::max(0.0, std::abs(r(i)) - epsilon);
    return 0.5 * m.w.squaredNorm() + c * loss;
}

/// Linear epsilon-insensitive SVR with an unpenalized intercept. Solved by SMO
/// (second-order working-set selection) on the dual over 2n box-constrained
/// variables with the equality constraint sum(alpha - alpha^*) = 0.
inline LinearModel fit_svr(const Matrix& x, const Vector& y, const SvrConfig& cfg, SvrFitInfo* info = nullptr) {
    detail::check_finite(x, y, "fit_svr");
    if (!(cfg.c > 0.0) || !(cfg.epsilon >= 0.0) || !(cfg.tol > 0.0) || cfg.max_iter < 1)
        throw ValidationError("fit_svr: need c > 0, epsilon >= 0, tol > 0, max_iter >= 1");
    const Eigen::Index n = x.rows();
    const Eigen::Index l = 2 * n;
    const Matrix K = x * x.transpose();
    const double C = cfg.c;
    constexpr double kTau = 1e-12;

    auto sample = [n](Eigen::Index k) { return k < n ? k : k - n; };
    auto sign = [n](Eigen::Index k) { return k < n ? 1.0 : -1.0; };
    auto q = [&](Eigen::Index a, Eigen::Index b) { return sign(a) * sign(b) * K(sample(a), sample(b)); };

    Vector alpha = Vector::Zero(l);
    Vector p(l), G(l);
    for (Eigen::Index i = 0; i < n; ++i) {
        p(i) = cfg.epsilon - y(i);
        p(i + n) = cfg.epsilon + y(i);
    }
    G = p;

    auto in_up = [&](Eigen::Index k) { return sign(k) > 0 ? alpha(k) < C : alpha(k) > 0; };
    auto in_low = [&](Eigen::Index k) { return sign(k) > 0 ? alpha(k) > 0 : alpha(k) < C; };
    auto dual_value = [&]() { return 0.5 * alpha.dot(G + p); };

    long iter = 0;
    double gap = 0.0;
    std::vector<double> trace;
    if (cfg.record_objective) trace.push_back(dual_value());
    for (;;) {
        Eigen::Index i = -1;
        double gmax = -std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < l; ++k) {
            if (in_up(k) && -sign(k) * G(k) > gmax) {
                gmax = -sign(k) * G(k);
                i = k;
            }
        }
        double gmin = std::numeric_limits<double>::infinity();
        Eigen::Index j = -1;
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < l; ++k) {
            if (!in_low(k)) continue;
            const double v = -sign(k) * G(k);
            gmin = std::min(gmin, v);
            if (i < 0) continue;
            const double diff = gmax - v;
            if (diff > 0) {
                double a = K(sample(i), sample(i)) + K(sample(k), sample(k)) - 2.0 * K(sample(k), sample(i));
                if (a <= 0) a = kTau;
                if (-(diff * diff) / a < best) {
                    best = -(diff * diff) / a;
                    j = k;
                }
            }
        }
        gap = gmax - gmin;
        if (i < 0 || j < 0 || gap < cfg.tol) break;
        if (iter >= cfg.max_iter) break;
        ++iter;

        const double ai_old = alpha(i), aj_old = alpha(j);
        const double qij = q(i, j);
        const double qii = K(sample(i), sample(i)), qjj = K(sample(j), sample(j));
        if (sign(i) != sign(j)) {
            double quad = qii + qjj + 2.0 * qij;
            if (quad <= 0) quad = kTau;
            const double delta = (-G(i) - G(j)) / quad;
            const double diff = alpha(i) - alpha(j);
            alpha(i) += delta;
            alpha(j) += delta;
            if (diff > 0) {
                if (alpha(j) < 0) { alpha(j) = 0; alpha(i) = diff; }
            } else {
                if (alpha(i) < 0) { alpha(i) = 0; alpha(j) = -diff; }
            }
            if (diff > 0) {
                if (alpha(i) > C) { alpha(i) = C; alpha(j) = C - diff; }
            } else {
                if (alpha(j) > C) { alpha(j) = C; alpha(i) = C + diff; }
            }
        } else {
            double quad = qii + qjj - 2.0 * qij;
            if (quad <= 0) quad = kTau;
            const double delta = (G(i) - G(j)) / quad;
            const double sum = alpha(i) + alpha(j);
            alpha(i) -= delta;
            alpha(j) += delta;
            if (sum > C) {
                if (alpha(i) > C) { alpha(i) = C; alpha(j) = sum - C; }
            } else {
                if (alpha(j) < 0) { alpha(j) = 0; alpha(i) = sum; }
            }
            if (sum > C) {
                if (alpha(j) > C) { alpha(j) = C; alpha(i) = sum - C; }
            } else {
                if (alpha(i) < 0) { alpha(i) = 0; alpha(j) = sum; }
            }
        }
        const double dai = alpha(i) - ai_old, daj = alpha(j) - aj_old;
        const Vector dg = sign(i) * dai * K.col(sample(i)) + sign(j) * daj * K.col(sample(j));
        G.head(n) += dg;
        G.tail(n) -= dg;
        if (cfg.record_objective) trace.push_back(dual_value());
    }

    // Intercept from the KKT conditions: average over free variables, else the
    // midpoint of the feasible interval.
    double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
    int n_free = 0;
    for (Eigen::Index k = 0; k < l; ++k) {
        const double yg = sign(k) * G(k);
        if (alpha(k) >= C) {
            if (sign(k) < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else if (alpha(k) <= 0) {
            if (sign(k) > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    const double rho = n_free > 0 ? sum_free / n_free : 0.5 * (ub + lb);

    LinearModel m;
    const Vector coef = alpha.head(n) - alpha.tail(n);
    m.w = x.transpose() * coef;
    m.b = -rho;
    if (gap >= cfg.tol && iter >= cfg.max_iter) {
        const double duality_gap = svr_objective(m, x, y, C, cfg.epsilon) + dual_value();
        throw ConvergenceError("fit_svr: no convergence after " + std::to_string(iter) +
                                   " iterations; duality gap " + std::to_string(duality_gap),
                               duality_gap);
    }
    if (info) {
        info->iterations = iter;
        info->kkt_gap = gap;
        info->dual_objective = std::move(trace);
        info->dual_coef = coef;
    }
    return m;
}

/// Per-column zero mean / unit variance from training rows; constant columns get scale 1.
struct Standardizer {
    Vector mean;
    Vector scale;

    static Standardizer fit(const Matrix& x) {
        Standardizer s;
        s.mean = x.colwise().mean().transpose();
        s.scale.resize(x.cols());
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            const double var = (x.col(c).array() - s.mean(c)).square().mean();
            s.scale(c) = var > 1e-24 ? std::sqrt(var) : 1.0;
        }
        return s;
    }

    Matrix apply(const Matrix& x) const {
        if (x.cols() != mean.size()) throw DimensionError("Standardizer: column count mismatch");
        return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
    }
};

inline nlohmann::json to_json(const LinearModel& m) {
    return {{"w", std::vector<double>(m.w.data(), m.w.data() + m.w.size())}, {"b", m.b}};
}

inline LinearModel linear_from_json(const nlohmann::json& j) {
    LinearModel m;
    const auto w = j.at("w").get<std::vector<double>>();
    m.w = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
    m.b = j.at("b").get<double>();
    return m;
}

inline nlohmann::json to_json(const Standardizer& s) {
    return {{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
            {"scale", std::vector<double>(s.scale.data(), s.scale.data() + s.scale.size())}};
}

inline Standardizer standardizer_from_json(const nlohmann::json& j) {
    Standardizer s;
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto scale = j.at("scale").get<std::vector<double>>();
    s.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    s.scale = Eigen::Map<const Vector>(scale.data(), static_cast<Eigen::Index>(scale.size()));
    return s;
}

} // namespace essaystack
