#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "essaystack/core.hpp"
#include "essaystack/linear_models.hpp"
#include "essaystack/pooling_head.hpp"
#include "essaystack/stratified_kfold.hpp"

namespace essaystack {

enum class BaseKind { ridge, svr, head };

inline std::string to_string(BaseKind k) {
    switch (k) {
    case BaseKind::ridge: return "ridge";
    case BaseKind::svr: return "svr";
    case BaseKind::head: return "head";
    }
    return "?";
}

inline BaseKind base_kind_from_string(const std::string& s) {
    if (s == "ridge") return BaseKind::ridge;
    if (s == "svr") return BaseKind::svr;
    if (s == "head") return BaseKind::head;
    throw ValidationError("unknown base model kind '" + s + "' (expected ridge, svr or head)");
}

struct BaseModelConfig {
    BaseKind kind = BaseKind::ridge;
    RidgeConfig ridge;
    SvrConfig svr;
    HeadTrainConfig head;
};

/// A base regressor fitted on embedding features: features are standardized with
/// training-row statistics, then either six scalar linear fits or one head.
struct FittedBase {
    BaseKind kind = BaseKind::ridge;
    Standardizer standardizer;
    std::vector<LinearModel> linear; // one per target for ridge/svr
    HeadModel head;
};

inline FittedBase fit_base(const Matrix& x, const Matrix& y, const BaseModelConfig& cfg) {
    if (x.rows() != y.rows() || y.cols() != kNumTargets) throw DimensionError("fit_base: features and targets disagree");
    FittedBase fb;
    fb.kind = cfg.kind;
    fb.standardizer = Standardizer::fit(x);
    const Matrix xs = fb.standardizer.apply(x);
    switch (cfg.kind) {
    case BaseKind::ridge:
        for (int t = 0; t < kNumTargets; ++t) fb.linear.push_back(fit_ridge(xs, y.col(t), cfg.ridge));
        break;
    case BaseKind::svr:
        for (int t = 0; t < kNumTargets; ++t) fb.linear.push_back(fit_svr(xs, y.col(t), cfg.svr));
        break;
    case BaseKind::head:
        fb.head = train_head(xs, y, cfg.head);
        break;
    }
    return fb;
}

/// n x 6 predictions on the score scale (not clamped).
inline Matrix predict_base(const FittedBase& fb, const Matrix& x) {
    const Matrix xs = fb.standardizer.apply(x);
    if (fb.kind == BaseKind::head) return predict_head(fb.head, xs);
    Matrix out(x.rows(), kNumTargets);
    for (int t = 0; t < kNumTargets; ++t) out.col(t) = predict_linear(fb.linear[static_cast<std::size_t>(t)], xs);
    return out;
}

inline Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
    return out;
}

/// Out-of-fold predictions: row i comes from a model fitted without i's fold.
inline Matrix oof_predictions(const Matrix& x, const Matrix& y, const FoldAssignment& folds,
                              const BaseModelConfig& cfg) {
    if (static_cast<std::size_t>(x.rows()) != folds.fold.size() || x.rows() != y.rows())
        throw DimensionError("oof_predictions: features, targets and folds are not aligned");
    Matrix oof(x.rows(), kNumTargets);
    for (int f = 0; f < folds.k; ++f) {
        const auto train = folds.complement(f);
        const auto held = folds.members(f);
        if (held.empty()) continue;
        if (train.size() < 2)
            throw ValidationError("fold " + std::to_string(f) + " leaves fewer than 2 training rows");
        const FittedBase fb = fit_base(take_rows(x, train), take_rows(y, train), cfg);
        const Matrix pred = predict_base(fb, take_rows(x, held));
        for (std::size_t r = 0; r < held.size(); ++r) oof.row(static_cast<Eigen::Index>(held[r])) = pred.row(static_cast<Eigen::Index>(r));
    }
    return oof;
}

// --- serialization ----------------------------------------------------------

inline nlohmann::json to_json(const BaseModelConfig& c) {
    nlohmann::json j = {{"kind", to_string(c.kind)}};
    switch (c.kind) {
    case BaseKind::ridge: j["lambda"] = c.ridge.lambda; break;
    case BaseKind::svr:
        j["c"] = c.svr.c;
        j["epsilon"] = c.svr.epsilon;
        j["tol"] = c.svr.tol;
        j["max_iter"] = c.svr.max_iter;
        break;
    case BaseKind::head: j["head"] = to_json(c.head); break;
    }
    return j;
}

/// Reads a base config; unknown kinds and invalid values are appended to `problems`.
inline BaseModelConfig base_config_from_json(const nlohmann::json& j, std::vector<std::string>* problems = nullptr,
                                             const std::string& where = "base") {
    BaseModelConfig c;
    auto complain = [&](const std::string& msg) {
        if (problems) problems->push_back(where + ": " + msg);
        else throw ValidationError(where + ": " + msg);
    };
    try {
        c.kind = base_kind_from_string(j.value("kind", std::string("ridge")));
    } catch (const ValidationError& e) {
        complain(e.what());
        return c;
    }
    c.ridge.lambda = j.value("lambda", c.ridge.lambda);
    c.svr.c = j.value("c", c.svr.c);
    c.svr.epsilon = j.value("epsilon", c.svr.epsilon);
    c.svr.tol = j.value("tol", c.svr.tol);
    c.svr.max_iter = j.value("max_iter", c.svr.max_iter);
    if (j.contains("head")) {
        const auto& h = j.at("head");
        c.head.learning_rate = h.value("learning_rate", c.head.learning_rate);
        c.head.epochs = h.value("epochs", c.head.epochs);
        c.head.batch_size = h.value("batch_size", c.head.batch_size);
        c.head.l2 = h.value("l2", c.head.l2);
        c.head.seed = h.value("seed", c.head.seed);
    }
    if (c.kind == BaseKind::ridge && !(c.ridge.lambda >= 0)) complain("lambda must be >= 0");
    if (c.kind == BaseKind::svr && (!(c.svr.c > 0) || !(c.svr.epsilon >= 0) || !(c.svr.tol > 0)))
        complain("svr needs c > 0, epsilon >= 0, tol > 0");
    if (c.kind == BaseKind::head &&
        (!(c.head.learning_rate > 0) || c.head.epochs < 1 || c.head.batch_size < 1 || !(c.head.l2 >= 0)))
        complain("head needs learning_rate > 0, epochs >= 1, batch_size >= 1, l2 >= 0");
    return c;
}

inline nlohmann::json to_json(const FittedBase& fb) {
    nlohmann::json j = {{"kind", to_string(fb.kind)}, {"standardizer", to_json(fb.standardizer)}};
    if (fb.kind == BaseKind::head) {
        j["head"] = to_json(fb.head);
    } else {
        nlohmann::json per = nlohmann::json::array();
        for (const auto& m : fb.linear) per.push_back(to_json(m));
        j["targets"] = per;
    }
    return j;
}

inline FittedBase fitted_base_from_json(const nlohmann::json& j) {
    FittedBase fb;
    fb.kind = base_kind_from_string(j.at("kind").get<std::string>());
    fb.standardizer = standardizer_from_json(j.at("standardizer"));
    if (fb.kind == BaseKind::head) {
        fb.head = head_from_json(j.at("head"));
    } else {
        for (const auto& m : j.at("targets")) fb.linear.push_back(linear_from_json(m));
        if (fb.linear.size() != kNumTargets) throw ParseError("base model: expected 6 per-target models");
    }
    return fb;
}

} // namespace essaystack
