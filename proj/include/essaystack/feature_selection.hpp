#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "essaystack/base_models.hpp"
#include "essaystack/data_model.hpp"
#include "essaystack/metrics.hpp"

namespace essaystack {

struct SelectionResult {
    std::vector<GroupKey> selected;
    std::vector<double> cv_history; // MCRMSE after each accepted step
    double final_cv = 0.0;
};

/// Cross-validated MCRMSE of a base config on a feature matrix, using clamped OOF predictions.
inline double cv_score(const Matrix& features, const Matrix& targets, const FoldAssignment& folds,
                       const BaseModelConfig& base) {
    return mcrmse(targets, clamp_scores(oof_predictions(features, targets, folds, base)));
}

inline Matrix concat_matrices(const std::vector<const FloatMatrix*>& parts, Eigen::Index rows) {
    Eigen::Index cols = 0;
    for (const auto* p : parts) cols += p->cols();
    Matrix x(rows, cols);
    Eigen::Index at = 0;
    for (const auto* p : parts) {
        x.middleCols(at, p->cols()) = p->cast<double>();
        at += p->cols();
    }
    return x;
}

/// Greedy forward selection over whole (model, layer) groups. Candidates are
/// visited in (model_id, layer_index) order and only a strictly lower score
/// replaces the running best, so ties resolve lexicographically.
inline SelectionResult forward_select(const std::map<GroupKey, FeatureGroup>& groups, const Matrix& targets,
                                      const FoldAssignment& folds, const BaseModelConfig& base, int max_groups,
                                      double min_improve) {
    if (groups.empty()) throw ValidationError("forward_select: no feature groups");
    if (max_groups < 1) throw ValidationError("forward_select: max_groups must be >= 1");
    if (!(min_improve >= 0)) throw ValidationError("forward_select: min_improve must be >= 0");
    const Eigen::Index n = targets.rows();

    SelectionResult res;
    std::vector<const FloatMatrix*> chosen;
    double current = std::numeric_limits<double>::infinity();
    while (static_cast<int>(res.selected.size()) < max_groups && res.selected.size() < groups.size()) {
        double best = std::numeric_limits<double>::infinity();
        const GroupKey* best_key = nullptr;
        const FloatMatrix* best_mat = nullptr;
        for (const auto& [key, g] : groups) {
            if (std::find(res.selected.begin(), res.selected.end(), key) != res.selected.end()) continue;
            if (g.matrix.rows() != n) throw DimensionError("forward_select: group " + to_string(key) + " row mismatch");
            auto parts = chosen;
            parts.push_back(&g.matrix);
            const double score = cv_score(concat_matrices(parts, n), targets, folds, base);
            if (score < best) {
                best = score;
                best_key = &key;
                best_mat = &g.matrix;
            }
        }
        if (!best_key) break;
        if (!res.selected.empty() && current - best < min_improve) break;
        res.selected.push_back(*best_key);
        chosen.push_back(best_mat);
        res.cv_history.push_back(best);
        current = best;
    }
    res.final_cv = current;
    return res;
}

inline nlohmann::json to_json(const SelectionResult& r) {
    nlohmann::json sel = nlohmann::json::array();
    for (const auto& k : r.selected) sel.push_back({{"model_id", k.first}, {"layer_index", k.second}});
    return {{"selected", sel}, {"cv_history", r.cv_history}, {"final_cv", r.final_cv}};
}

inline SelectionResult selection_from_json(const nlohmann::json& j) {
    SelectionResult r;
    for (const auto& e : j.at("selected"))
        r.selected.emplace_back(e.at("model_id").get<std::string>(), e.at("layer_index").get<int>());
    r.cv_history = j.at("cv_history").get<std::vector<double>>();
    r.final_cv = j.at("final_cv").get<double>();
    return r;
}

} // namespace essaystack
