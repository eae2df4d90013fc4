#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "essaystack/pooling_head.hpp"
#include "essaystack/stacking.hpp"

namespace essaystack {

/// Unlabeled essays with ensemble-generated soft targets in [1,5].
struct PseudoLabelSet {
    std::vector<std::string> ids;
    Matrix soft_targets; // ids.size() x 6
    std::string source;  // fingerprint of the generating ensemble

    std::size_t size() const { return ids.size(); }
};

/// Labeled rows for head training.
struct LabeledSet {
    std::vector<std::string> ids;
    Matrix features;
    Matrix scores; // n x 6
};

enum class PseudoMode { pretrain_finetune, concat };

inline PseudoMode pseudo_mode_from_string(const std::string& s) {
    if (s == "pretrain-finetune") return PseudoMode::pretrain_finetune;
    if (s == "concat") return PseudoMode::concat;
    throw ValidationError("unknown pseudo-label mode '" + s + "' (expected pretrain-finetune or concat)");
}

inline std::string bundle_fingerprint(const EnsembleBundle& b) {
    std::uint64_t h = fnv1a64(b.config_hash);
    for (const auto& base : b.bases) h = fnv1a64(to_json(base.model).dump(), h);
    for (const auto& m : b.ridge) h = fnv1a64(to_json(m).dump(), h);
    for (const auto& m : b.gbdt) h = fnv1a64(to_json(m).dump(), h);
    h = fnv1a64(nlohmann::json(b.weights.w).dump(), h);
    return hex64(h);
}

inline void require_disjoint(const std::vector<std::string>& pseudo_ids, const std::vector<std::string>& gold_ids) {
    const std::set<std::string> gold(gold_ids.begin(), gold_ids.end());
    for (const auto& id : pseudo_ids)
        if (gold.count(id)) throw ValidationError("pseudo-label id '" + id + "' collides with the gold set");
}

/// Soft targets are the ensemble's clamped predictions on the unlabeled pool.
inline PseudoLabelSet generate_pseudo_labels(const EnsembleBundle& bundle, const Dataset& unlabeled,
                                             const std::vector<std::string>& gold_ids) {
    PseudoLabelSet set;
    set.ids = unlabeled.ids();
    require_disjoint(set.ids, gold_ids);
    set.soft_targets = ensemble_predict(bundle, unlabeled);
    set.source = bundle_fingerprint(bundle);
    return set;
}

namespace detail {
inline void check_pseudo_inputs(const Matrix& pseudo_features, const PseudoLabelSet& pseudo, const LabeledSet& gold) {
    require_disjoint(pseudo.ids, gold.ids);
    if (pseudo_features.rows() != static_cast<Eigen::Index>(pseudo.size()) ||
        pseudo.soft_targets.rows() != static_cast<Eigen::Index>(pseudo.size()))
        throw DimensionError("pseudo-label set: features/targets do not match ids");
    if (pseudo.size() > 0 && pseudo_features.cols() != gold.features.cols())
        throw DimensionError("pseudo-label set: feature dimension differs from gold");
    if (gold.features.rows() < 1) throw DimensionError("gold set is empty");
    if (!pseudo.soft_targets.allFinite() || (pseudo.size() > 0 && (pseudo.soft_targets.minCoeff() < kScoreMin ||
                                                                    pseudo.soft_targets.maxCoeff() > kScoreMax)))
        throw ValidationError("pseudo-label set: soft targets must be finite and within [1,5]");
}
} // namespace detail

/// Phase 1 trains on pseudo rows only; phase 2 continues from those parameters on
/// gold rows only. An empty pseudo set skips phase 1.
inline HeadModel train_pretrain_finetune(const Matrix& pseudo_features, const PseudoLabelSet& pseudo,
                                         const LabeledSet& gold, const HeadTrainConfig& pretrain,
                                         const HeadTrainConfig& finetune) {
    detail::check_pseudo_inputs(pseudo_features, pseudo, gold);
    if (pseudo.size() == 0) return train_head(gold.features, gold.scores, finetune);
    const HeadModel warm = train_head(pseudo_features, pseudo.soft_targets, pretrain);
    return train_head(gold.features, gold.scores, finetune, warm);
}

/// One run over gold rows followed by pseudo rows, all weighted 1.
inline HeadModel train_concat(const Matrix& pseudo_features, const PseudoLabelSet& pseudo, const LabeledSet& gold,
                              const HeadTrainConfig& cfg) {
    detail::check_pseudo_inputs(pseudo_features, pseudo, gold);
    if (pseudo.size() == 0) return train_head(gold.features, gold.scores, cfg);
    Matrix x(gold.features.rows() + pseudo_features.rows(), gold.features.cols());
    x << gold.features, pseudo_features;
    Matrix y(x.rows(), kNumTargets);
    y << gold.scores, pseudo.soft_targets;
    return train_head(x, y, cfg);
}

inline constexpr int kPseudoFormatVersion = 1;

/// Writes `<path>` (CSV) and `<path>.meta.json` (provenance sidecar).
inline void save_pseudo_labels(const PseudoLabelSet& set, const std::string& path) {
    csv::write_file(path, format_predictions(set.ids, set.soft_targets));
    write_json_file(path + ".meta.json",
                    {{"format_version", kPseudoFormatVersion}, {"source", set.source}, {"count", set.size()}});
}

inline PseudoLabelSet load_pseudo_labels(const std::string& path) {
    const auto meta = read_json_file(path + ".meta.json");
    if (meta.value("format_version", -1) != kPseudoFormatVersion)
        throw VersionError(path + ".meta.json: unsupported format version");
    const auto rows = csv::parse_file(path);
    if (rows.empty()) throw ParseError(path + ": missing header");
    PseudoLabelSet set;
    set.source = meta.at("source").get<std::string>();
    set.soft_targets.resize(static_cast<Eigen::Index>(rows.size() - 1), kNumTargets);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r].fields;
        if (f.size() != 1 + kNumTargets) throw ParseError(path + ": line " + std::to_string(rows[r].line) + ": bad field count");
        set.ids.push_back(f[0]);
        for (int t = 0; t < kNumTargets; ++t) {
            double v = 0;
            if (!csv::parse_double(f[1 + static_cast<std::size_t>(t)], v))
                throw ParseError(path + ": line " + std::to_string(rows[r].line) + ": bad number");
            set.soft_targets(static_cast<Eigen::Index>(r - 1), t) = v;
        }
    }
    if (meta.at("count").get<std::size_t>() != set.size()) throw ValidationError(path + ": row count disagrees with sidecar");
    return set;
}

} // namespace essaystack
