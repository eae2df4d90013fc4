#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "essaystack/base_models.hpp"
#include "essaystack/csv.hpp"
#include "essaystack/data_model.hpp"
#include "essaystack/gbdt.hpp"
#include "essaystack/metrics.hpp"
#include "essaystack/readability.hpp"

namespace essaystack {

/// Held-out predictions of one base model on one fold.
struct FoldPredictions {
    int fold = 0;
    std::vector<std::string> ids;
    Matrix predictions; // ids.size() x 6
};

struct BaseRun {
    std::string base_id;
    std::string config_hash;
    std::vector<FoldPredictions> folds;
};

/// Out-of-fold prediction matrix: rows follow `ids`, columns are (base, target)
/// pairs, base-major.
struct OofMatrix {
    std::vector<std::string> ids;
    Matrix values;
    std::vector<std::pair<std::string, int>> columns;
    std::vector<std::pair<std::string, std::string>> provenance; // (base_id, config hash)

    int num_bases() const { return static_cast<int>(columns.size()) / kNumTargets; }
};

inline OofMatrix build_oof(const std::vector<BaseRun>& runs, const FoldAssignment& folds,
                           const std::vector<std::string>& ids) {
    if (ids.size() != folds.fold.size()) throw DimensionError("build_oof: ids and fold assignment disagree");
    std::map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (!row_of.emplace(ids[i], i).second) throw ValidationError("build_oof: duplicate id " + ids[i]);

    OofMatrix out;
    out.ids = ids;
    out.values.resize(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(runs.size()) * kNumTargets);
    std::set<std::string> base_ids;
    for (std::size_t b = 0; b < runs.size(); ++b) {
        const auto& run = runs[b];
        if (!base_ids.insert(run.base_id).second) throw ValidationError("build_oof: duplicate base id " + run.base_id);
        for (int t = 0; t < kNumTargets; ++t) out.columns.emplace_back(run.base_id, t);
        out.provenance.emplace_back(run.base_id, run.config_hash);

        std::vector<bool> filled(ids.size(), false);
        std::set<int> seen_folds;
        for (const auto& fp : run.folds) {
            if (!seen_folds.insert(fp.fold).second)
                throw ValidationError("build_oof: base " + run.base_id + " has fold " + std::to_string(fp.fold) + " twice");
            if (fp.predictions.rows() != static_cast<Eigen::Index>(fp.ids.size()) || fp.predictions.cols() != kNumTargets)
                throw DimensionError("build_oof: base " + run.base_id + " fold " + std::to_string(fp.fold) +
                                     " prediction shape mismatch");
            for (std::size_t r = 0; r < fp.ids.size(); ++r) {
                auto it = row_of.find(fp.ids[r]);
                if (it == row_of.end()) throw ValidationError("build_oof: unknown id " + fp.ids[r]);
                const std::size_t i = it->second;
                if (folds.fold[i] != fp.fold)
                    throw ValidationError("build_oof: id " + fp.ids[r] + " is not in fold " + std::to_string(fp.fold));
                if (filled[i]) throw ValidationError("build_oof: duplicate id " + fp.ids[r] + " for base " + run.base_id);
                if (!fp.predictions.row(static_cast<Eigen::Index>(r)).allFinite())
                    throw ValidationError("build_oof: non-finite prediction for " + fp.ids[r]);
                filled[i] = true;
                out.values.block(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b) * kNumTargets, 1, kNumTargets) =
                    fp.predictions.row(static_cast<Eigen::Index>(r));
            }
        }
        for (int f = 0; f < folds.k; ++f)
            if (!seen_folds.count(f))
                throw ValidationError("build_oof: missing (base " + run.base_id + ", fold " + std::to_string(f) + ")");
        for (std::size_t i = 0; i < ids.size(); ++i)
            if (!filled[i]) throw ValidationError("build_oof: base " + run.base_id + " has no prediction for " + ids[i]);
    }
    return out;
}

// --- stackers -----------------------------------------------------------------

using RidgeStack = std::vector<LinearModel>; // one per target, inputs = all OOF columns
using GbdtStack = std::vector<GbdtModel>;    // one per target, inputs = [OOF | readability]

inline RidgeStack fit_stack_ridge(const Matrix& p, const Matrix& y, double lambda) {
    if (p.rows() != y.rows()) throw DimensionError("fit_stack_ridge: row mismatch");
    RidgeStack s;
    for (int t = 0; t < kNumTargets; ++t) s.push_back(fit_ridge(p, y.col(t), RidgeConfig{lambda}));
    return s;
}

inline Matrix predict_stack_ridge(const RidgeStack& s, const Matrix& p) {
    Matrix out(p.rows(), kNumTargets);
    for (int t = 0; t < kNumTargets; ++t) out.col(t) = predict_linear(s[static_cast<std::size_t>(t)], p);
    return out;
}

inline Matrix hconcat(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows())
        throw DimensionError("row mismatch: " + std::to_string(a.rows()) + " vs " + std::to_string(b.rows()));
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a, b;
    return out;
}

inline GbdtStack fit_stack_gbdt(const Matrix& p, const Matrix& meta, const Matrix& y, const GbdtParams& params) {
    if (p.rows() != meta.rows()) throw DimensionError("fit_stack_gbdt: OOF and meta-feature rows differ");
    if (p.rows() != y.rows()) throw DimensionError("fit_stack_gbdt: target rows differ");
    const Matrix x = hconcat(p, meta);
    GbdtStack s;
    for (int t = 0; t < kNumTargets; ++t) s.push_back(fit_gbdt(x, y.col(t), params));
    return s;
}

inline Matrix predict_stack_gbdt(const GbdtStack& s, const Matrix& p, const Matrix& meta) {
    const Matrix x = hconcat(p, meta);
    Matrix out(x.rows(), kNumTargets);
    for (int t = 0; t < kNumTargets; ++t) out.col(t) = predict_gbdt(s[static_cast<std::size_t>(t)], x);
    return out;
}

struct StackSettings {
    double ridge_lambda = 1.0;
    GbdtParams gbdt;
};

/// Out-of-fold predictions of both stackers, refitting them per fold on the
/// other folds' OOF rows. Returned in blend order: {ridge, gbdt}.
inline std::vector<Matrix> stacker_oof(const Matrix& p, const Matrix& meta, const Matrix& y,
                                       const FoldAssignment& folds, const StackSettings& cfg) {
    Matrix ridge(p.rows(), kNumTargets), gbdt(p.rows(), kNumTargets);
    for (int f = 0; f < folds.k; ++f) {
        const auto train = folds.complement(f);
        const auto held = folds.members(f);
        if (held.empty()) continue;
        const RidgeStack rs = fit_stack_ridge(take_rows(p, train), take_rows(y, train), cfg.ridge_lambda);
        const GbdtStack gs = fit_stack_gbdt(take_rows(p, train), take_rows(meta, train), take_rows(y, train), cfg.gbdt);
        const Matrix rp = predict_stack_ridge(rs, take_rows(p, held));
        const Matrix gp = predict_stack_gbdt(gs, take_rows(p, held), take_rows(meta, held));
        for (std::size_t r = 0; r < held.size(); ++r) {
            ridge.row(static_cast<Eigen::Index>(held[r])) = rp.row(static_cast<Eigen::Index>(r));
            gbdt.row(static_cast<Eigen::Index>(held[r])) = gp.row(static_cast<Eigen::Index>(r));
        }
    }
    return {ridge, gbdt};
}

// --- blending -----------------------------------------------------------------

struct EnsembleWeights {
    std::vector<double> w;
};

/// Convex combination of stacker outputs, clamped to [1,5].
inline Matrix blend(const std::vector<Matrix>& preds, const EnsembleWeights& weights) {
    if (preds.empty() || preds.size() != weights.w.size()) throw DimensionError("blend: weights/stackers mismatch");
    Matrix out = Matrix::Zero(preds[0].rows(), preds[0].cols());
    for (std::size_t s = 0; s < preds.size(); ++s) {
        if (preds[s].rows() != out.rows() || preds[s].cols() != out.cols()) throw DimensionError("blend: shape mismatch");
        out += weights.w[s] * preds[s];
    }
    return clamp_scores(out);
}

/// Simplex-constrained weights minimizing blended MCRMSE. Starts from uniform and
/// moves mass in steps of 0.01 between pairs of stackers while that strictly
/// lowers the score; a single-stacker vertex replaces the result only if it is
/// strictly better.
inline EnsembleWeights optimize_weights(const std::vector<Matrix>& preds, const Matrix& y) {
    if (preds.empty()) throw ValidationError("optimize_weights: need at least one stacker");
    const std::size_t S = preds.size();
    EnsembleWeights cur{std::vector<double>(S, 1.0 / static_cast<double>(S))};
    if (S == 1) return cur;
    constexpr double kStep = 0.01;
    double score = mcrmse(y, blend(preds, cur));
    for (int sweep = 0; sweep < 100000; ++sweep) {
        bool improved = false;
        for (std::size_t to = 0; to < S; ++to) {
            for (std::size_t from = 0; from < S; ++from) {
                if (to == from || cur.w[from] <= 0.0) continue;
                EnsembleWeights cand = cur;
                const double delta = std::min(kStep, cand.w[from]);
                cand.w[from] -= delta;
                cand.w[to] += delta;
                if (cand.w[from] < 1e-15) cand.w[from] = 0.0;
                const double s = mcrmse(y, blend(preds, cand));
                if (s < score) {
                    cur = std::move(cand);
                    score = s;
                    improved = true;
                }
            }
        }
        if (!improved) break;
    }
    // Renormalize away accumulated rounding.
    double total = 0.0;
    for (double v : cur.w) total += v;
    for (double& v : cur.w) v /= total;
    for (std::size_t s = 0; s < S; ++s) {
        EnsembleWeights vertex{std::vector<double>(S, 0.0)};
        vertex.w[s] = 1.0;
        const double vs = mcrmse(y, blend(preds, vertex));
        if (vs < score) {
            cur = vertex;
            score = vs;
        }
    }
    return cur;
}

// --- persisted ensemble ---------------------------------------------------------

inline constexpr int kBundleFormatVersion = 1;

struct BundledBase {
    std::string id;
    std::vector<GroupKey> groups;
    BaseModelConfig config;
    FittedBase model;
};

struct EnsembleBundle {
    std::string config_hash;
    std::vector<BundledBase> bases;
    RidgeStack ridge;
    GbdtStack gbdt;
    EnsembleWeights weights; // {ridge, gbdt}
};

inline nlohmann::json groups_to_json(const std::vector<GroupKey>& keys) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& k : keys) a.push_back({{"model_id", k.first}, {"layer_index", k.second}});
    return a;
}

inline std::vector<GroupKey> groups_from_json(const nlohmann::json& a) {
    std::vector<GroupKey> out;
    for (const auto& e : a) out.emplace_back(e.at("model_id").get<std::string>(), e.at("layer_index").get<int>());
    return out;
}

inline nlohmann::json read_json_file(const std::string& path) {
    try {
        return nlohmann::json::parse(csv::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) { csv::write_file(path, j.dump(1) + "\n"); }

inline void save_bundle(const EnsembleBundle& b, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest = {{"format_version", kBundleFormatVersion},
                               {"config_hash", b.config_hash},
                               {"readability_version", kReadabilityVersion},
                               {"stackers", {"ridge", "gbdt"}}};
    nlohmann::json bases = nlohmann::json::array();
    for (const auto& base : b.bases) {
        const std::string file = "base_" + base.id + ".json";
        write_json_file((fs::path(dir) / file).string(),
                        {{"format_version", kBundleFormatVersion},
                         {"config_hash", b.config_hash},
                         {"id", base.id},
                         {"config", to_json(base.config)},
                         {"groups", groups_to_json(base.groups)},
                         {"model", to_json(base.model)}});
        bases.push_back({{"id", base.id}, {"file", file}});
    }
    manifest["bases"] = bases;
    nlohmann::json ridge = nlohmann::json::array();
    for (const auto& m : b.ridge) ridge.push_back(to_json(m));
    write_json_file((fs::path(dir) / "stack_ridge.json").string(),
                    {{"format_version", kBundleFormatVersion}, {"config_hash", b.config_hash}, {"targets", ridge}});
    nlohmann::json gbdt = nlohmann::json::array();
    for (const auto& m : b.gbdt) gbdt.push_back(to_json(m));
    write_json_file((fs::path(dir) / "stack_gbdt.json").string(),
                    {{"format_version", kBundleFormatVersion}, {"config_hash", b.config_hash}, {"targets", gbdt}});
    write_json_file((fs::path(dir) / "weights.json").string(),
                    {{"format_version", kBundleFormatVersion},
                     {"config_hash", b.config_hash},
                     {"stackers", {"ridge", "gbdt"}},
                     {"weights", b.weights.w}});
    write_json_file((fs::path(dir) / "manifest.json").string(), manifest);
}

inline void check_version(const nlohmann::json& j, const std::string& what) {
    if (!j.contains("format_version") || j.at("format_version").get<int>() != kBundleFormatVersion)
        throw VersionError(what + ": unsupported artifact format version");
}

inline EnsembleBundle load_bundle(const std::string& dir) {
    namespace fs = std::filesystem;
    const auto manifest = read_json_file((fs::path(dir) / "manifest.json").string());
    check_version(manifest, "bundle manifest");
    if (manifest.value("readability_version", -1) != kReadabilityVersion)
        throw VersionError("bundle manifest: readability feature set version mismatch");
    EnsembleBundle b;
    b.config_hash = manifest.at("config_hash").get<std::string>();
    auto same_run = [&](const nlohmann::json& j, const std::string& what) {
        check_version(j, what);
        if (j.at("config_hash").get<std::string>() != b.config_hash)
            throw VersionError(what + ": produced by a different configuration than the bundle manifest");
    };
    for (const auto& e : manifest.at("bases")) {
        const std::string file = e.at("file").get<std::string>();
        const auto j = read_json_file((fs::path(dir) / file).string());
        same_run(j, file);
        BundledBase base;
        base.id = j.at("id").get<std::string>();
        base.groups = groups_from_json(j.at("groups"));
        base.config = base_config_from_json(j.at("config"));
        base.model = fitted_base_from_json(j.at("model"));
        b.bases.push_back(std::move(base));
    }
    const auto ridge = read_json_file((fs::path(dir) / "stack_ridge.json").string());
    same_run(ridge, "stack_ridge.json");
    for (const auto& m : ridge.at("targets")) b.ridge.push_back(linear_from_json(m));
    const auto gbdt = read_json_file((fs::path(dir) / "stack_gbdt.json").string());
    same_run(gbdt, "stack_gbdt.json");
    for (const auto& m : gbdt.at("targets")) b.gbdt.push_back(gbdt_from_json(m));
    const auto weights = read_json_file((fs::path(dir) / "weights.json").string());
    same_run(weights, "weights.json");
    b.weights.w = weights.at("weights").get<std::vector<double>>();
    if (b.ridge.size() != kNumTargets || b.gbdt.size() != kNumTargets || b.weights.w.size() != 2)
        throw ParseError("bundle: expected 6 ridge stackers, 6 gbdt stackers and 2 weights");
    double total = 0.0;
    for (double w : b.weights.w) {
        if (!(w >= 0.0)) throw ValidationError("bundle: negative blend weight");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ValidationError("bundle: blend weights do not sum to 1");
    return b;
}

/// Base-model predictions on a dataset laid out like an OofMatrix (base-major).
inline Matrix base_prediction_matrix(const EnsembleBundle& b, const Dataset& ds) {
    Matrix p(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(b.bases.size()) * kNumTargets);
    for (std::size_t i = 0; i < b.bases.size(); ++i) {
        const auto& base = b.bases[i];
        const Matrix x = concat_groups(ds, base.groups);
        p.middleCols(static_cast<Eigen::Index>(i) * kNumTargets, kNumTargets) = predict_base(base.model, x);
    }
    return p;
}

inline std::vector<std::string> texts_of(const Dataset& ds) {
    std::vector<std::string> out;
    for (const auto& r : ds.records) out.push_back(r.full_text);
    return out;
}

/// Unblended stacker outputs {ridge, gbdt} for a new dataset.
inline std::vector<Matrix> stacker_outputs(const EnsembleBundle& b, const Dataset& ds) {
    const Matrix p = base_prediction_matrix(b, ds);
    const Matrix meta = readability_matrix(texts_of(ds));
    return {predict_stack_ridge(b.ridge, p), predict_stack_gbdt(b.gbdt, p, meta)};
}

/// Bases -> stackers -> convex blend -> clamp to [1,5].
inline Matrix ensemble_predict(const EnsembleBundle& b, const Dataset& ds) { return blend(stacker_outputs(b, ds), b.weights); }

inline std::string format_predictions(const std::vector<std::string>& ids, const Matrix& preds) {
    std::string out = "text_id";
    for (auto name : kTargetNames) out += "," + std::string(name);
    out += '\n';
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out += csv::escape(ids[i]);
        for (int t = 0; t < kNumTargets; ++t) out += "," + csv::format_double(preds(static_cast<Eigen::Index>(i), t));
        out += '\n';
    }
    return out;
}

} // namespace essaystack
