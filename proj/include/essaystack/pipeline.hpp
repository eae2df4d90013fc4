#pragma once

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "essaystack/base_models.hpp"
#include "essaystack/data_model.hpp"
#include "essaystack/feature_selection.hpp"
#include "essaystack/metrics.hpp"
#include "essaystack/pseudo_label.hpp"
#include "essaystack/readability.hpp"
#include "essaystack/stacking.hpp"
#include "essaystack/stratified_kfold.hpp"

namespace essaystack::pipeline {

namespace fs = std::filesystem;

inline constexpr int kArtifactVersion = 1;

/// Which feature groups a model consumes.
struct GroupSpec {
    enum class Kind { selected, all, list } kind = Kind::selected;
    std::vector<GroupKey> keys;
};

struct BaseSpec {
    std::string id;
    BaseModelConfig model;
    GroupSpec groups;
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    std::string out;
    std::string essays;
    std::string manifest;
    std::string unlabeled_essays;   // optional
    std::string unlabeled_manifest; // optional
    int k = 5;
    BaseModelConfig selection_base;
    int max_groups = 4;
    double min_improve = 1e-4;
    std::vector<BaseSpec> bases;
    StackSettings stack;
    GroupSpec pseudo_groups;
    HeadTrainConfig pretrain, finetune, concat;
    std::string hash; // fingerprint of every setting that affects artifacts
};

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

// --- configuration ------------------------------------------------------------

namespace detail {

inline GroupSpec parse_groups(const nlohmann::json& j, const std::string& where, std::vector<std::string>& problems) {
    GroupSpec g;
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "selected") g.kind = GroupSpec::Kind::selected;
        else if (s == "all") g.kind = GroupSpec::Kind::all;
        else problems.push_back(where + ": groups must be \"selected\", \"all\" or a list");
        return g;
    }
    if (!j.is_array() || j.empty()) {
        problems.push_back(where + ": groups must be \"selected\", \"all\" or a non-empty list");
        return g;
    }
    g.kind = GroupSpec::Kind::list;
    for (const auto& e : j) {
        if (!e.is_object() || !e.contains("model_id") || !e.contains("layer_index")) {
            problems.push_back(where + ": each group needs model_id and layer_index");
            continue;
        }
        g.keys.emplace_back(e.at("model_id").get<std::string>(), e.at("layer_index").get<int>());
    }
    return g;
}

inline HeadTrainConfig parse_head(const nlohmann::json& j, const std::string& where, std::vector<std::string>& problems,
                                  int default_epochs = 200) {
    HeadTrainConfig c;
    c.learning_rate = j.value("learning_rate", 0.5);
    c.epochs = j.value("epochs", default_epochs);
    c.batch_size = j.value("batch_size", 32);
    c.l2 = j.value("l2", 0.0);
    if (!(c.learning_rate > 0) || c.epochs < 1 || c.batch_size < 1 || !(c.l2 >= 0))
        problems.push_back(where + ": needs learning_rate > 0, epochs >= 1, batch_size >= 1, l2 >= 0");
    return c;
}

inline bool safe_id(const std::string& id) {
    if (id.empty()) return false;
    for (char c : id)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
    return id != "." && id != "..";
}

} // namespace detail

/// Parses and validates a config. All problems are collected and reported together.
inline PipelineConfig parse_config(const nlohmann::json& j, const fs::path& base_dir, const Overrides& ov = {}) {
    std::vector<std::string> problems;
    PipelineConfig c;
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? p : (base_dir / p).lexically_normal().string(); };
    auto get_path = [&](const char* key, bool required, bool check_exists) -> std::string {
        if (!j.contains(key)) {
            if (required) problems.push_back(std::string("missing required key '") + key + "'");
            return {};
        }
        if (!j.at(key).is_string()) {
            problems.push_back(std::string("'") + key + "' must be a string path");
            return {};
        }
        const auto p = resolve(j.at(key).get<std::string>());
        if (check_exists && !fs::exists(p)) problems.push_back(std::string("'") + key + "' does not exist: " + p);
        return p;
    };

    if (!j.is_object()) throw ValidationError("config: top level must be an object");
    if (ov.seed) {
        c.seed = *ov.seed;
    } else if (!j.contains("seed") || !j.at("seed").is_number_unsigned()) {
        problems.push_back("missing required key 'seed' (non-negative integer)");
    } else {
        c.seed = j.at("seed").get<std::uint64_t>();
    }
    if (ov.out) c.out = *ov.out;
    else if (j.contains("out") && j.at("out").is_string()) c.out = resolve(j.at("out").get<std::string>());
    else problems.push_back("missing required key 'out' (or pass --out)");

    c.essays = get_path("essays", true, true);
    c.manifest = get_path("manifest", true, true);
    c.unlabeled_essays = get_path("unlabeled_essays", false, true);
    c.unlabeled_manifest = get_path("unlabeled_manifest", false, true);
    if (c.unlabeled_essays.empty() != c.unlabeled_manifest.empty())
        problems.push_back("'unlabeled_essays' and 'unlabeled_manifest' must be given together");

    c.k = j.value("k", 5);
    if (c.k < 2) problems.push_back("'k' must be >= 2");

    const auto sel = j.value("selection", nlohmann::json::object());
    c.selection_base = base_config_from_json(sel.value("base", nlohmann::json{{"kind", "svr"}}), &problems, "selection.base");
    c.max_groups = sel.value("max_groups", 4);
    c.min_improve = sel.value("min_improve", 1e-4);
    if (c.max_groups < 1) problems.push_back("selection.max_groups must be >= 1");
    if (!(c.min_improve >= 0)) problems.push_back("selection.min_improve must be >= 0");

    std::set<std::string> ids;
    if (!j.contains("bases") || !j.at("bases").is_array() || j.at("bases").empty()) {
        problems.push_back("'bases' must be a non-empty list");
    } else {
        for (std::size_t i = 0; i < j.at("bases").size(); ++i) {
            const auto& b = j.at("bases")[i];
            const std::string where = "bases[" + std::to_string(i) + "]";
            BaseSpec spec;
            spec.id = b.value("id", std::string());
            if (!detail::safe_id(spec.id)) problems.push_back(where + ": 'id' must be non-empty [A-Za-z0-9_.-]");
            else if (!ids.insert(spec.id).second) problems.push_back(where + ": duplicate id '" + spec.id + "'");
            spec.model = base_config_from_json(b, &problems, where);
            spec.model.head.seed = derive_seed(c.seed, "head/" + spec.id);
            spec.groups = detail::parse_groups(b.value("groups", nlohmann::json("selected")), where, problems);
            c.bases.push_back(std::move(spec));
        }
    }

    const auto st = j.value("stack", nlohmann::json::object());
    c.stack.ridge_lambda = st.value("ridge_lambda", 1.0);
    if (!(c.stack.ridge_lambda > 0)) problems.push_back("stack.ridge_lambda must be > 0");
    auto gj = st.value("gbdt", nlohmann::json::object());
    if (!gj.contains("min_samples_leaf")) gj["min_samples_leaf"] = 5;
    c.stack.gbdt = gbdt_params_from_json(gj);
    c.stack.gbdt.seed = derive_seed(c.seed, "gbdt");
    if (c.stack.gbdt.num_rounds < 1 || c.stack.gbdt.max_depth < 1 || c.stack.gbdt.max_depth > 24 ||
        c.stack.gbdt.min_samples_leaf < 1 || !(c.stack.gbdt.learning_rate > 0 && c.stack.gbdt.learning_rate <= 1))
        problems.push_back("stack.gbdt: needs num_rounds >= 1, 1 <= max_depth <= 24, min_samples_leaf >= 1, 0 < learning_rate <= 1");

    const auto ps = j.value("pseudo", nlohmann::json::object());
    c.pseudo_groups = detail::parse_groups(ps.value("groups", nlohmann::json("selected")), "pseudo", problems);
    c.pretrain = detail::parse_head(ps.value("pretrain", nlohmann::json::object()), "pseudo.pretrain", problems);
    // fine-tuning is a short continuation; a full-length run washes out the pretrained start
    c.finetune = detail::parse_head(ps.value("finetune", nlohmann::json::object()), "pseudo.finetune", problems, 50);
    c.concat = detail::parse_head(ps.value("concat", nlohmann::json::object()), "pseudo.concat", problems);
    c.pretrain.seed = derive_seed(c.seed, "pseudo/pretrain");
    c.finetune.seed = derive_seed(c.seed, "pseudo/finetune");
    c.concat.seed = derive_seed(c.seed, "pseudo/concat");

    if (!problems.empty()) {
        std::string msg = "invalid config (" + std::to_string(problems.size()) + " problem" +
                          (problems.size() > 1 ? "s" : "") + "): ";
        for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? "; " : "") + problems[i];
        throw ValidationError(msg);
    }

    nlohmann::json canonical = j;
    canonical.erase("out");
    canonical["seed"] = c.seed;
    c.hash = hex64(fnv1a64(canonical.dump()));
    return c;
}

inline PipelineConfig load_config(const std::string& path, const Overrides& ov = {}) {
    const auto j = read_json_file(path);
    return parse_config(j, fs::absolute(path).parent_path(), ov);
}

// --- output directory -----------------------------------------------------------

/// Exclusive lock on an output directory for the lifetime of a command.
class OutputLock {
public:
    explicit OutputLock(const std::string& dir) : path_((fs::path(dir) / ".lock").string()) {
        fs::create_directories(dir);
        const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0) throw IoError("output directory is locked by another run: " + path_);
        ::close(fd);
    }
    ~OutputLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    std::string path_;
};

inline nlohmann::json stamp(const PipelineConfig& c) {
    return {{"format_version", kArtifactVersion}, {"config_hash", c.hash}};
}

/// Fails unless an artifact header matches this config.
inline void check_stamp(const nlohmann::json& j, const PipelineConfig& c, const std::string& what) {
    if (j.value("format_version", -1) != kArtifactVersion) throw VersionError(what + ": unsupported format version");
    if (j.value("config_hash", std::string()) != c.hash)
        throw VersionError(what + ": produced by a different configuration (re-run the upstream command)");
}

inline std::string out_path(const PipelineConfig& c, const std::string& rel) { return (fs::path(c.out) / rel).string(); }

// --- shared loading ---------------------------------------------------------------

inline Dataset load_gold(const PipelineConfig& c) { return load_dataset(c.essays, c.manifest, true); }

inline FoldAssignment load_run_folds(const PipelineConfig& c, const Dataset& ds) {
    const auto meta_path = out_path(c, "folds.meta.json");
    if (!fs::exists(meta_path)) throw ValidationError("no fold assignment in " + c.out + " (run `folds` first)");
    check_stamp(read_json_file(meta_path), c, "folds.meta.json");
    return load_folds(out_path(c, "folds.csv"), ds.ids());
}

inline std::vector<GroupKey> resolve_groups(const PipelineConfig& c, const GroupSpec& g, const Dataset& ds) {
    switch (g.kind) {
    case GroupSpec::Kind::all: return ds.group_keys();
    case GroupSpec::Kind::list:
        for (const auto& k : g.keys) (void)ds.group(k);
        return g.keys;
    case GroupSpec::Kind::selected: {
        const auto path = out_path(c, "selection.json");
        if (!fs::exists(path)) throw ValidationError("groups=\"selected\" needs " + path + " (run `select` first)");
        const auto j = read_json_file(path);
        check_stamp(j, c, "selection.json");
        return selection_from_json(j.at("result")).selected;
    }
    }
    return {};
}

// --- commands -------------------------------------------------------------------

inline void cmd_folds(const PipelineConfig& c) {
    OutputLock lock(c.out);
    const auto records = load_essays(c.essays, true);
    const Matrix y = targets_matrix(records);
    const auto folds = assign_folds(bin_targets(y), c.k, derive_seed(c.seed, "folds"));
    std::vector<std::string> ids;
    for (const auto& r : records) ids.push_back(r.id);
    csv::write_file(out_path(c, "folds.csv"), format_folds(ids, folds));
    auto meta = stamp(c);
    meta["k"] = c.k;
    write_json_file(out_path(c, "folds.meta.json"), meta);
}

inline SelectionResult cmd_select(const PipelineConfig& c, std::ostream* log = nullptr) {
    OutputLock lock(c.out);
    const Dataset ds = load_gold(c);
    const auto folds = load_run_folds(c, ds);
    const auto res = forward_select(ds.groups, targets_matrix(ds.records), folds, c.selection_base, c.max_groups,
                                    c.min_improve);
    auto j = stamp(c);
    j["base"] = to_json(c.selection_base);
    j["result"] = to_json(res);
    write_json_file(out_path(c, "selection.json"), j);
    if (log) {
        *log << "step  group                cv_mcrmse\n";
        for (std::size_t s = 0; s < res.selected.size(); ++s) {
            char line[128];
            std::snprintf(line, sizeof(line), "%4zu  %-20s %.6f\n", s + 1, to_string(res.selected[s]).c_str(),
                          res.cv_history[s]);
            *log << line;
        }
    }
    return res;
}

inline std::string format_oof(const std::vector<std::string>& ids, const FoldAssignment& folds, const Matrix& oof) {
    std::string out = "text_id,fold";
    for (auto name : kTargetNames) out += "," + std::string(name);
    out += '\n';
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out += csv::escape(ids[i]) + "," + std::to_string(folds.fold[i]);
        for (int t = 0; t < kNumTargets; ++t) out += "," + csv::format_double(oof(static_cast<Eigen::Index>(i), t));
        out += '\n';
    }
    return out;
}

inline BaseRun load_base_run(const std::string& path, const std::string& base_id, const std::string& hash) {
    const auto rows = csv::parse_file(path);
    BaseRun run;
    run.base_id = base_id;
    run.config_hash = hash;
    std::map<int, std::vector<std::pair<std::string, std::vector<double>>>> by_fold;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r].fields;
        if (f.size() != 2 + kNumTargets) throw ParseError(path + ": line " + std::to_string(rows[r].line) + ": bad field count");
        double fold = 0;
        std::vector<double> v(kNumTargets);
        bool ok = csv::parse_double(f[1], fold);
        for (int t = 0; t < kNumTargets; ++t) ok = ok && csv::parse_double(f[2 + static_cast<std::size_t>(t)], v[static_cast<std::size_t>(t)]);
        if (!ok) throw ParseError(path + ": line " + std::to_string(rows[r].line) + ": bad number");
        by_fold[static_cast<int>(fold)].emplace_back(f[0], std::move(v));
    }
    for (auto& [fold, entries] : by_fold) {
        FoldPredictions fp;
        fp.fold = fold;
        fp.predictions.resize(static_cast<Eigen::Index>(entries.size()), kNumTargets);
        for (std::size_t i = 0; i < entries.size(); ++i) {
            fp.ids.push_back(entries[i].first);
            for (int t = 0; t < kNumTargets; ++t)
                fp.predictions(static_cast<Eigen::Index>(i), t) = entries[i].second[static_cast<std::size_t>(t)];
        }
        run.folds.push_back(std::move(fp));
    }
    return run;
}

/// For every configured base: out-of-fold predictions and a final fit on all rows.
inline void cmd_train_base(const PipelineConfig& c) {
    OutputLock lock(c.out);
    const Dataset ds = load_gold(c);
    const auto folds = load_run_folds(c, ds);
    const Matrix y = targets_matrix(ds.records);
    for (const auto& spec : c.bases) {
        const auto keys = resolve_groups(c, spec.groups, ds);
        const Matrix x = concat_groups(ds, keys);
        const Matrix oof = oof_predictions(x, y, folds, spec.model);
        const FittedBase final_model = fit_base(x, y, spec.model);
        const auto dir = out_path(c, "bases/" + spec.id);
        fs::create_directories(dir);
        csv::write_file((fs::path(dir) / "oof.csv").string(), format_oof(ds.ids(), folds, oof));
        auto j = stamp(c);
        j["id"] = spec.id;
        j["config"] = to_json(spec.model);
        j["groups"] = groups_to_json(keys);
        j["model"] = to_json(final_model);
        write_json_file((fs::path(dir) / "model.json").string(), j);
    }
}

struct StackInputs {
    Dataset ds;
    FoldAssignment folds;
    Matrix y;
    OofMatrix oof;
    Matrix meta;
    std::vector<BundledBase> bases;
};

inline StackInputs load_stack_inputs(const PipelineConfig& c) {
    StackInputs in;
    in.ds = load_gold(c);
    in.folds = load_run_folds(c, in.ds);
    in.y = targets_matrix(in.ds.records);
    std::vector<BaseRun> runs;
    for (const auto& spec : c.bases) {
        const auto dir = out_path(c, "bases/" + spec.id);
        if (!fs::exists(fs::path(dir) / "model.json"))
            throw ValidationError("base '" + spec.id + "' has no artifacts (run `train-base` first)");
        const auto j = read_json_file((fs::path(dir) / "model.json").string());
        check_stamp(j, c, "bases/" + spec.id + "/model.json");
        runs.push_back(load_base_run((fs::path(dir) / "oof.csv").string(), spec.id, hex64(fnv1a64(j.at("config").dump()))));
        in.bases.push_back({spec.id, groups_from_json(j.at("groups")), spec.model, fitted_base_from_json(j.at("model"))});
    }
    in.oof = build_oof(runs, in.folds, in.ds.ids());
    in.meta = readability_matrix(texts_of(in.ds));
    return in;
}

inline EnsembleBundle cmd_stack(const PipelineConfig& c) {
    OutputLock lock(c.out);
    StackInputs in = load_stack_inputs(c);
    const auto stacked = stacker_oof(in.oof.values, in.meta, in.y, in.folds, c.stack);
    EnsembleBundle b;
    b.config_hash = c.hash;
    b.weights = optimize_weights(stacked, in.y);
    b.ridge = fit_stack_ridge(in.oof.values, in.y, c.stack.ridge_lambda);
    b.gbdt = fit_stack_gbdt(in.oof.values, in.meta, in.y, c.stack.gbdt);
    b.bases = std::move(in.bases);
    save_bundle(b, out_path(c, "bundle"));

    const auto ids = in.ds.ids();
    csv::write_file(out_path(c, "meta_features.csv"), format_readability_csv(ids, in.meta));
    const Matrix blended = blend(stacked, b.weights);
    std::string s = "text_id";
    for (const char* name : {"ridge", "gbdt", "blend"})
        for (auto t : kTargetNames) s += "," + std::string(name) + "_" + std::string(t);
    s += '\n';
    for (std::size_t i = 0; i < ids.size(); ++i) {
        s += csv::escape(ids[i]);
        for (const Matrix* m : {&stacked[0], &stacked[1], &blended})
            for (int t = 0; t < kNumTargets; ++t) s += "," + csv::format_double((*m)(static_cast<Eigen::Index>(i), t));
        s += '\n';
    }
    csv::write_file(out_path(c, "stack_oof.csv"), s);
    return b;
}

struct ReportRow {
    std::string model;
    MetricsReport metrics;
};

inline std::string format_table(const std::vector<ReportRow>& rows) {
    std::string out = "| Model                          | RMSE     | F1-score |\n"
                      "|--------------------------------|----------|----------|\n";
    for (const auto& r : rows) {
        char line[160];
        std::snprintf(line, sizeof(line), "| %-30s | %.6f | %.6f |\n", r.model.c_str(), r.metrics.mcrmse, r.metrics.macro_f1);
        out += line;
    }
    return out;
}

/// Out-of-fold metrics for every base, both stackers and the blend; plus a
/// holdout evaluation of the bundle when a labeled holdout set is given.
inline std::vector<ReportRow> cmd_evaluate(const PipelineConfig& c, const std::string& holdout_essays = {},
                                           const std::string& holdout_manifest = {}, std::ostream* log = nullptr) {
    OutputLock lock(c.out);
    StackInputs in = load_stack_inputs(c);
    const EnsembleBundle bundle = load_bundle(out_path(c, "bundle"));
    if (bundle.config_hash != c.hash) throw VersionError("bundle: produced by a different configuration (re-run `stack`)");
    std::vector<ReportRow> rows;
    for (int b = 0; b < in.oof.num_bases(); ++b)
        rows.push_back({"oof/base:" + in.oof.columns[static_cast<std::size_t>(b * kNumTargets)].first,
                        evaluate(in.y, in.oof.values.middleCols(b * kNumTargets, kNumTargets))});
    const auto stacked = stacker_oof(in.oof.values, in.meta, in.y, in.folds, c.stack);
    rows.push_back({"oof/stack:ridge", evaluate(in.y, stacked[0])});
    rows.push_back({"oof/stack:gbdt", evaluate(in.y, stacked[1])});
    rows.push_back({"oof/blend", evaluate(in.y, blend(stacked, bundle.weights))});
    if (!holdout_essays.empty()) {
        const Dataset hold = load_dataset(holdout_essays, holdout_manifest, true);
        rows.push_back({"holdout/blend", evaluate(targets_matrix(hold.records), ensemble_predict(bundle, hold))});
    }
    auto j = stamp(c);
    j["weights"] = bundle.weights.w;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
        auto m = to_json(r.metrics);
        m["model"] = r.model;
        arr.push_back(m);
    }
    j["rows"] = arr;
    write_json_file(out_path(c, "report.json"), j);
    const auto table = format_table(rows);
    csv::write_file(out_path(c, "report.txt"), table);
    if (log) *log << table;
    return rows;
}

/// Scores new essays with a persisted bundle; writes <out_dir>/predictions.csv.
inline Matrix cmd_predict(const std::string& bundle_dir, const std::string& essays, const std::string& manifest,
                          const std::string& out_dir) {
    OutputLock lock(out_dir);
    const EnsembleBundle bundle = load_bundle(bundle_dir);
    const Dataset ds = load_dataset(essays, manifest, false);
    const Matrix preds = ensemble_predict(bundle, ds);
    csv::write_file((fs::path(out_dir) / "predictions.csv").string(), format_predictions(ds.ids(), preds));
    write_json_file((fs::path(out_dir) / "predictions.meta.json"),
                    {{"format_version", kArtifactVersion}, {"bundle", bundle_fingerprint(bundle)}, {"config_hash", bundle.config_hash}});
    return preds;
}

inline HeadModel cmd_pseudo(const PipelineConfig& c, PseudoMode mode) {
    OutputLock lock(c.out);
    if (c.unlabeled_essays.empty()) throw ValidationError("pseudo: config needs 'unlabeled_essays' and 'unlabeled_manifest'");
    const Dataset gold_ds = load_gold(c);
    const Dataset pool = load_dataset(c.unlabeled_essays, c.unlabeled_manifest, false);
    const EnsembleBundle bundle = load_bundle(out_path(c, "bundle"));
    if (bundle.config_hash != c.hash) throw VersionError("bundle: produced by a different configuration (re-run `stack`)");

    const PseudoLabelSet pseudo = generate_pseudo_labels(bundle, pool, gold_ds.ids());
    const auto keys = resolve_groups(c, c.pseudo_groups, gold_ds);
    const Matrix gold_x = concat_groups(gold_ds, keys);
    const Standardizer stdz = Standardizer::fit(gold_x);
    LabeledSet gold{gold_ds.ids(), stdz.apply(gold_x), targets_matrix(gold_ds.records)};
    const Matrix pool_x = stdz.apply(concat_groups(pool, keys));

    const std::string name = mode == PseudoMode::concat ? "concat" : "pretrain-finetune";
    HeadModel head = mode == PseudoMode::concat ? train_concat(pool_x, pseudo, gold, c.concat)
                                                : train_pretrain_finetune(pool_x, pseudo, gold, c.pretrain, c.finetune);
    const auto dir = out_path(c, "pseudo/" + name);
    fs::create_directories(dir);
    save_pseudo_labels(pseudo, (fs::path(dir) / "pseudo_labels.csv").string());
    auto j = stamp(c);
    j["mode"] = name;
    j["source"] = pseudo.source;
    j["groups"] = groups_to_json(keys);
    j["standardizer"] = to_json(stdz);
    j["head"] = to_json(head);
    if (mode == PseudoMode::concat) {
        j["train"] = to_json(c.concat);
    } else {
        j["pretrain"] = to_json(c.pretrain);
        j["finetune"] = to_json(c.finetune);
    }
    j["gold_train_mcrmse"] = mcrmse(gold.scores, predict_head(head, gold.features));
    write_json_file((fs::path(dir) / "head.json").string(), j);
    return head;
}

struct SynthRequest {
    std::uint64_t seed = 7;
    std::size_t n = 200;
    std::size_t unlabeled = 0;
    int d = 16;
    int groups = 8;
    double noise = 0.1;
    bool row_hash = false;
};

/// Writes <out>/train (labeled), <out>/pool (unlabeled, with pool_truth.csv) and a
/// ready-to-run <out>/config.json.
inline void cmd_synth(const SynthRequest& r, const std::string& out) {
    OutputLock lock(out);
    SynthOptions opt;
    opt.row_hash_column = r.row_hash;
    const Dataset all = synthesize_dataset(r.seed, r.n + r.unlabeled, r.d, r.groups, r.noise, opt);
    write_dataset(slice_dataset(all, 0, r.n), (fs::path(out) / "train").string(), true);
    nlohmann::json cfg = {
        {"seed", r.seed},
        {"out", "run"},
        {"essays", "train/essays.csv"},
        {"manifest", "train/manifest.json"},
        {"k", 5},
        {"selection", {{"base", {{"kind", "svr"}, {"c", 1.0}, {"epsilon", 0.1}, {"tol", 1e-3}}}, {"max_groups", 3}, {"min_improve", 1e-4}}},
        {"bases",
         {{{"id", "svr_selected"}, {"kind", "svr"}, {"c", 1.0}, {"epsilon", 0.1}, {"tol", 1e-3}, {"groups", "selected"}},
          {{"id", "ridge_selected"}, {"kind", "ridge"}, {"lambda", 10.0}, {"groups", "selected"}},
          {{"id", "ridge_all"}, {"kind", "ridge"}, {"lambda", 10.0}, {"groups", "all"}}}},
        {"stack", {{"ridge_lambda", 1.0}, {"gbdt", {{"num_rounds", 100}, {"max_depth", 3}, {"learning_rate", 0.05}, {"min_samples_leaf", 5}}}}},
    };
    if (r.unlabeled > 0) {
        const Dataset pool = slice_dataset(all, r.n, r.n + r.unlabeled);
        write_dataset(pool, (fs::path(out) / "pool").string(), false);
        Matrix truth = targets_matrix(pool.records);
        csv::write_file((fs::path(out) / "pool_truth.csv").string(), format_predictions(pool.ids(), truth));
        cfg["unlabeled_essays"] = "pool/essays.csv";
        cfg["unlabeled_manifest"] = "pool/manifest.json";
        cfg["pseudo"] = {{"groups", "selected"},
                         {"pretrain", {{"learning_rate", 0.5}, {"epochs", 100}, {"batch_size", 32}}},
                         {"finetune", {{"learning_rate", 0.5}, {"epochs", 25}, {"batch_size", 32}}},
                         {"concat", {{"learning_rate", 0.5}, {"epochs", 100}, {"batch_size", 32}}}};
    }
    write_json_file((fs::path(out) / "config.json").string(), cfg);
}

} // namespace essaystack::pipeline
