#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "essaystack/pipeline.hpp"

namespace es = essaystack;
namespace pl = essaystack::pipeline;

namespace {

std::string one_line(std::string s) {
    for (char& c : s)
        if (c == '\n' || c == '\r') c = ' ';
    return s;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"essaystack: stacked ensemble for six-trait essay scoring"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("--config", config_path, "pipeline config (JSON)");
        if (config_required) opt->required();
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("--out", out, "override the output directory");
    };

    pl::SynthRequest synth;
    auto* s_synth = app.add_subcommand("synth", "write a synthetic dataset and a starter config");
    s_synth->add_option("--seed", synth.seed, "generator seed");
    s_synth->add_option("--n", synth.n, "labeled essays")->check(CLI::Range(10, 10000000));
    s_synth->add_option("--unlabeled", synth.unlabeled, "additional unlabeled essays");
    s_synth->add_option("--d", synth.d, "embedding width per group")->check(CLI::PositiveNumber);
    s_synth->add_option("--groups", synth.groups, "number of (model, layer) groups")->check(CLI::PositiveNumber);
    s_synth->add_option("--noise", synth.noise, "noise scale")->check(CLI::NonNegativeNumber);
    s_synth->add_flag("--row-hash", synth.row_hash, "append a row-alignment column to every group");
    std::string synth_out;
    s_synth->add_option("--out", synth_out, "output directory")->required();

    auto* s_folds = app.add_subcommand("folds", "assign stratified folds");
    add_common(s_folds, true);
    auto* s_select = app.add_subcommand("select", "forward selection of feature groups");
    add_common(s_select, true);
    auto* s_base = app.add_subcommand("train-base", "out-of-fold predictions and final fits for every base model");
    add_common(s_base, true);
    auto* s_stack = app.add_subcommand("stack", "fit both stackers and the blend weights; write the bundle");
    add_common(s_stack, true);

    std::string mode = "pretrain-finetune";
    auto* s_pseudo = app.add_subcommand("pseudo", "pseudo-label the unlabeled pool and train a head");
    add_common(s_pseudo, true);
    s_pseudo->add_option("--mode", mode, "pretrain-finetune or concat")
        ->check(CLI::IsMember({"pretrain-finetune", "concat"}));

    std::string holdout_essays, holdout_manifest;
    auto* s_eval = app.add_subcommand("evaluate", "report RMSE and F1 for every stage");
    add_common(s_eval, true);
    s_eval->add_option("--holdout-essays", holdout_essays, "labeled holdout essays.csv");
    s_eval->add_option("--holdout-manifest", holdout_manifest, "holdout manifest.json");

    std::string bundle, essays, manifest;
    auto* s_predict = app.add_subcommand("predict", "score essays with a trained bundle");
    add_common(s_predict, false);
    s_predict->add_option("--bundle", bundle, "bundle directory (default: <out>/bundle)");
    s_predict->add_option("--essays", essays, "essays.csv")->required();
    s_predict->add_option("--manifest", manifest, "embedding manifest.json")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (s_synth->parsed()) {
            pl::cmd_synth(synth, synth_out);
            return 0;
        }
        if (s_predict->parsed()) {
            std::string out_dir = out.value_or("");
            if (!config_path.empty()) {
                const auto cfg = pl::load_config(config_path, {seed, out});
                if (out_dir.empty()) out_dir = cfg.out;
                if (bundle.empty()) bundle = pl::out_path(cfg, "bundle");
            }
            if (out_dir.empty()) throw es::ValidationError("predict: pass --out or --config");
            if (bundle.empty()) bundle = (std::filesystem::path(out_dir) / "bundle").string();
            pl::cmd_predict(bundle, essays, manifest, out_dir);
            return 0;
        }
        if (holdout_essays.empty() != holdout_manifest.empty())
            throw es::ValidationError("evaluate: --holdout-essays and --holdout-manifest go together");
        const auto cfg = pl::load_config(config_path, {seed, out});
        if (s_folds->parsed()) pl::cmd_folds(cfg);
        else if (s_select->parsed()) pl::cmd_select(cfg, &std::cout);
        else if (s_base->parsed()) pl::cmd_train_base(cfg);
        else if (s_stack->parsed()) pl::cmd_stack(cfg);
        else if (s_pseudo->parsed()) pl::cmd_pseudo(cfg, es::pseudo_mode_from_string(mode));
        else if (s_eval->parsed()) pl::cmd_evaluate(cfg, holdout_essays, holdout_manifest, &std::cout);
    } catch (const es::Error& e) {
        std::cerr << "error: " << e.kind() << ": " << one_line(e.what()) << '\n';
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: parse: " << one_line(e.what()) << '\n';
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: io: " << one_line(e.what()) << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << one_line(e.what()) << '\n';
        return 1;
    }
    return 0;
}
