// Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "essaystack/essaystack.hpp"
#include "fixtures.hpp"
#include "oracles/oracles.hpp"
#include "test_support.hpp"

using namespace essaystack;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// --- 1: ridge ---------------------------------------------------------------

void ridge_oracle(Outcome& o) {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> dim(1, 8);
    const double lambdas[] = {0.0, 0.1, 10.0};
    double worst_diff = 0, worst_stat = 0, fit_time = 0;
    for (int p = 0; p < 50; ++p) {
        const double lambda = lambdas[p % 3];
        const int d = dim(rng);
        // lambda = 0 needs a full-rank design for a unique optimum
        const int n = std::uniform_int_distribution<int>(lambda == 0 ? d + 3 : 2, 20)(rng);
        const Matrix x = oracle::random_matrix(rng, n, d);
        const Vector y = oracle::random_matrix(rng, n, 1).col(0);
        const auto t0 = Clock::now();
        const auto m = fit_ridge(x, y, {lambda});
        fit_time += seconds_since(t0);
        const auto ref = oracle::ridge_gd(x, y, lambda, 1e-12, 2'000'000);
        worst_diff = std::max({worst_diff, (m.w - ref.w).lpNorm<Eigen::Infinity>(), std::abs(m.b - ref.b)});
        const Vector r = x * m.w + Vector::Constant(n, m.b) - y;
        worst_stat = std::max({worst_stat, (2.0 * x.transpose() * r + 2.0 * lambda * m.w).lpNorm<Eigen::Infinity>(),
                               std::abs(2.0 * r.sum())});
    }
    o.require(worst_diff <= 1e-6, "max |fit - oracle| <= 1e-6");
    o.require(worst_stat <= 1e-8, "stationarity <= 1e-8");
    o.require(fit_time < 5.0, "fit time < 5 s");
    o.detail << "50 problems, max|dtheta|=" << worst_diff << " max|grad|=" << worst_stat << " fit time " << fit_time << "s";
}

// --- 2: SVR -----------------------------------------------------------------

void svr_oracle(Outcome& o) {
    std::mt19937_64 rng(202);
    const double cs[] = {0.5, 1.0, 10.0};
    const double epss[] = {0.0, 0.1, 0.3};
    double worst = 0;
    for (int p = 0; p < 20; ++p) {
        const int d = 1 + p % 2;
        const int n = std::uniform_int_distribution<int>(2, 8)(rng);
        const Matrix x = oracle::random_matrix(rng, n, d);
        const Vector y = oracle::random_matrix(rng, n, 1).col(0);
        const double c = cs[p % 3], eps = epss[(p / 3) % 3];
        SvrConfig cfg{c, eps};
        cfg.tol = 1e-9;
        const double mine = svr_objective(fit_svr(x, y, cfg), x, y, c, eps);
        worst = std::max(worst, std::abs(mine - oracle::svr_min_objective(x, y, c, eps)));
    }
    o.require(worst <= 1e-4, "objective within 1e-4 of oracle");

    // tube: every point fits inside a zero-slope tube
    Matrix x(5, 2);
    x << 0, 1, 1, 0, 2, 2, 3, -1, 4, 0.5;
    Vector y(5);
    y << 1.0, 1.3, 0.9, 1.2, 1.1;
    const auto tube = fit_svr(x, y, {5.0, 0.5});
    o.require(tube.w.squaredNorm() == 0.0 && svr_objective(tube, x, y, 5.0, 0.5) == 0.0, "wide tube gives w = 0, loss 0");
    // zero loss: constant targets
    const auto flat = fit_svr(x, Vector::Constant(5, 2.5), {1.0, 0.1});
    o.require(flat.w.squaredNorm() == 0.0 && svr_objective(flat, x, Vector::Constant(5, 2.5), 1.0, 0.1) == 0.0,
              "constant targets give w = 0, objective 0");
    o.detail << "20 problems, max|objective - oracle|=" << worst << "; degenerate cases exact";
}

// --- 3: GBDT ----------------------------------------------------------------

void gbdt_properties(Outcome& o) {
    std::mt19937_64 rng(303);
    int monotone_bad = 0, stump_bad = 0, interp_bad = 0;
    for (int ds = 0; ds < 100; ++ds) {
        const int n = std::uniform_int_distribution<int>(10, 60)(rng);
        const int d = std::uniform_int_distribution<int>(1, 5)(rng);
        const Matrix x = oracle::random_matrix(rng, n, d);
        const Vector y = oracle::random_matrix(rng, n, 1).col(0);
        GbdtParams p;
        p.num_rounds = 25;
        p.max_depth = 1 + ds % 4;
        p.learning_rate = (ds % 3 == 0) ? 1.0 : 0.2;
        p.min_samples_leaf = 1 + ds % 2;
        auto m = fit_gbdt(x, y, p);
        const auto trees = m.trees;
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t <= trees.size(); ++t) {
            m.trees.assign(trees.begin(), trees.begin() + static_cast<std::ptrdiff_t>(t));
            const double r = rmse(y, predict_gbdt(m, x));
            if (r > prev + 1e-12) ++monotone_bad;
            prev = r;
        }

        // stump against the exhaustive search: same feature, same partition, same gain
        GbdtParams sp;
        sp.num_rounds = 1;
        sp.max_depth = 1;
        sp.learning_rate = 1.0;
        sp.min_samples_leaf = p.min_samples_leaf;
        const auto stump = fit_gbdt(x, y, sp);
        const auto ref = oracle::exhaustive_split(x, y, sp.min_samples_leaf);
        const auto mine = best_root_split(x, y, sp.min_samples_leaf);
        bool same = !stump.trees.empty() && stump.trees[0].nodes[0].feature == ref.feature &&
                    std::abs(mine.gain - ref.gain) <= 1e-9 * std::max(1.0, ref.gain);
        if (same) {
            const double thr = stump.trees[0].nodes[0].threshold;
            for (Eigen::Index i = 0; i < n; ++i)
                same = same && ((x(i, ref.feature) <= thr) == (x(i, ref.feature) <= ref.threshold));
        }
        if (!same) ++stump_bad;

        // interpolation: depth >= ceil(log2 n), leaf size 1, lr 1, n rounds
        if (ds % 10 == 0) {
            GbdtParams ip;
            ip.num_rounds = n;
            ip.max_depth = static_cast<int>(std::ceil(std::log2(static_cast<double>(n))));
            ip.learning_rate = 1.0;
            ip.min_samples_leaf = 1;
            if (rmse(y, predict_gbdt(fit_gbdt(x, y, ip), x)) > 1e-9) ++interp_bad;
        }
    }
    o.require(monotone_bad == 0, "training RMSE monotone");
    o.require(stump_bad == 0, "stump equals exhaustive split");
    o.require(interp_bad == 0, "interpolation within n rounds");
    o.detail << "100 datasets: " << monotone_bad << " monotonicity violations, " << stump_bad << " stump mismatches, "
             << interp_bad << "/10 interpolation failures";
}

// --- 4: stratification -------------------------------------------------------

double mean_gap(const LabelMatrix& bins, const FoldAssignment& folds) {
    double total = 0;
    int counted = 0;
    for (Eigen::Index l = 0; l < bins.cols(); ++l) {
        std::vector<int> per(static_cast<std::size_t>(folds.k), 0);
        int pos = 0;
        for (Eigen::Index i = 0; i < bins.rows(); ++i)
            if (bins(i, l)) {
                ++per[static_cast<std::size_t>(folds.fold[static_cast<std::size_t>(i)])];
                ++pos;
            }
        if (pos == 0) continue;
        total += *std::max_element(per.begin(), per.end()) - *std::min_element(per.begin(), per.end());
        ++counted;
    }
    return total / counted;
}

void stratification(Outcome& o) {
    const auto ds = synthesize_dataset(21, 100, 4, 1, 0.1);
    const auto bins = bin_targets(targets_matrix(ds.records));
    double worst = 0, strat = 0, rand = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto f = assign_folds(bins, 5, s);
        for (Eigen::Index l = 0; l < bins.cols(); ++l) {
            const int pos = bins.col(l).cast<int>().sum();
            if (pos < 10) continue;
            for (int k = 0; k < 5; ++k) {
                const auto m = f.members(k);
                int in = 0;
                for (auto i : m) in += bins(static_cast<Eigen::Index>(i), l);
                worst = std::max(worst, std::abs(static_cast<double>(in) / m.size() - pos / 100.0));
            }
        }
        strat += mean_gap(bins, f);
        rand += mean_gap(bins, random_folds(100, 5, s));
    }
    o.require(worst <= 0.15, "per-bin proportion within 0.15");
    o.require(strat < rand, "mean max-min gap below random");
    o.detail << "20 seeds, worst per-bin deviation " << worst << ", mean gap " << strat / 20 << " vs random " << rand / 20;
}

// --- 5: head gradient ---------------------------------------------------------

void head_gradient_check(Outcome& o) {
    std::mt19937_64 rng(505);
    std::uniform_real_distribution<double> u(0, 1);
    double worst = 0;
    for (int batch = 0; batch < 20; ++batch) {
        const int n = 1 + batch % 8, d = 1 + batch % 5;
        const double l2 = batch % 2 ? 0.05 : 0.0;
        const Matrix x = oracle::random_matrix(rng, n, d);
        Matrix t(n, kNumTargets);
        for (Eigen::Index i = 0; i < t.size(); ++i) t(i) = u(rng);
        const HeadModel m{oracle::random_matrix(rng, kNumTargets, d, 0.5), oracle::random_matrix(rng, kNumTargets, 1, 0.5).col(0)};
        const auto g = head_gradient(m, x, t, l2);
        const Eigen::Index nw = kNumTargets * d;
        Vector theta(nw + kNumTargets);
        theta << Eigen::Map<const Vector>(m.w.data(), nw), m.b;
        auto f = [&](const Vector& th) {
            const HeadModel mm{Eigen::Map<const Matrix>(th.data(), kNumTargets, d), th.tail(kNumTargets)};
            return head_objective(mm, x, t, l2);
        };
        Vector analytic(nw + kNumTargets);
        analytic << Eigen::Map<const Vector>(g.w.data(), nw), g.b;
        worst = std::max(worst, (oracle::finite_difference(f, theta) - analytic).lpNorm<Eigen::Infinity>());
    }
    o.require(worst <= 1e-6, "max |analytic - finite difference| <= 1e-6");
    o.detail << "20 random batches, max diff " << worst;
}

// --- 6: forward selection -----------------------------------------------------

void selection_oracle(Outcome& o) {
    const auto ds = fixtures::signal_complement_noise(5, 200);
    const Matrix y = targets_matrix(ds.records);
    const auto folds = assign_folds(bin_targets(y), 5, 3);
    BaseModelConfig svr;
    svr.kind = BaseKind::svr;
    const auto r = forward_select(ds.groups, y, folds, svr, 3, 1e-4);
    const auto keys = ds.group_keys();
    double best = std::numeric_limits<double>::infinity();
    unsigned best_mask = 0;
    for (unsigned mask : oracle::subsets(3, 3)) {
        std::vector<GroupKey> chosen;
        for (std::size_t g = 0; g < keys.size(); ++g)
            if (mask & (1u << g)) chosen.push_back(keys[g]);
        const double s = cv_score(concat_groups(ds, chosen), y, folds, svr);
        if (s < best) {
            best = s;
            best_mask = mask;
        }
    }
    unsigned chosen_mask = 0;
    for (const auto& k : r.selected)
        chosen_mask |= 1u << static_cast<unsigned>(std::find(keys.begin(), keys.end(), k) - keys.begin());
    o.require(__builtin_popcount(best_mask) <= 2, "brute-force best has at most 2 groups");
    o.require(chosen_mask == best_mask, "selection equals brute-force best");
    o.detail << "selected {";
    for (std::size_t i = 0; i < r.selected.size(); ++i) o.detail << (i ? "," : "") << r.selected[i].first;
    o.detail << "} cv " << r.final_cv << "; brute-force best mask " << best_mask << " cv " << best;
}

// --- 7: stacking gain -----------------------------------------------------------

void stacking_gain(Outcome& o) {
    const auto ds = synthesize_dataset(7, 500, 16, 3, 1.0);
    const Matrix y = targets_matrix(ds.records);
    const auto folds = assign_folds(bin_targets(y), 5, 11);
    BaseModelConfig cfg;
    cfg.kind = BaseKind::ridge;
    cfg.ridge.lambda = 10.0;
    Matrix p(y.rows(), 0);
    double best_single = std::numeric_limits<double>::infinity();
    for (const auto& key : ds.group_keys()) {
        const Matrix oof = oof_predictions(concat_groups(ds, {key}), y, folds, cfg);
        best_single = std::min(best_single, mcrmse(y, oof));
        p = hconcat(p, oof);
    }
    StackSettings st;
    st.gbdt.num_rounds = 100;
    st.gbdt.max_depth = 3;
    st.gbdt.learning_rate = 0.05;
    st.gbdt.min_samples_leaf = 5;
    const auto stacked = stacker_oof(p, readability_matrix(texts_of(ds)), y, folds, st);
    const double ridge = mcrmse(y, stacked[0]);
    const double blended = mcrmse(y, blend(stacked, optimize_weights(stacked, y)));
    o.require(best_single > ridge, "best single > ridge stack");
    o.require(ridge > blended, "ridge stack > blend");
    o.require(blended <= 0.98 * best_single, "blend at least 2% better than best single");
    o.detail << "OOF MCRMSE best single " << best_single << " > ridge stack " << ridge << " > blend " << blended << " ("
             << 100.0 * (1.0 - blended / best_single) << "% gain)";
}

// --- 8: pseudo-labels -----------------------------------------------------------

void pseudo_gain(Outcome& o) {
    // Pipeline defaults: full-length pretrain and concat runs, short fine-tune.
    auto head = [](int epochs, std::uint64_t seed, const char* stream) {
        HeadTrainConfig c;
        c.learning_rate = 0.5;
        c.epochs = epochs;
        c.batch_size = 32;
        c.seed = derive_seed(seed, stream);
        return c;
    };
    std::ostringstream gains;
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto ds = synthesize_dataset(seed, 40 + 400 + 300, 8, 1, 0.0);
        const Matrix x_all = concat_groups(ds, ds.group_keys());
        const Matrix y_all = targets_matrix(ds.records);
        const auto ids = ds.ids();
        const Matrix xs = Standardizer::fit(x_all.topRows(40)).apply(x_all);
        LabeledSet gold{{ids.begin(), ids.begin() + 40}, xs.topRows(40), y_all.topRows(40)};
        PseudoLabelSet pool{{ids.begin() + 40, ids.begin() + 440}, y_all.middleRows(40, 400), "truth"};
        const Matrix pool_x = xs.middleRows(40, 400);
        const Matrix test_x = xs.bottomRows(300), test_y = y_all.bottomRows(300);
        auto score = [&](const HeadModel& m) { return mcrmse(test_y, predict_head(m, test_x)); };

        const auto pre = head(200, seed, "pseudo/pretrain"), fine = head(50, seed, "pseudo/finetune"),
                   cc = head(200, seed, "pseudo/concat");
        // gold-only baselines get the full training budget
        const double base_pf = score(train_head(gold.features, gold.scores, head(200, seed, "pseudo/finetune")));
        const double base_cc = score(train_head(gold.features, gold.scores, cc));
        const double pf = score(train_pretrain_finetune(pool_x, pool, gold, pre, fine));
        const double c = score(train_concat(pool_x, pool, gold, cc));
        const double pf_long = score(train_pretrain_finetune(pool_x, pool, gold, pre, head(200, seed, "pseudo/finetune")));
        o.require(pf <= base_pf, "pretrain-finetune <= gold-only (seed " + std::to_string(seed) + ")");
        o.require(c <= base_cc, "concat <= gold-only (seed " + std::to_string(seed) + ")");
        gains << " seed " << seed << ": gold-only " << base_pf << "/" << base_cc << ", pretrain-finetune " << pf
              << " (200-epoch fine-tune " << pf_long << "), concat " << c << ";";

        PseudoLabelSet empty;
        empty.soft_targets.resize(0, kNumTargets);
        const Matrix none(0, gold.features.cols());
        const auto ref = train_head(gold.features, gold.scores, fine);
        const auto a = train_pretrain_finetune(none, empty, gold, pre, fine);
        const auto ref_c = train_head(gold.features, gold.scores, cc);
        const auto b = train_concat(none, empty, gold, cc);
        o.require(a.w == ref.w && a.b == ref.b && b.w == ref_c.w && b.b == ref_c.b, "empty pool bit-equal to gold-only");
    }
    o.detail << "held-out MCRMSE" << gains.str() << " empty pool bit-equal in both modes";
}

// --- 9: metrics ---------------------------------------------------------------

void metrics_checks(Outcome& o) {
    const double r1 = rmse(std::vector<double>{0, 0}, std::vector<double>{3, 4});
    o.require(r1 == std::sqrt(12.5) && std::abs(r1 - 3.535534) < 5e-7, "rmse([0,0],[3,4]) = sqrt(12.5)");
    o.require(rmse(std::vector<double>{1}, std::vector<double>{3}) == 2.0, "single element");
    const double f = f1_macro(std::vector<double>{3, 3, 4, 4}, std::vector<double>{3, 4, 4, 4});
    o.require(std::abs(f - 11.0 / 15.0) <= 1e-15, "f1 hand example = 0.733333");
    o.require(f1_macro(std::vector<double>{1, 2.5, 5}, std::vector<double>{1, 2.5, 5}) == 1.0, "perfect f1 = 1");
    o.require(f1_macro(std::vector<double>{1, 1}, std::vector<double>{5, 5}) == 0.0, "disjoint f1 = 0");
    o.require(discretize(3.24) == 3.0 && discretize(3.25) == 3.5 && discretize(5.7) == 5.0 && discretize(0.2) == 1.0,
              "discretize examples");
    Matrix y = Matrix::Constant(4, kNumTargets, 3.0), yhat = y;
    yhat.col(2).array() += 2.0;
    o.require(std::abs(mcrmse(y, yhat) - 2.0 / 6.0) <= 1e-15, "mcrmse 2/6 example");

    std::mt19937_64 rng(909);
    double worst = 0;
    for (int p = 0; p < 50; ++p) {
        const int n = std::uniform_int_distribution<int>(1, 200)(rng);
        const Matrix a = oracle::random_matrix(rng, n, kNumTargets), b = oracle::random_matrix(rng, n, kNumTargets);
        worst = std::max(worst, std::abs(mcrmse(a, b) - oracle::mcrmse_loops(a, b)));
    }
    o.require(worst <= 1e-12, "mcrmse vs double-loop oracle <= 1e-12");
    o.detail << "hand examples exact; mcrmse max diff vs loop oracle " << worst;
}

// --- 10: reproducibility ------------------------------------------------------------

int run_cli(const std::string& args, const std::string& log) {
    const std::string cmd = std::string(ESSAYSTACK_CLI) + " " + args + " >>" + log + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file() && e.path().filename() != ".lock")
            out[fs::relative(e.path(), root).string()] = testing_support::read_text(e.path().string());
    return out;
}

void reproducibility(Outcome& o) {
    testing_support::TempDir dir("acceptance");
    const auto log = dir.str("cli.log");
    const auto cfg = dir.str("w/config.json");
    o.require(run_cli("synth --seed 7 --n 200 --unlabeled 60 --noise 0.1 --out " + dir.str("w"), log) == 0, "synth");
    std::map<std::string, std::string> first;
    for (int pass = 0; pass < 2 && o.pass; ++pass) {
        for (const char* step : {"folds", "select", "train-base", "stack", "evaluate", "pseudo --mode pretrain-finetune",
                                 "pseudo --mode concat"}) {
            if (run_cli(std::string(step) + " --config " + cfg, log) != 0) {
                o.require(false, std::string(step) + " exited non-zero, see log: " + testing_support::read_text(log));
                break;
            }
        }
        if (pass == 0) {
            first = snapshot(dir.str("w/run"));
            fs::remove_all(dir.str("w/run"));
        }
    }
    if (!o.pass) return;
    const auto second = snapshot(dir.str("w/run"));
    std::size_t differing = 0;
    for (const auto& [name, bytes] : first) {
        const auto it = second.find(name);
        if (it == second.end() || it->second != bytes) {
            ++differing;
            o.detail << "differs: " << name << "; ";
        }
    }
    o.require(first.size() == second.size() && differing == 0, "byte-identical artifacts");
    o.detail << first.size() << " artifact files compared across two clean runs, " << differing << " differ";
}

} // namespace

int main() {
    struct Criterion {
        const char* id;
        const char* title;
        std::function<void(Outcome&)> run;
    };
    const Criterion criteria[] = {
        {"AC1", "ridge matches gradient-descent oracle", ridge_oracle},
        {"AC2", "SVR matches QP oracle", svr_oracle},
        {"AC3", "GBDT monotone fit, exhaustive stump, interpolation", gbdt_properties},
        {"AC4", "iterative stratification balance", stratification},
        {"AC5", "head gradient check", head_gradient_check},
        {"AC6", "forward selection equals brute force", selection_oracle},
        {"AC7", "stacking gain ordering", stacking_gain},
        {"AC8", "pseudo-label gain and empty-pool identity", pseudo_gain},
        {"AC9", "metrics hand examples and loop oracle", metrics_checks},
        {"AC10", "CLI pipeline reproducibility", reproducibility},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        Outcome o;
        const auto t0 = Clock::now();
        try {
            c.run(o);
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        const double secs = seconds_since(t0);
        if (!o.pass) ++failed;
        std::printf("%-4s %s  %-52s %7.2fs  %s\n", c.id, o.pass ? "PASS" : "FAIL", c.title, secs, o.detail.str().c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed, std::size(criteria));
    return failed == 0 ? 0 : 1;
}
