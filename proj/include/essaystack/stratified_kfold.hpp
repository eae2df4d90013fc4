#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "essaystack/core.hpp"
#include "essaystack/csv.hpp"

namespace essaystack {

/// Multi-hot label matrix: one row per record, one 0/1 column per label.
using LabelMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr int kNumBins = kNumTargets * kGridSize; // 54

struct FoldAssignment {
    int k = 0;
    std::vector<int> fold; // fold index per record

    std::vector<std::size_t> members(int f) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < fold.size(); ++i)
            if (fold[i] == f) out.push_back(i);
        return out;
    }
    std::vector<std::size_t> complement(int f) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < fold.size(); ++i)
            if (fold[i] != f) out.push_back(i);
        return out;
    }
};

/// One indicator column per (target, grid value): column = target * 9 + grid index.
inline LabelMatrix bin_targets(const Matrix& targets) {
    if (targets.cols() != kNumTargets) throw DimensionError("bin_targets: expected 6 target columns");
    LabelMatrix bins = LabelMatrix::Zero(targets.rows(), kNumBins);
    for (Eigen::Index i = 0; i < targets.rows(); ++i) {
        for (int t = 0; t < kNumTargets; ++t) {
            const double v = targets(i, t);
            if (!is_on_grid(v))
                throw ValidationError("bin_targets: off-grid value " + csv::format_double(v) + " at row " +
                                      std::to_string(i) + ", target " + std::string(kTargetNames[t]));
            bins(i, t * kGridSize + grid_index(v)) = 1;
        }
    }
    return bins;
}

/// Iterative stratification: the label with the fewest unassigned positives is
/// handled first. Each of its rows goes to the fold with the largest demand for
/// that label plus the row's total demand over all of its labels, then the
/// largest remaining capacity, then a seeded uniform pick. Fold sizes are capped
/// so they differ by at most one.
///
/// With six active bins per row every row is placed through its rarest label, so
/// ranking on that label alone leaves the common bins unbalanced; the row-level
/// term keeps them in check.
inline FoldAssignment assign_folds(const LabelMatrix& bins, int k, std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(bins.rows());
    if (k < 2) throw ValidationError("assign_folds: k must be >= 2");
    if (static_cast<std::size_t>(k) > n)
        throw ValidationError("assign_folds: k=" + std::to_string(k) + " exceeds sample count " + std::to_string(n));
    const auto L = static_cast<std::size_t>(bins.cols());
    const auto K = static_cast<std::size_t>(k);
    std::mt19937_64 rng(seed);

    // Visit order within a label is a seeded permutation so seeds yield distinct splits.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    // Demands and capacities are kept multiplied by k so they stay integral and
    // ties are exact.
    const std::size_t base_size = n / K;
    const std::size_t n_large = n % K;
    std::size_t large_used = 0;
    std::vector<std::size_t> size(K, 0);
    std::vector<std::int64_t> capacity(K, static_cast<std::int64_t>(n));
    std::vector<std::vector<std::int64_t>> demand(L, std::vector<std::int64_t>(K));
    std::vector<std::size_t> remaining(L, 0);
    std::vector<std::vector<std::size_t>> labels_of(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t l = 0; l < L; ++l)
            if (bins(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l))) {
                labels_of[i].push_back(l);
                ++remaining[l];
            }
    for (std::size_t l = 0; l < L; ++l) std::fill(demand[l].begin(), demand[l].end(), static_cast<std::int64_t>(remaining[l]));

    FoldAssignment out;
    out.k = k;
    out.fold.assign(n, -1);

    auto eligible = [&](std::size_t f) {
        if (size[f] < base_size) return true;
        return size[f] == base_size && large_used < n_large;
    };
    auto place = [&](std::size_t i, std::size_t f) {
        out.fold[i] = static_cast<int>(f);
        if (size[f] == base_size) ++large_used;
        ++size[f];
        capacity[f] -= k;
        for (std::size_t l : labels_of[i]) {
            demand[l][f] -= k;
            --remaining[l];
        }
    };
    // label == L: the row has no positive label and only capacity matters
    auto pick = [&](std::size_t i, std::size_t label) {
        std::vector<std::size_t> best;
        std::int64_t best_d = std::numeric_limits<std::int64_t>::min();
        std::int64_t best_c = best_d;
        for (std::size_t f = 0; f < K; ++f) {
            if (!eligible(f)) continue;
            std::int64_t d = label < L ? demand[label][f] : 0;
            for (std::size_t l : labels_of[i]) d += demand[l][f];
            const std::int64_t c = capacity[f];
            if (d > best_d || (d == best_d && c > best_c)) {
                best = {f};
                best_d = d;
                best_c = c;
            } else if (d == best_d && c == best_c) {
                best.push_back(f);
            }
        }
        if (best.size() == 1) return best.front();
        return best[std::uniform_int_distribution<std::size_t>(0, best.size() - 1)(rng)];
    };

    std::size_t unassigned = n;
    while (unassigned > 0) {
        std::size_t label = L;
        for (std::size_t l = 0; l < L; ++l)
            if (remaining[l] > 0 && (label == L || remaining[l] < remaining[label])) label = l;
        if (label == L) {
            // Rows without any positive label.
            for (std::size_t i : order) {
                if (out.fold[i] >= 0) continue;
                place(i, pick(i, L));
                --unassigned;
            }
            break;
        }
        for (std::size_t i : order) {
            if (out.fold[i] >= 0 || !bins(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(label))) continue;
            place(i, pick(i, label));
            --unassigned;
        }
    }
    return out;
}

/// Seeded random partition into k near-equal folds; the baseline iterative
/// stratification is compared against.
inline FoldAssignment random_folds(std::size_t n, int k, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    FoldAssignment out;
    out.k = k;
    out.fold.assign(n, 0);
    for (std::size_t r = 0; r < n; ++r) out.fold[order[r]] = static_cast<int>(r % static_cast<std::size_t>(k));
    return out;
}

inline std::string format_folds(const std::vector<std::string>& ids, const FoldAssignment& folds) {
    std::string out = "text_id,fold\n";
    for (std::size_t i = 0; i < ids.size(); ++i) out += csv::escape(ids[i]) + "," + std::to_string(folds.fold[i]) + "\n";
    return out;
}

/// Reads a fold file and aligns it to ids; every id must be present exactly once.
inline FoldAssignment load_folds(const std::string& path, const std::vector<std::string>& ids) {
    const auto rows = csv::parse_file(path);
    if (rows.empty() || rows[0].fields != std::vector<std::string>{"text_id", "fold"})
        throw ParseError(path + ": expected header text_id,fold");
    std::map<std::string, int> by_id;
    int max_fold = -1;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r].fields;
        const std::string where = path + ": line " + std::to_string(rows[r].line);
        if (f.size() != 2) throw ParseError(where + ": expected 2 fields");
        double v = 0;
        if (!csv::parse_double(f[1], v) || v < 0 || v != std::floor(v)) throw ParseError(where + ": bad fold index");
        if (!by_id.emplace(f[0], static_cast<int>(v)).second) throw ValidationError(where + ": duplicate id " + f[0]);
        max_fold = std::max(max_fold, static_cast<int>(v));
    }
    FoldAssignment out;
    out.k = max_fold + 1;
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw ValidationError(path + ": no fold for id " + id);
        out.fold.push_back(it->second);
    }
    if (by_id.size() != ids.size()) throw ValidationError(path + ": fold file has ids not in the dataset");
    return out;
}

} // namespace essaystack
