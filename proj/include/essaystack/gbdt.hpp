#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "essaystack/core.hpp"

namespace essaystack {

struct GbdtParams {
    int num_rounds = 200;
    int max_depth = 3;
    int min_samples_leaf = 1;
    double learning_rate = 0.05;
    std::uint64_t seed = 0; // reserved for row/feature subsampling
};

/// Flat pre-order tree: a node is a leaf when feature < 0.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0; // go left when x[feature] <= threshold
    int left = -1;
    int right = -1;
    double value = 0.0;

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes; // nodes[0] is the root

    double predict(const double* row) const {
        int at = 0;
        while (!nodes[static_cast<std::size_t>(at)].is_leaf()) {
            const auto& nd = nodes[static_cast<std::size_t>(at)];
            at = row[nd.feature] <= nd.threshold ? nd.left : nd.right;
        }
        return nodes[static_cast<std::size_t>(at)].value;
    }
};

struct GbdtModel {
    double base_score = 0.0;
    double learning_rate = 0.05;
    int num_features = 0;
    std::vector<Tree> trees;
    GbdtParams params;
};

struct SplitChoice {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0; // reduction in sum of squared errors
};

namespace detail {

struct GbdtBuilder {
    const Matrix& x;
    const std::vector<std::vector<Eigen::Index>>& sorted; // per feature, rows by ascending value
    const Vector& residual;
    const GbdtParams& params;
    std::vector<int> node_of; // current node id per row
    Tree tree;
    double noise_floor = 0.0; // gains at rounding-noise level are not real structure

    // Best exact split for the rows currently tagged with node id `id`.
    SplitChoice best_split(int id, std::size_t count, double sum) const {
        SplitChoice best;
        const auto msl = static_cast<std::size_t>(params.min_samples_leaf);
        if (count < 2 * msl) return best;
        const double parent = sum * sum / static_cast<double>(count);
        for (Eigen::Index f = 0; f < x.cols(); ++f) {
            const auto& order = sorted[static_cast<std::size_t>(f)];
            double left_sum = 0.0;
            std::size_t left_n = 0;
            double prev_val = 0.0;
            for (Eigen::Index r : order) {
                if (node_of[static_cast<std::size_t>(r)] != id) continue;
                const double v = x(r, f);
                if (left_n >= msl && count - left_n >= msl && v > prev_val) {
                    const double right_sum = sum - left_sum;
                    const double gain = left_sum * left_sum / static_cast<double>(left_n) +
                                        right_sum * right_sum / static_cast<double>(count - left_n) - parent;
                    // a later candidate must beat the best by more than rounding noise,
                    // so exact ties keep the lowest feature index and threshold
                    if (gain > best.gain + noise_floor) {
                        best.gain = gain;
                        best.feature = static_cast<int>(f);
                        best.threshold = prev_val + 0.5 * (v - prev_val);
                        if (best.threshold >= v) best.threshold = prev_val; // adjacent doubles
                    }
                }
                left_sum += residual(r);
                ++left_n;
                prev_val = v;
            }
        }
        return best;
    }

    int grow(int id, int depth, std::size_t count, double sum) {
        const int slot = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        tree.nodes.back().value = sum / static_cast<double>(count);
        if (depth >= params.max_depth) return slot;
        const SplitChoice s = best_split(id, count, sum);
        if (s.feature < 0 || s.gain <= noise_floor) return slot;

        const int left_id = 2 * id + 1, right_id = 2 * id + 2;
        std::size_t ln = 0, rn = 0;
        double ls = 0.0, rs = 0.0;
        for (std::size_t r = 0; r < node_of.size(); ++r) {
            if (node_of[r] != id) continue;
            if (x(static_cast<Eigen::Index>(r), s.feature) <= s.threshold) {
                node_of[r] = left_id;
                ++ln;
                ls += residual(static_cast<Eigen::Index>(r));
            } else {
                node_of[r] = right_id;
                ++rn;
                rs += residual(static_cast<Eigen::Index>(r));
            }
        }
        tree.nodes[static_cast<std::size_t>(slot)].feature = s.feature;
        tree.nodes[static_cast<std::size_t>(slot)].threshold = s.threshold;
        const int l = grow(left_id, depth + 1, ln, ls);
        const int r = grow(right_id, depth + 1, rn, rs);
        tree.nodes[static_cast<std::size_t>(slot)].left = l;
        tree.nodes[static_cast<std::size_t>(slot)].right = r;
        return slot;
    }
};

inline Tree build_tree(const Matrix& x, const std::vector<std::vector<Eigen::Index>>& sorted, const Vector& target,
                       const GbdtParams& params) {
    GbdtBuilder b{x, sorted, target, params, std::vector<int>(static_cast<std::size_t>(x.rows()), 0), {}};
    b.noise_floor = 1e-12 * std::max(1.0, target.squaredNorm());
    b.grow(0, 0, static_cast<std::size_t>(x.rows()), target.sum());
    return std::move(b.tree);
}

inline std::vector<std::vector<Eigen::Index>> presort(const Matrix& x) {
    std::vector<std::vector<Eigen::Index>> out(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
        auto& o = out[static_cast<std::size_t>(f)];
        o.resize(static_cast<std::size_t>(x.rows()));
        std::iota(o.begin(), o.end(), 0);
        std::stable_sort(o.begin(), o.end(), [&](Eigen::Index a, Eigen::Index b) { return x(a, f) < x(b, f); });
    }
    return out;
}

} // namespace detail

/// Single regression tree on `target`: exact greedy splits at midpoints between
/// sorted distinct values, maximal squared-error reduction, leaf = mean target.
/// Ties keep the lowest feature index, then the lowest threshold.
inline Tree fit_regression_tree(const Matrix& x, const Vector& target, const GbdtParams& params) {
    return detail::build_tree(x, detail::presort(x), target, params);
}

/// Best root split on the given rows; exposed for split-optimality checks.
inline SplitChoice best_root_split(const Matrix& x, const Vector& target, int min_samples_leaf) {
    const auto sorted = detail::presort(x);
    GbdtParams p;
    p.min_samples_leaf = min_samples_leaf;
    detail::GbdtBuilder b{x, sorted, target, p, std::vector<int>(static_cast<std::size_t>(x.rows()), 0), {}};
    b.noise_floor = 1e-12 * std::max(1.0, target.squaredNorm());
    return b.best_split(0, static_cast<std::size_t>(x.rows()), target.sum());
}

/// Squared-error gradient boosting. Stops early once a round cannot split the root.
inline GbdtModel fit_gbdt(const Matrix& x, const Vector& y, const GbdtParams& params) {
    if (x.rows() != y.size()) throw DimensionError("fit_gbdt: X/y row mismatch");
    if (params.num_rounds < 1 || params.max_depth < 1 || params.max_depth > 24 || params.min_samples_leaf < 1 ||
        !(params.learning_rate > 0.0 && params.learning_rate <= 1.0))
        throw ValidationError("fit_gbdt: invalid parameters");
    if (x.rows() < 2 * params.min_samples_leaf)
        throw ValidationError("fit_gbdt: need at least 2 * min_samples_leaf rows");
    if (!x.allFinite() || !y.allFinite()) throw ValidationError("fit_gbdt: non-finite input");

    GbdtModel m;
    m.params = params;
    m.learning_rate = params.learning_rate;
    m.num_features = static_cast<int>(x.cols());
    m.base_score = y.mean();
    const auto sorted = detail::presort(x);
    Vector pred = Vector::Constant(y.size(), m.base_score);
    for (int round = 0; round < params.num_rounds; ++round) {
        const Vector residual = y - pred;
        Tree tree = detail::build_tree(x, sorted, residual, params);
        if (tree.nodes.size() == 1) break;
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            const Eigen::RowVectorXd row = x.row(r);
            pred(r) += params.learning_rate * tree.predict(row.data());
        }
        m.trees.push_back(std::move(tree));
    }
    return m;
}

inline Vector predict_gbdt(const GbdtModel& m, const Matrix& x) {
    if (x.cols() != m.num_features)
        throw DimensionError("predict_gbdt: model expects " + std::to_string(m.num_features) + " features, got " +
                             std::to_string(x.cols()));
    Vector out(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const Eigen::RowVectorXd row = x.row(r);
        double v = m.base_score;
        for (const auto& t : m.trees) v += m.learning_rate * t.predict(row.data());
        out(r) = v;
    }
    return out;
}

inline nlohmann::json to_json(const GbdtParams& p) {
    return {{"num_rounds", p.num_rounds}, {"max_depth", p.max_depth}, {"min_samples_leaf", p.min_samples_leaf},
            {"learning_rate", p.learning_rate}, {"seed", p.seed}};
}

inline GbdtParams gbdt_params_from_json(const nlohmann::json& j) {
    GbdtParams p;
    p.num_rounds = j.value("num_rounds", p.num_rounds);
    p.max_depth = j.value("max_depth", p.max_depth);
    p.min_samples_leaf = j.value("min_samples_leaf", p.min_samples_leaf);
    p.learning_rate = j.value("learning_rate", p.learning_rate);
    p.seed = j.value("seed", p.seed);
    return p;
}

// Pre-order encoding: split nodes are [feature, threshold], leaves are [value].
// Children follow their parent, left subtree first.
namespace detail {
inline void encode_tree(const Tree& t, int at, nlohmann::json& out) {
    const auto& nd = t.nodes[static_cast<std::size_t>(at)];
    if (nd.is_leaf()) {
        out.push_back(nlohmann::json::array({nd.value}));
        return;
    }
    out.push_back(nlohmann::json::array({nd.feature, nd.threshold}));
    encode_tree(t, nd.left, out);
    encode_tree(t, nd.right, out);
}

inline int decode_tree(const nlohmann::json& in, std::size_t& pos, Tree& t) {
    if (pos >= in.size()) throw ParseError("gbdt model: truncated tree encoding");
    const auto& e = in[pos++];
    const int slot = static_cast<int>(t.nodes.size());
    t.nodes.push_back({});
    if (e.size() == 1) {
        t.nodes.back().value = e[0].get<double>();
        return slot;
    }
    if (e.size() != 2) throw ParseError("gbdt model: bad node encoding");
    t.nodes[static_cast<std::size_t>(slot)].feature = e[0].get<int>();
    t.nodes[static_cast<std::size_t>(slot)].threshold = e[1].get<double>();
    const int l = decode_tree(in, pos, t);
    const int r = decode_tree(in, pos, t);
    t.nodes[static_cast<std::size_t>(slot)].left = l;
    t.nodes[static_cast<std::size_t>(slot)].right = r;
    return slot;
}
} // namespace detail

inline constexpr int kGbdtFormatVersion = 1;

inline nlohmann::json to_json(const GbdtModel& m) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : m.trees) {
        nlohmann::json enc = nlohmann::json::array();
        detail::encode_tree(t, 0, enc);
        trees.push_back(std::move(enc));
    }
    return {{"format_version", kGbdtFormatVersion}, {"base_score", m.base_score},
            {"learning_rate", m.learning_rate},      {"num_features", m.num_features},
            {"params", to_json(m.params)},           {"trees", trees}};
}

inline GbdtModel gbdt_from_json(const nlohmann::json& j) {
    if (j.at("format_version").get<int>() != kGbdtFormatVersion) throw VersionError("gbdt model: unsupported format version");
    GbdtModel m;
    m.base_score = j.at("base_score").get<double>();
    m.learning_rate = j.at("learning_rate").get<double>();
    m.num_features = j.at("num_features").get<int>();
    m.params = gbdt_params_from_json(j.at("params"));
    for (const auto& enc : j.at("trees")) {
        Tree t;
        std::size_t pos = 0;
        detail::decode_tree(enc, pos, t);
        if (pos != enc.size()) throw ParseError("gbdt model: trailing nodes in tree encoding");
        m.trees.push_back(std::move(t));
    }
    return m;
}

} // namespace essaystack
