#pragma once

#include <random>

#include "essaystack/data_model.hpp"

namespace fixtures {

using namespace essaystack;

/// Three feature groups over a 4-d latent: "a" carries latent dims 0-1, "b"
/// carries dims 2-3, "c" is pure noise. Targets load more heavily on dims 0-1.
inline Dataset signal_complement_noise(std::uint64_t seed, std::size_t n, const std::string& a = "a",
                                       const std::string& b = "b", const std::string& c = "c") {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    const int d = 6;
    Matrix z(static_cast<Eigen::Index>(n), 4);
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = g(rng);
    Matrix load(4, kNumTargets);
    for (int t = 0; t < kNumTargets; ++t) {
        load(0, t) = 0.55 + 0.05 * t;
        load(1, t) = 0.45 - 0.04 * t;
        load(2, t) = 0.35 + 0.03 * t;
        load(3, t) = 0.25;
    }
    Dataset ds;
    for (std::size_t i = 0; i < n; ++i) {
        EssayRecord r;
        r.id = "s" + std::to_string(i);
        r.full_text = "Essay number " + std::to_string(i) + ".";
        ScoreVector s{};
        for (int t = 0; t < kNumTargets; ++t) {
            const double v = 3.0 + 0.5 * z.row(static_cast<Eigen::Index>(i)).dot(load.col(t));
            s[static_cast<std::size_t>(t)] = std::floor(std::clamp(v, 1.0, 5.0) * 2.0 + 0.5) / 2.0;
        }
        r.targets = s;
        ds.records.push_back(r);
    }
    auto projected = [&](int first) {
        Matrix p(2, d);
        for (Eigen::Index k = 0; k < p.size(); ++k) p(k) = g(rng);
        Matrix x = z.middleCols(first, 2) * p;
        for (Eigen::Index k = 0; k < x.size(); ++k) x(k) += 0.05 * g(rng);
        return FloatMatrix(x.cast<float>());
    };
    Matrix noise(static_cast<Eigen::Index>(n), d);
    for (Eigen::Index k = 0; k < noise.size(); ++k) noise(k) = g(rng);
    ds.groups[{a, 0}] = FeatureGroup{a, 0, projected(0)};
    ds.groups[{b, 0}] = FeatureGroup{b, 0, projected(2)};
    ds.groups[{c, 0}] = FeatureGroup{c, 0, FloatMatrix(noise.cast<float>())};
    return ds;
}

} // namespace fixtures
