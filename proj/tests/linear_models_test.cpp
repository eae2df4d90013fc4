#include <gtest/gtest.h>

#include <random>

#include "essaystack/linear_models.hpp"
#include "oracles/oracles.hpp"

using namespace essaystack;

namespace {
Matrix col(std::initializer_list<double> v) {
    Matrix m(static_cast<Eigen::Index>(v.size()), 1);
    Eigen::Index i = 0;
    for (double e : v) m(i++, 0) = e;
    return m;
}
Vector vec(std::initializer_list<double> v) { return col(v).col(0); }
} // namespace

TEST(Ridge, ExactInterpolation) {
    const auto m = fit_ridge(col({1, 2, 3}), vec({1, 2, 3}), {0.0});
    EXPECT_NEAR(m.w(0), 1.0, 1e-12);
    EXPECT_NEAR(m.b, 0.0, 1e-12);
}

TEST(Ridge, InfiniteShrinkageLeavesMean) {
    const auto m = fit_ridge(col({1, 2, 3}), vec({1, 2, 3}), {1e9});
    EXPECT_NEAR(m.w(0), 0.0, 1e-8);
    EXPECT_NEAR(m.b, 2.0, 1e-8);
}

TEST(Ridge, MatchesGradientDescentOracle) {
    std::mt19937_64 rng(8);
    const Matrix x = oracle::random_matrix(rng, 8, 3);
    const Vector y = oracle::random_matrix(rng, 8, 1).col(0);
    const auto m = fit_ridge(x, y, {0.5});
    const auto o = oracle::ridge_gd(x, y, 0.5);
    EXPECT_LE((m.w - o.w).lpNorm<Eigen::Infinity>(), 1e-6);
    EXPECT_NEAR(m.b, o.b, 1e-6);
}

TEST(Ridge, StationarityAndInterceptCondition) {
    std::mt19937_64 rng(9);
    for (double lambda : {0.0, 0.1, 10.0}) {
        const Matrix x = oracle::random_matrix(rng, 15, 5);
        const Vector y = oracle::random_matrix(rng, 15, 1).col(0);
        const auto m = fit_ridge(x, y, {lambda});
        const Vector r = x * m.w + Vector::Constant(15, m.b) - y;
        EXPECT_LE((2.0 * x.transpose() * r + 2.0 * lambda * m.w).lpNorm<Eigen::Infinity>(), 1e-8);
        EXPECT_LE(std::abs(r.sum()), 1e-8);
    }
}

TEST(Ridge, NormShrinksWithLambda) {
    std::mt19937_64 rng(10);
    const Matrix x = oracle::random_matrix(rng, 20, 4);
    const Vector y = oracle::random_matrix(rng, 20, 1).col(0);
    double prev = std::numeric_limits<double>::infinity();
    for (double lambda : {0.0, 0.01, 0.1, 1.0, 10.0, 100.0}) {
        const double norm = fit_ridge(x, y, {lambda}).w.norm();
        EXPECT_LE(norm, prev + 1e-12);
        prev = norm;
    }
}

TEST(Ridge, SingularAtZeroLambda) {
    Matrix x(4, 2);
    x << 1, 2, 2, 4, 3, 6, 4, 8;
    try {
        fit_ridge(x, vec({1, 2, 3, 4}), {0.0});
        FAIL() << "expected singular-system error";
    } catch (const SingularSystemError& e) {
        EXPECT_NE(std::string(e.what()).find("lambda"), std::string::npos);
    }
    EXPECT_NO_THROW(fit_ridge(x, vec({1, 2, 3, 4}), {0.1}));
}

TEST(Svr, SinglePoint) {
    for (double eps : {0.0, 0.5}) {
        const auto m = fit_svr(col({2}), vec({3}), {1.0, eps});
        EXPECT_NEAR(m.w(0), 0.0, 1e-12);
        EXPECT_NEAR(m.b, 3.0, 1e-9);
    }
}

TEST(Svr, ConstantTargets) {
    const auto m = fit_svr(col({-1, 0, 2, 5}), vec({2.5, 2.5, 2.5, 2.5}), {1.0, 0.1});
    EXPECT_NEAR(m.w(0), 0.0, 1e-12);
    EXPECT_NEAR(m.b, 2.5, 1e-9);
}

TEST(Svr, FivePointsMatchQpOracle) {
    const Matrix x = col({0, 1, 2, 3, 4});
    const Vector y = vec({0.2, 1.1, 1.8, 3.4, 3.9});
    SvrConfig cfg{1.0, 0.1};
    cfg.tol = 1e-8;
    const auto m = fit_svr(x, y, cfg);
    const double mine = svr_objective(m, x, y, 1.0, 0.1);
    EXPECT_LE(mine, oracle::svr_min_objective(x, y, 1.0, 0.1) + 1e-4);
}

TEST(Svr, WideTubeForcesZeroSlope) {
    const Matrix x = col({0, 1, 2, 3});
    const Vector y = vec({1.0, 1.2, 1.1, 1.3});
    const auto m = fit_svr(x, y, {10.0, 1.0});
    EXPECT_EQ(m.w(0), 0.0);
    EXPECT_EQ(svr_objective(m, x, y, 10.0, 1.0), 0.0);
}

TEST(Svr, InteriorPointsHaveZeroDualWeight) {
    std::mt19937_64 rng(12);
    const Matrix x = oracle::random_matrix(rng, 12, 2);
    const Vector y = x * vec({0.7, -0.3}) + 0.2 * oracle::random_matrix(rng, 12, 1).col(0);
    SvrConfig cfg{1.0, 0.15};
    cfg.tol = 1e-9;
    SvrFitInfo info;
    const auto m = fit_svr(x, y, cfg, &info);
    const Vector r = y - predict_linear(m, x);
    for (Eigen::Index i = 0; i < 12; ++i) {
        if (std::abs(r(i)) < 0.15 - 1e-6) {
            EXPECT_EQ(info.dual_coef(i), 0.0) << i;
        }
    }
}

TEST(Svr, DualObjectiveNeverIncreases) {
    std::mt19937_64 rng(13);
    const Matrix x = oracle::random_matrix(rng, 30, 3);
    const Vector y = oracle::random_matrix(rng, 30, 1).col(0);
    SvrConfig cfg{2.0, 0.05};
    cfg.record_objective = true;
    SvrFitInfo info;
    fit_svr(x, y, cfg, &info);
    ASSERT_GT(info.dual_objective.size(), 1u);
    for (std::size_t i = 1; i < info.dual_objective.size(); ++i)
        EXPECT_LE(info.dual_objective[i], info.dual_objective[i - 1] + 1e-12);
}

TEST(Svr, NonConvergenceReportsGap) {
    std::mt19937_64 rng(14);
    const Matrix x = oracle::random_matrix(rng, 30, 3);
    const Vector y = oracle::random_matrix(rng, 30, 1).col(0);
    SvrConfig cfg{1.0, 0.01};
    cfg.max_iter = 2;
    try {
        fit_svr(x, y, cfg);
        FAIL() << "expected convergence error";
    } catch (const ConvergenceError& e) {
        EXPECT_GT(e.duality_gap, 0.0);
        EXPECT_NE(std::string(e.what()).find("gap"), std::string::npos);
    }
}

TEST(PredictLinear, Examples) {
    LinearModel m{Vector::Zero(2), 3.0};
    EXPECT_EQ(predict_linear(m, Matrix::Ones(3, 2)), Vector::Constant(3, 3.0));
    LinearModel one{Vector::Ones(1), 0.0};
    EXPECT_EQ(predict_linear(one, col({2}))(0), 2.0);
    EXPECT_THROW(predict_linear(one, Matrix::Ones(1, 2)), DimensionError);
}

TEST(PredictLinear, MatchesDotProductOracle) {
    std::mt19937_64 rng(15);
    LinearModel m{oracle::random_matrix(rng, 5, 1).col(0), 0.3};
    const Matrix x = oracle::random_matrix(rng, 9, 5);
    const Vector p = predict_linear(m, x);
    for (Eigen::Index i = 0; i < 9; ++i) {
        double s = m.b;
        for (Eigen::Index j = 0; j < 5; ++j) s += m.w(j) * x(i, j);
        EXPECT_NEAR(p(i), s, 1e-12);
    }
}

TEST(Standardizer, ZeroMeanUnitVarianceAndConstantColumns) {
    std::mt19937_64 rng(16);
    Matrix x = oracle::random_matrix(rng, 50, 3, 4.0);
    x.col(2).setConstant(7.0);
    const auto s = Standardizer::fit(x);
    const Matrix z = s.apply(x);
    for (int c = 0; c < 2; ++c) {
        EXPECT_NEAR(z.col(c).mean(), 0.0, 1e-12);
        EXPECT_NEAR(z.col(c).squaredNorm() / 50.0, 1.0, 1e-12);
    }
    EXPECT_EQ(z.col(2), Vector::Zero(50));
    const auto back = standardizer_from_json(nlohmann::json::parse(to_json(s).dump()));
    EXPECT_EQ(back.mean, s.mean);
    EXPECT_EQ(back.scale, s.scale);
}

TEST(LinearJson, RoundTrip) {
    LinearModel m{vec({0.1, -2.5e-17, 3.0}), -0.75};
    const auto back = linear_from_json(nlohmann::json::parse(to_json(m).dump()));
    EXPECT_EQ(back.w, m.w);
    EXPECT_EQ(back.b, m.b);
}
