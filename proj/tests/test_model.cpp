#include <gtest/gtest.h>

#include "marginlab/errors.hpp"
#include "marginlab/model.hpp"
#include "oracles.hpp"

using namespace marginlab;

TEST(ModelKind, ValidationAndNames) {
    EXPECT_THROW(ModelKind::leaky(0.0), ParameterError);
    EXPECT_THROW(ModelKind::leaky(1.0), ParameterError);
    EXPECT_EQ(ModelKind::relu().name(), "relu");
    EXPECT_EQ(ModelKind::linear().name(), "linear");
    EXPECT_EQ(ModelKind::leaky(0.5).name(), "leaky:0.5");
    EXPECT_EQ(ModelKind::relu().slope(0.0), 0.0);
    EXPECT_EQ(ModelKind::leaky(0.3).slope(0.0), 0.3);
    EXPECT_EQ(ModelKind::leaky(0.3).activate(-2.0), -0.6);
}

TEST(Loss, MatchesDirectFormula) {
    const Dataset ds = oracle::random_dataset(3, 9, 4);
    RngStream rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        const Vec w = oracle::random_unit(rng, 4) * 3.0;
        for (double lambda : {0.0, 0.2, 1.0}) {
            const ModelKind kind = lambda == 0.0 ? ModelKind::relu() : lambda == 1.0 ? ModelKind::linear()
                                                                                       : ModelKind::leaky(lambda);
            const LossValue l = loss(w, ds, kind);
            EXPECT_FALSE(l.overflow);
            EXPECT_NEAR(l.value, oracle::loss(w, ds, lambda), 1e-13 * oracle::loss(w, ds, lambda));
        }
    }
}

TEST(Loss, ZeroWeightGivesOne) {
    const Dataset ds = oracle::random_dataset(8, 6, 3);
    EXPECT_EQ(loss(Vec::Zero(3), ds, ModelKind::relu()).value, 1.0);
    EXPECT_EQ(loss(Vec::Zero(3), ds, ModelKind::linear()).value, 1.0);
}

TEST(Loss, ExponentCapSetsOverflow) {
    const Dataset ds = Dataset::from_rows({{1.0}, {1.0}}, {1, -1});
    Vec w(1);
    w << 1000.0;
    const LossValue l = loss(w, ds, ModelKind::linear());
    EXPECT_TRUE(l.overflow);
    EXPECT_TRUE(std::isfinite(l.value));
    EXPECT_DOUBLE_EQ(l.value, (std::exp(-1000.0) + std::exp(kExponentCap)) / 2.0);
}

TEST(Gradient, ReluKinkTakesZeroSlope) {
    const Dataset ds = Dataset::from_rows({{1.0, 0.0}, {0.0, 1.0}}, {1, -1});
    const Vec w = Vec::Zero(2);
    const GradValue g = grad(w, ds, ModelKind::relu());
    EXPECT_EQ(g.value, Vec::Zero(2));
    const GradValue gl = grad(w, ds, ModelKind::leaky(0.5));
    EXPECT_DOUBLE_EQ(gl.value[0], -0.25);
    EXPECT_DOUBLE_EQ(gl.value[1], 0.25);
}

TEST(Gradient, FullGradientIsMeanOfSampleGradients) {
    const Dataset ds = oracle::random_dataset(21, 7, 3);
    RngStream rng(2);
    const Vec w = oracle::random_unit(rng, 3);
    Vec acc = Vec::Zero(3);
    for (std::size_t i = 0; i < ds.size(); ++i) acc += sample_grad(w, ds.x(i), ds.y(i), ModelKind::leaky(0.1)).value;
    EXPECT_TRUE(grad(w, ds, ModelKind::leaky(0.1)).value.isApprox(acc / 7.0, 1e-14));
}

TEST(Gradient, AgreesWithFiniteDifferences) {
    const Dataset ds = oracle::random_dataset(4, 10, 3);
    RngStream rng(9);
    int checked = 0;
    while (checked < 30) {
        const Vec w = oracle::random_unit(rng, 3) * 1.5;
        bool near_kink = false;
        for (std::size_t i = 0; i < ds.size(); ++i) near_kink = near_kink || std::abs(ds.x(i).dot(w)) < 1e-3;
        if (near_kink) continue;
        for (double lambda : {0.0, 0.4, 1.0}) {
            const ModelKind kind = lambda == 0.0 ? ModelKind::relu() : lambda == 1.0 ? ModelKind::linear()
                                                                                       : ModelKind::leaky(lambda);
            const Vec fd = oracle::fd_gradient([&](const Vec& u) { return oracle::loss(u, ds, lambda); }, w);
            const Vec g = grad(w, ds, kind).value;
            EXPECT_LT((g - fd).norm(), 1e-6 * std::max(fd.norm(), 1e-3));
        }
        ++checked;
    }
}

TEST(Net, ValidatesShapes) {
    Mat W = Mat::Ones(2, 3);
    Vec v(3);
    v << 1, -1, 1;
    EXPECT_NO_THROW(MultiNeuronNet(W, v));
    Vec same(3);
    same << 1, 1, 1;
    EXPECT_THROW(MultiNeuronNet(W, same), ParameterError);
    Vec with_zero(3);
    with_zero << 1, 0, -1;
    EXPECT_THROW(MultiNeuronNet(W, with_zero), ParameterError);
    EXPECT_THROW(MultiNeuronNet(Mat::Ones(2, 2), v), ParameterError);
}

TEST(Net, ForwardPatternsAndEffectiveWeight) {
    Mat W(2, 3);
    W << 1, -1, 0.5,
         0, 0, 1;
    Vec v(3);
    v << 2, -1, 0.5;
    const MultiNeuronNet net(W, v);
    Vec x(2);
    x << 1, 1;
    EXPECT_DOUBLE_EQ(net_forward(net, x), 2 * 1 + 0.5 * 1.5);
    const ActivationPattern p = activation_pattern(net, x);
    EXPECT_EQ(p, 0b101u);
    EXPECT_EQ(pattern_string(p, 3), "101");
    const Vec eff = effective_weight(W, v, p);
    EXPECT_DOUBLE_EQ(eff.dot(x), net_forward(net, x));
}

TEST(Net, GradientAgreesWithFiniteDifferences) {
    const Dataset ds = oracle::random_dataset(31, 8, 3);
    RngStream rng(17);
    Vec v(4);
    v << 1, 0.5, -1, -0.5;
    int checked = 0;
    while (checked < 20) {
        Mat W(3, 4);
        for (Eigen::Index k = 0; k < W.size(); ++k) W.data()[k] = rng.normal();
        bool near_kink = false;
        for (std::size_t i = 0; i < ds.size(); ++i)
            near_kink = near_kink || (W.transpose() * ds.x(i)).cwiseAbs().minCoeff() < 1e-3;
        if (near_kink) continue;
        const MultiNeuronNet net(W, v);
        const Mat g = net_grad(net, ds).value;
        Eigen::Map<const Vec> flat(W.data(), W.size());
        const Vec fd = oracle::fd_gradient(
            [&](const Vec& u) {
                const MultiNeuronNet probe(Eigen::Map<const Mat>(u.data(), 3, 4), v);
                double total = 0.0;
                for (std::size_t i = 0; i < ds.size(); ++i) total += std::exp(-ds.y(i) * net_forward(probe, ds.x(i)));
                return total / static_cast<double>(ds.size());
            },
            flat);
        const Eigen::Map<const Vec> gflat(g.data(), g.size());
        EXPECT_LT((gflat - fd).norm(), 1e-6 * std::max(fd.norm(), 1e-3));
        ++checked;
    }
}
