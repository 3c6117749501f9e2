#include <gtest/gtest.h>

#include <sstream>

#include "marginlab/dataset.hpp"
#include "marginlab/errors.hpp"
#include "marginlab/margin.hpp"

using namespace marginlab;

TEST(Dataset, RejectsBadLabelsAndShapes) {
    RowMatrix pts(2, 2);
    pts << 1, 0, 0, 1;
    EXPECT_THROW(Dataset(pts, {1, 0}), ParameterError);
    EXPECT_THROW(Dataset(pts, {1, 1}), ParameterError);
    EXPECT_THROW(Dataset(pts, {1}), ParameterError);
    EXPECT_THROW(Dataset::from_rows({{1, 0}, {1}}, {1, -1}), ParameterError);
    pts(1, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(Dataset(pts, {1, -1}), ParameterError);
}

TEST(Dataset, ClassIndicesAndNormBound) {
    const Dataset ds = Dataset::from_rows({{3, 4}, {1, 0}, {0, -2}}, {1, -1, 1});
    EXPECT_EQ(ds.positives(), (std::vector<std::size_t>{0, 2}));
    EXPECT_EQ(ds.negatives(), (std::vector<std::size_t>{1}));
    EXPECT_DOUBLE_EQ(ds.norm_bound(), 5.0);
    const RowMatrix s = ds.signed_points();
    EXPECT_EQ(s(1, 0), -1.0);
    EXPECT_EQ(ds.positive_points().rows(), 2);
}

TEST(Dataset, SeparableGeneratorMeetsMargin) {
    const Dataset ds = gen_separable(20, 15, 4, 0.3, 11);
    EXPECT_EQ(ds.n_pos(), 20u);
    EXPECT_EQ(ds.n_neg(), 15u);
    const ConditionReport rep = check_combes(ds);
    ASSERT_TRUE(rep.separable);
    EXPECT_GE(rep.separation_margin, 0.3 - 1e-7);
    EXPECT_EQ(gen_separable(20, 15, 4, 0.3, 11), ds);
    EXPECT_FALSE(gen_separable(20, 15, 4, 0.3, 12) == ds);
}

TEST(Dataset, CombesGeneratorSatisfiesPairwiseSigns) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Dataset ds = gen_combes(6, 4, 3, seed);
        for (std::size_t i = 0; i < ds.size(); ++i)
            for (std::size_t j = 0; j < ds.size(); ++j)
                EXPECT_GT(ds.y(i) * ds.y(j) * ds.x(i).dot(ds.x(j)), kStrictTolerance);
        const ConditionReport rep = check_combes(ds);
        EXPECT_TRUE(rep.combes_ok);
        EXPECT_TRUE(rep.separable);
        EXPECT_TRUE(rep.violating_pairs.empty());
    }
}

TEST(Dataset, ExamplesHaveStatedGeometry) {
    const Dataset e1 = gen_example1();
    EXPECT_LT(e1.x(0).dot(e1.x(1)), 0.0);
    EXPECT_LT(e1.x(0).dot(e1.x(2)), 0.0);
    EXPECT_EQ(e1.labels(), (std::vector<int>{1, 1, -1}));
    const Dataset e2 = gen_example2();
    const double ip = e2.x(0).dot(e2.x(1));
    EXPECT_GT(ip, 0.0);
    EXPECT_LE(ip, 0.5 * e2.x(1).squaredNorm());
    EXPECT_FALSE(check_combes(e2).combes_ok);
}

TEST(Dataset, CheckReportsViolatingPairs) {
    const Dataset ds = Dataset::from_rows({{1, 0}, {-1, 0.1}, {0, -1}}, {1, 1, -1});
    const ConditionReport rep = check_combes(ds);
    EXPECT_FALSE(rep.combes_ok);
    ASSERT_FALSE(rep.violating_pairs.empty());
    EXPECT_EQ(rep.violating_pairs.front().i, 0u);
    EXPECT_EQ(rep.violating_pairs.front().j, 1u);
}

TEST(Dataset, AugmentAndLeakyTransform) {
    const Dataset ds = gen_example1();
    const Dataset a = augment(ds);
    ASSERT_EQ(a.dim(), 3);
    EXPECT_EQ(a.points()(0, 2), 1.0);
    EXPECT_EQ(a.points()(2, 2), -1.0);
    const Dataset l = leaky_transform(ds, 0.25);
    EXPECT_EQ(l.x(0), ds.x(0));
    EXPECT_EQ(l.x(2), 0.25 * ds.x(2));
    EXPECT_EQ(l.labels(), ds.labels());
    EXPECT_THROW(leaky_transform(ds, 1.5), ParameterError);
}

TEST(Dataset, CsvRoundTripIsExact) {
    const Dataset ds = gen_combes(4, 3, 5, 7);
    std::stringstream ss;
    write_csv(ds, ss);
    EXPECT_EQ(read_csv(ss), ds);
}

TEST(Dataset, CsvErrorsCarryLineAndField) {
    auto parse = [](const std::string& text) {
        std::istringstream in(text);
        return read_csv(in);
    };
    EXPECT_THROW(parse(""), ParseError);
    EXPECT_THROW(parse("a,b,label\n1,2,1\n"), ParseError);
    try {
        parse("x0,x1,label\n1,2,1\n3,oops,-1\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_EQ(e.field(), "x1");
    }
    try {
        parse("x0,x1,label\n1,2,1\n3,4,2\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_EQ(e.field(), "label");
    }
    EXPECT_THROW(parse("x0,x1,label\n1,2,1\n3,-1\n"), ParseError);
    EXPECT_THROW(parse("x0,x1,label\n1,2,1\n3,4,1\n"), ParseError);
}
