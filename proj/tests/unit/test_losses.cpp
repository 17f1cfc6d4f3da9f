#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sepl/error.hpp"
#include "sepl/losses.hpp"
#include "testing.hpp"

using namespace sepl;
using testing_support::numeric_gradient;
using testing_support::random_labels;
using testing_support::random_matrix;
using testing_support::relative_error;
using testing_support::rows_of;

namespace {

Matrix rows2(std::initializer_list<std::initializer_list<double>> init) {
    Matrix m(static_cast<Eigen::Index>(init.size()),
             static_cast<Eigen::Index>(init.begin()->size()));
    Eigen::Index i = 0;
    for (const auto& r : init) {
        Eigen::Index j = 0;
        for (double v : r) m(i, j++) = v;
        ++i;
    }
    return m;
}

}  // namespace

// ─── Spec examples ─────────────────────────────────────────────────────────

TEST(LossPre, SingleSampleIsZero) {
    EXPECT_NEAR(loss_pre(rows2({{1, 2, 3}}), rows2({{-1, 0, 2}}), 0.07).value, 0.0, 1e-12);
}

TEST(LossPre, TwoOrthogonalPairs) {
    const Matrix e = Matrix::Identity(2, 2);
    EXPECT_NEAR(loss_pre(e, e, 1.0).value, -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)),
                1e-12);
    EXPECT_NEAR(loss_pre(e, e, 1.0).value, 0.3133, 1e-4);
}

TEST(LossPre, PermutationInvariant) {
    const Matrix a = random_matrix(5, 4, 1), b = random_matrix(5, 4, 2);
    Eigen::PermutationMatrix<Eigen::Dynamic> p(5);
    p.indices() << 3, 0, 4, 1, 2;
    EXPECT_NEAR(loss_pre(a, b, 0.1).value, loss_pre(p * a, p * b, 0.1).value, 1e-12);
}

TEST(LossPre, RejectsNonPositiveTau) {
    const Matrix a = random_matrix(3, 4, 1);
    EXPECT_THROW(loss_pre(a, a, 0.0), ConfigError);
    EXPECT_THROW(loss_pre(a, a, -1.0), ConfigError);
}

TEST(LossDis, Examples) {
    EXPECT_NEAR(loss_dis(rows2({{1, 0}}), rows2({{0, 1}})).value, 0.0, 1e-12);
    EXPECT_NEAR(loss_dis(rows2({{1, 0}}), rows2({{-2, 0}})).value, 1.0, 1e-12);
    EXPECT_NEAR(loss_dis(rows2({{1, 1}}), rows2({{1, 0}})).value, 0.70711, 1e-5);
}

TEST(LossDis, ZeroRowIsReported) {
    EXPECT_THROW(loss_dis(rows2({{0, 0}}), rows2({{1, 0}})), TrainingError);
}

TEST(LossDis, ScaleInvariantAndBounded) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Matrix a = random_matrix(6, 5, s), b = random_matrix(6, 5, s + 100);
        const double v = loss_dis(a, b).value;
        EXPECT_NEAR(v, loss_dis(a * -3.5, b * 0.25).value, 1e-12);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(LossDiv, Examples) {
    const Matrix same = Matrix::Ones(4, 3);
    EXPECT_NEAR(loss_div(same, same).value, 2.0, 1e-12);
    const Matrix e = Matrix::Identity(2, 2);
    EXPECT_NEAR(loss_div(e, e).value, 0.0, 1e-12);
    const Matrix a = random_matrix(3, 4, 5), b = random_matrix(3, 4, 6);
    EXPECT_NEAR(loss_div(a, b).value, oracle::loss_div(rows_of(a), rows_of(b)), 1e-12);
}

TEST(LossDiv, NeedsTwoSamples) {
    EXPECT_THROW(loss_div(Matrix::Ones(1, 3), Matrix::Ones(1, 3)), ShapeError);
}

TEST(LossDiv, Bounded) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const double v = loss_div(random_matrix(5, 3, s), random_matrix(5, 3, s + 7)).value;
        EXPECT_GE(v, -2.0);
        EXPECT_LE(v, 2.0);
    }
}

TEST(LossAlign, AllFakeAligned) {
    const Matrix fa = Matrix::Identity(3, 3), fb = Matrix::Identity(3, 3);
    const auto r = loss_align(fa, fb, fa, fb, {1, 1, 1}, 1.0, 1.0);
    EXPECT_NEAR(r.value, -2.0, 1e-12);
    EXPECT_NEAR(r.specific, -1.0, 1e-12);
    EXPECT_NEAR(r.irrelevant, -1.0, 1e-12);
}

TEST(LossAlign, AllRealOrthogonal) {
    const Matrix fa = rows2({{1, 0}, {1, 0}});
    const Matrix ta = rows2({{0, 1}, {0, 2}});
    const Matrix fb = rows2({{0.6, 0.8}, {1, 0}});
    const auto r = loss_align(fa, fb, ta, fb, {0, 0}, 1.0, 1.0);
    EXPECT_NEAR(r.value, -1.0, 1e-12);
}

TEST(LossAlign, FlippingLabelsFlipsOnlySpecificTerm) {
    const Matrix fa = random_matrix(4, 3, 1), fb = random_matrix(4, 3, 2);
    const Matrix ta = random_matrix(4, 3, 3), tb = random_matrix(4, 3, 4);
    const auto a = loss_align(fa, fb, ta, tb, {1, 1, 1, 1}, 1.0, 1.0);
    const auto b = loss_align(fa, fb, ta, tb, {0, 0, 0, 0}, 1.0, 1.0);
    EXPECT_NEAR(a.specific, -b.specific, 1e-12);
    EXPECT_NEAR(a.irrelevant, b.irrelevant, 1e-12);
}

TEST(LossAlign, WeightsAndBounds) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Matrix fa = random_matrix(5, 3, s), fb = random_matrix(5, 3, s + 1);
        const Matrix ta = random_matrix(5, 3, s + 2), tb = random_matrix(5, 3, s + 3);
        const auto y = random_labels(5, s);
        const auto r = loss_align(fa, fb, ta, tb, y, 0.3, 0.7);
        EXPECT_NEAR(r.value, 0.3 * r.specific + 0.7 * r.irrelevant, 1e-12);
        EXPECT_LE(std::abs(r.value), 1.0 + 1e-12);
    }
}

TEST(LossCon, SingletonAnchorContributesZero) {
    const Matrix f = random_matrix(3, 4, 9);
    const double v = loss_con(f, {1, 1, 0}, 0.5).value;
    EXPECT_NEAR(v, oracle::loss_con(rows_of(f), {1, 1, 0}, 0.5), 1e-12);
    // Only anchors 0 and 1 have positives; anchor 2 adds nothing.
    const auto r = rows_of(f);
    double expect = 0.0;
    for (int i : {0, 1}) {
        const int j = 1 - i;
        double den = 0.0;
        for (int k = 0; k < 3; ++k)
            if (k != i) den += std::exp(oracle::cosine(r[i], r[k]) / 0.5);
        expect -= std::log(std::exp(oracle::cosine(r[i], r[j]) / 0.5) / den);
    }
    EXPECT_NEAR(v, expect / 3.0, 1e-12);
}

TEST(LossCon, TwoOrthogonalSameLabel) {
    EXPECT_NEAR(loss_con(Matrix::Identity(2, 2), {1, 1}, 1.0).value, 0.0, 1e-12);
}

TEST(LossCon, ErrorPaths) {
    EXPECT_THROW(loss_con(Matrix::Identity(2, 2), {1, 1}, 0.0), ConfigError);
    EXPECT_THROW(loss_con(Matrix::Identity(1, 2), {1}, 1.0), ShapeError);
}

TEST(CrossEntropy, Examples) {
    EXPECT_NEAR(cross_entropy(rows2({{10, -10}}), {0}).value, 2.06e-9, 1e-11);
    EXPECT_NEAR(cross_entropy(rows2({{0.3, 0.3}, {-1, -1}}), {0, 1}).value, std::log(2.0), 1e-12);
}

TEST(CrossEntropy, PermutationInvariant) {
    const Matrix l = random_matrix(4, 2, 3);
    Eigen::PermutationMatrix<Eigen::Dynamic> p(4);
    p.indices() << 2, 3, 0, 1;
    const Labels y{1, 0, 0, 1};
    Labels py(4);
    for (int i = 0; i < 4; ++i) py[static_cast<std::size_t>(p.indices()(i))] = y[static_cast<std::size_t>(i)];
    EXPECT_NEAR(cross_entropy(l, y).value, cross_entropy(p * l, py).value, 1e-12);
}

TEST(LossCls, MatchesCrossEntropyOfHead) {
    const Matrix f = random_matrix(5, 4, 1), w = random_matrix(4, 2, 2), b = random_matrix(1, 2, 3);
    const Labels y{0, 1, 1, 0, 1};
    Matrix logits = f * w;
    logits.rowwise() += b.row(0);
    EXPECT_NEAR(loss_cls(f, w, b, y).value, oracle::cross_entropy(rows_of(logits), y), 1e-12);
    EXPECT_THROW(loss_cls(f, random_matrix(4, 3, 1), b, y), ShapeError);
}

// ─── Oracle equivalence ────────────────────────────────────────────────────

TEST(LossOracles, FiftySeededBatches) {
    for (std::uint64_t s = 0; s < 50; ++s) {
        const Eigen::Index n = 2 + static_cast<Eigen::Index>(s % 7);  // 2..8
        const Matrix a = random_matrix(n, 5, 10 * s), b = random_matrix(n, 5, 10 * s + 1);
        const Matrix c = random_matrix(n, 5, 10 * s + 2), d = random_matrix(n, 5, 10 * s + 3);
        const auto y = random_labels(static_cast<std::size_t>(n), s);
        EXPECT_NEAR(loss_pre(a, b, 0.07).value, oracle::loss_pre(rows_of(a), rows_of(b), 0.07), 1e-9);
        EXPECT_NEAR(loss_dis(a, b).value, oracle::loss_dis(rows_of(a), rows_of(b)), 1e-9);
        EXPECT_NEAR(loss_div(a, b).value, oracle::loss_div(rows_of(a), rows_of(b)), 1e-9);
        const auto al = loss_align(a, b, c, d, y, 1.0, 1.0);
        const auto ao = oracle::loss_align(rows_of(a), rows_of(b), rows_of(c), rows_of(d), y);
        EXPECT_NEAR(al.specific, ao.specific, 1e-9);
        EXPECT_NEAR(al.irrelevant, ao.irrelevant, 1e-9);
        EXPECT_NEAR(loss_con(a, y, 0.07).value, oracle::loss_con(rows_of(a), y, 0.07), 1e-9);
        const Matrix logits = random_matrix(n, 2, 10 * s + 4, 3.0);
        EXPECT_NEAR(cross_entropy(logits, y).value, oracle::cross_entropy(rows_of(logits), y), 1e-9);
    }
}

// ─── Gradients ─────────────────────────────────────────────────────────────

class LossGradients : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(LossGradients, MatchFiniteDifferences) {
    const std::uint64_t s = GetParam();
    const Eigen::Index n = 3 + static_cast<Eigen::Index>(s % 4);
    const Matrix a = random_matrix(n, 4, s), b = random_matrix(n, 4, s + 50);
    const Matrix c = random_matrix(n, 4, s + 60), d = random_matrix(n, 4, s + 70);
    auto y = random_labels(static_cast<std::size_t>(n), s);
    y[0] = 0;
    y[1] = 1;
    constexpr double kTol = 1e-4;

    const auto pre = loss_pre(a, b, 0.5);
    EXPECT_LT(relative_error(pre.grad_a, numeric_gradient([&](const Matrix& x) { return loss_pre(x, b, 0.5).value; }, a)), kTol);
    EXPECT_LT(relative_error(pre.grad_b, numeric_gradient([&](const Matrix& x) { return loss_pre(a, x, 0.5).value; }, b)), kTol);

    const auto dis = loss_dis(a, b);
    EXPECT_LT(relative_error(dis.grad_a, numeric_gradient([&](const Matrix& x) { return loss_dis(x, b).value; }, a)), kTol);
    EXPECT_LT(relative_error(dis.grad_b, numeric_gradient([&](const Matrix& x) { return loss_dis(a, x).value; }, b)), kTol);

    const auto div = loss_div(a, b);
    EXPECT_LT(relative_error(div.grad_a, numeric_gradient([&](const Matrix& x) { return loss_div(x, b).value; }, a)), kTol);
    EXPECT_LT(relative_error(div.grad_b, numeric_gradient([&](const Matrix& x) { return loss_div(a, x).value; }, b)), kTol);

    const auto al = loss_align(a, b, c, d, y, 0.3, 0.7);
    const auto alv = [&](const Matrix& fa, const Matrix& fb, const Matrix& ta, const Matrix& tb) {
        return loss_align(fa, fb, ta, tb, y, 0.3, 0.7).value;
    };
    EXPECT_LT(relative_error(al.grad_f_a, numeric_gradient([&](const Matrix& x) { return alv(x, b, c, d); }, a)), kTol);
    EXPECT_LT(relative_error(al.grad_f_b, numeric_gradient([&](const Matrix& x) { return alv(a, x, c, d); }, b)), kTol);
    EXPECT_LT(relative_error(al.grad_t_a, numeric_gradient([&](const Matrix& x) { return alv(a, b, x, d); }, c)), kTol);
    EXPECT_LT(relative_error(al.grad_t_b, numeric_gradient([&](const Matrix& x) { return alv(a, b, c, x); }, d)), kTol);

    const auto con = loss_con(a, y, 0.5);
    EXPECT_LT(relative_error(con.grad, numeric_gradient([&](const Matrix& x) { return loss_con(x, y, 0.5).value; }, a)), kTol);

    const Matrix logits = random_matrix(n, 2, s + 80);
    const auto ce = cross_entropy(logits, y);
    EXPECT_LT(relative_error(ce.grad, numeric_gradient([&](const Matrix& x) { return cross_entropy(x, y).value; }, logits)), kTol);

    const Matrix w = random_matrix(4, 2, s + 90), bias = random_matrix(1, 2, s + 91);
    const auto cls = loss_cls(a, w, bias, y);
    EXPECT_LT(relative_error(cls.grad_f, numeric_gradient([&](const Matrix& x) { return loss_cls(x, w, bias, y).value; }, a)), kTol);
    EXPECT_LT(relative_error(cls.grad_weight, numeric_gradient([&](const Matrix& x) { return loss_cls(a, x, bias, y).value; }, w)), kTol);
    EXPECT_LT(relative_error(cls.grad_bias, numeric_gradient([&](const Matrix& x) { return loss_cls(a, w, x, y).value; }, bias)), kTol);
}

INSTANTIATE_TEST_SUITE_P(Seeds, LossGradients, ::testing::Range<std::uint64_t>(0, 8));

TEST(LossNodes, BackwardMatchesAnalytic) {
    const Matrix a = random_matrix(4, 3, 1), b = random_matrix(4, 3, 2);
    const Labels y{0, 1, 1, 0};
    ag::Var va(a, true), vb(b, true);
    ag::Var total = node::loss_dis(va, vb) + node::loss_con(va, y, 0.3) * 2.0;
    ag::backward(total);
    const Matrix expect_a = loss_dis(a, b).grad_a + 2.0 * loss_con(a, y, 0.3).grad;
    EXPECT_LT(relative_error(va.grad(), expect_a), 1e-12);
    EXPECT_LT(relative_error(vb.grad(), loss_dis(a, b).grad_b), 1e-12);
    EXPECT_NEAR(total.value()(0, 0), loss_dis(a, b).value + 2.0 * loss_con(a, y, 0.3).value, 1e-12);
}

// ─── Weighted total ────────────────────────────────────────────────────────

TEST(LossTotal, StepZeroIsClassificationOnly) {
    LossTerms t{0.0, 0.7, 0.3, 1.2, -0.4, -0.8, 5.0};
    const auto r = loss_total(t, LossWeights{}, 0, 1000);
    EXPECT_DOUBLE_EQ(r.total, 0.7);
    EXPECT_EQ(r.weights, EffectiveWeights{});
}

TEST(LossTotal, PostWarmupHandComputed) {
    LossTerms t{0.0, 0.7, 0.3, 1.2, -0.4, -0.8, 5.0};
    const auto r = loss_total(t, LossWeights{}, 100, 1000);
    const double expect = 0.7 + 0.05 * 0.3 + 0.01 * 1.2 + 0.08 * -0.4 + 0.12 * -0.8 + 0.1 * 5.0;
    EXPECT_NEAR(r.total, expect, 1e-12);
    EXPECT_NEAR(r.recomputed_total(), r.total, 1e-9);
    EXPECT_NEAR(r.align(), -1.2, 1e-12);
}

TEST(LossTotal, WarmupRampIsLinear) {
    LossTerms t{0.0, 0.5, 1.0, 1.0, 1.0, 1.0, 1.0};
    const auto r = loss_total(t, LossWeights{}, 25, 1000);  // 25 / 100 of the ramp
    EXPECT_NEAR(r.weights.dis, 0.05 * 0.25, 1e-15);
    EXPECT_NEAR(r.weights.con, 0.1 * 0.25, 1e-15);
}

TEST(LossTotal, ZeroLambdasAndSwitches) {
    LossWeights w;
    w.lambda_dis = w.lambda_div = w.lambda_align_specific = w.lambda_align_irrelevant = w.lambda_con = 0.0;
    LossTerms t{0.0, 0.9, 0.3, 1.2, -0.4, -0.8, 5.0};
    for (std::int64_t step : {0, 10, 500, 1000}) EXPECT_DOUBLE_EQ(loss_total(t, w, step, 1000).total, 0.9);
    const auto off = loss_total(t, LossWeights{}, 900, 1000, LossSwitches{false, false, false, false});
    EXPECT_DOUBLE_EQ(off.total, 0.9);
}

TEST(LossReportLog, RoundTrip) {
    LossTerms t{0.1, 0.7, 0.3, 1.2, -0.4, -0.8, 5.0};
    auto r = loss_total(t, LossWeights{}, 42, 1000);
    r.stage = 2;
    r.learning_rate = 2e-4;
    const std::string line = to_log_line(r);
    EXPECT_EQ(line.find('\n'), std::string::npos);
    EXPECT_EQ(line.rfind("{\"stage\":2,\"step\":42,\"lr\":", 0), 0u);
    const auto back = parse_log_line(line);
    EXPECT_EQ(back.terms, r.terms);
    EXPECT_EQ(back.weights, r.weights);
    EXPECT_EQ(back.total, r.total);
    EXPECT_EQ(back.step, 42);
}
