#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"
#include "wdrn/gradcheck.hpp"
#include "wdrn/tensor.hpp"

using namespace wdrn;
using wdrn::test::random_tensor;
using wdrn::test::values;

namespace {

Tensor<double> vec(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor<double>(Shape{1, 1, n, 1}, std::move(v));
}

}  // namespace

TEST(Shape, RejectsZeroExtent) {
    EXPECT_THROW(Tensor<float>(Shape{1, 0, 3, 1}), ShapeError);
    EXPECT_THROW(Tensor<float>(Shape{0, 1, 1, 1}), ShapeError);
}

TEST(Shape, RejectsIndexOverflow) {
    const std::size_t big = std::size_t{1} << 40;
    EXPECT_THROW(validate_shape(Shape{big, big, 1, 1}), ShapeError);
}

TEST(Tensor, ValueCountMustMatchShape) {
    EXPECT_THROW(Tensor<float>(Shape{1, 2, 2, 1}, std::vector<float>{1, 2, 3}), ShapeError);
}

TEST(Tensor, LayoutIsChannelsInnermost) {
    Tensor<float> t(Shape{2, 3, 4, 5});
    EXPECT_EQ(t.index(0, 0, 0, 1), 1u);
    EXPECT_EQ(t.index(0, 0, 1, 0), 5u);
    EXPECT_EQ(t.index(0, 1, 0, 0), 20u);
    EXPECT_EQ(t.index(1, 0, 0, 0), 60u);
}

TEST(Relu, ClampsNegativesAndZero) {
    EXPECT_EQ(values(relu(vec({-1, 0, 2}))), (std::vector<double>{0, 0, 2}));
}

TEST(Relu, DeadRegionHasZeroGradient) {
    Tensor<double> x(Shape{1, 2, 2, 1}, -3.0);
    x.set_requires_grad(true);
    const auto y = relu(x);
    for (double v : y.data()) EXPECT_EQ(v, 0.0);
    backward(reduce_mean(y));
    for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Relu, GradientAtExactlyZeroIsZero) {
    auto x = vec({0.0, 1.0});
    x.set_requires_grad(true);
    backward(reduce_mean(relu(x)));
    EXPECT_EQ(x.grad()[0], 0.0);
    EXPECT_EQ(x.grad()[1], 0.5);
}

TEST(Relu, FiniteDifferencesAwayFromKinkSinglePrecision) {
    std::mt19937_64 rng(3);
    auto x = random_tensor<float>(Shape{1, 4, 4, 2}, rng);
    for (auto& v : x.data()) {
        if (std::abs(v) < 1e-3f) v = 0.5f;
    }
    const ScalarFn<float> f = [](const Tensor<float>& t) { return reduce_mean(mul(relu(t), relu(t))); };
    std::vector<std::size_t> idx(x.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const auto a = analytic_grad_at<float>(f, x, idx);
    const auto n = finite_diff_grad_at<float>(f, x, idx, 1e-4);
    EXPECT_LT(relative_error(a, n), 1e-3);
}

TEST(Add, AdditiveIdentity) {
    const auto a = vec({1.5, -2, 3});
    EXPECT_EQ(values(add(a, vec({0, 0, 0}))), values(a));
}

TEST(Add, Example) { EXPECT_EQ(values(add(vec({1, 2}), vec({3, 4}))), (std::vector<double>{4, 6})); }

TEST(Add, GradientOfSumIsOnes) {
    auto a = vec({1, 2, 3});
    a.set_requires_grad(true);
    // mean * n == sum
    backward(scalar_mul(reduce_mean(add(a, vec({4, 5, 6}))), 3.0));
    for (double g : a.grad()) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(Elementwise, ShapeMismatchRejected) {
    const Tensor<float> a(Shape{1, 2, 2, 1});
    const Tensor<float> b(Shape{1, 2, 1, 2});
    EXPECT_THROW(add(a, b), ShapeError);
    EXPECT_THROW(sub(a, b), ShapeError);
    EXPECT_THROW(mul(a, b), ShapeError);
    EXPECT_THROW(div(a, b), ShapeError);
}

TEST(ReduceMean, Example) { EXPECT_EQ(reduce_mean(vec({1, 2, 3, 6})).item(), 3.0); }

TEST(Abs, Example) { EXPECT_EQ(values(abs(vec({-2, 3}))), (std::vector<double>{2, 3})); }

TEST(Abs, MeanAbsDifferenceGradient) {
    auto a = vec({1, 0});
    a.set_requires_grad(true);
    backward(reduce_mean(abs(sub(a, vec({0, 0})))));
    EXPECT_EQ(a.grad()[0], 0.5);
    EXPECT_EQ(a.grad()[1], 0.0);
}

TEST(Elementwise, ExactAgainstScalarLoops) {
    std::mt19937_64 rng(11);
    const Shape s{2, 3, 4, 2};
    const auto a = random_tensor<float>(s, rng);
    const auto b = random_tensor<float>(s, rng);
    const auto sum = add(a, b), diff = sub(a, b), prod = mul(a, b), mag = abs(a), sc = scalar_mul(a, 2.5f);
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(sum.data()[i], a.data()[i] + b.data()[i]);
        EXPECT_EQ(diff.data()[i], a.data()[i] - b.data()[i]);
        EXPECT_EQ(prod.data()[i], a.data()[i] * b.data()[i]);
        EXPECT_EQ(mag.data()[i], std::abs(a.data()[i]));
        EXPECT_EQ(sc.data()[i], a.data()[i] * 2.5f);
        acc += a.data()[i];
    }
    EXPECT_EQ(reduce_mean(a).item(), static_cast<float>(acc / static_cast<double>(a.size())));
}

TEST(Backward, LinearLossGradient) {
    auto w = vec({0.5, -1, 2, 3});
    const auto x = vec({1, 2, 3, 4});
    w.set_requires_grad(true);
    backward(reduce_mean(mul(w, x)));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(w.grad()[i], x.data()[i] / 4.0);
}

TEST(Backward, IndependentLossGivesZeroGradient) {
    auto w = vec({1, 2});
    w.set_requires_grad(true);
    auto x = vec({3, 4});
    x.set_requires_grad(true);
    backward(reduce_mean(x));
    for (double g : w.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, DiamondFanOutAccumulates) {
    auto w = vec({1.0});
    w.set_requires_grad(true);
    backward(add(w, w));
    EXPECT_EQ(w.grad()[0], 2.0);
}

TEST(Backward, FanOutOfNMultipliesGradient) {
    for (int n = 1; n <= 5; ++n) {
        auto w = vec({0.3, -0.7});
        w.set_requires_grad(true);
        Tensor<double> acc = scalar_mul(w, 2.0);
        for (int k = 1; k < n; ++k) acc = add(acc, scalar_mul(w, 2.0));
        backward(reduce_mean(acc));
        for (double g : w.grad()) EXPECT_DOUBLE_EQ(g, static_cast<double>(n) * 1.0);
    }
}

TEST(Backward, NonScalarRejected) {
    auto w = vec({1, 2});
    w.set_requires_grad(true);
    EXPECT_THROW(backward(add(w, w)), ShapeError);
}

TEST(Backward, SecondCallOnConsumedGraphRejected) {
    auto w = vec({1, 2});
    w.set_requires_grad(true);
    const auto loss = reduce_mean(mul(w, w));
    backward(loss);
    EXPECT_THROW(backward(loss), std::logic_error);
}

TEST(Backward, NoGradGuardSkipsRecording) {
    auto w = vec({1, 2});
    w.set_requires_grad(true);
    Tensor<double> y;
    {
        NoGradGuard g;
        y = reduce_mean(mul(w, w));
    }
    EXPECT_FALSE(y.requires_grad());
    backward(y);
    for (double g : w.grad()) EXPECT_EQ(g, 0.0);
}

TEST(FiniteDiff, SumGivesOnes) {
    const ScalarFn<double> f = [](const Tensor<double>& t) {
        return scalar_mul(reduce_mean(t), static_cast<double>(t.size()));
    };
    const auto g = finite_diff_grad<double>(f, vec({0.3, -2, 7}), 1e-6);
    for (double v : g.data()) EXPECT_NEAR(v, 1.0, 1e-8);
}

TEST(FiniteDiff, MeanOfSquares) {
    const ScalarFn<double> f = [](const Tensor<double>& t) { return reduce_mean(mul(t, t)); };
    const auto g = finite_diff_grad<double>(f, vec({1, 2}), 1e-6);
    EXPECT_NEAR(g.data()[0], 1.0, 1e-8);
    EXPECT_NEAR(g.data()[1], 2.0, 1e-8);
}

TEST(FiniteDiff, RejectsNonPositiveEps) {
    const ScalarFn<double> f = [](const Tensor<double>& t) { return reduce_mean(t); };
    EXPECT_THROW(finite_diff_grad<double>(f, vec({1}), 0.0), std::invalid_argument);
}

TEST(FiniteDiff, DoesNotModifyInput) {
    const ScalarFn<double> f = [](const Tensor<double>& t) { return reduce_mean(mul(t, t)); };
    const auto x = vec({1, 2});
    finite_diff_grad<double>(f, x, 1e-3);
    EXPECT_EQ(values(x), (std::vector<double>{1, 2}));
}

// Every elementwise op, double precision, inputs in [-1, 1] away from kinks.
TEST(Property, ElementwiseBackwardMatchesFiniteDifferences) {
    std::mt19937_64 rng(21);
    const Shape s{2, 3, 4, 2};
    auto a = random_tensor<double>(s, rng);
    for (auto& v : a.data()) {
        if (std::abs(v) < 1e-3) v = 0.25;
    }
    const auto b = random_tensor<double>(s, rng);
    const auto pos = random_tensor<double>(s, rng, 0.5, 1.5);
    const auto w = random_tensor<double>(s, rng);
    std::vector<std::size_t> idx(a.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const std::vector<std::pair<const char*, ScalarFn<double>>> fns{
        {"add", [&](const Tensor<double>& t) { return reduce_mean(mul(add(t, b), w)); }},
        {"sub", [&](const Tensor<double>& t) { return reduce_mean(mul(sub(b, t), w)); }},
        {"mul", [&](const Tensor<double>& t) { return reduce_mean(mul(mul(t, b), w)); }},
        {"div", [&](const Tensor<double>& t) { return reduce_mean(mul(div(t, pos), w)); }},
        {"div_den", [&](const Tensor<double>& t) { return reduce_mean(mul(div(b, add_scalar(abs(t), 0.5)), w)); }},
        {"abs", [&](const Tensor<double>& t) { return reduce_mean(mul(abs(t), w)); }},
        {"relu", [&](const Tensor<double>& t) { return reduce_mean(mul(relu(t), w)); }},
        {"scalar_mul", [&](const Tensor<double>& t) { return reduce_mean(mul(scalar_mul(t, -3.0), w)); }},
        {"add_scalar", [&](const Tensor<double>& t) { return reduce_mean(mul(add_scalar(t, 0.7), w)); }},
        {"mean", [&](const Tensor<double>& t) { return reduce_mean(t); }},
    };
    for (const auto& [name, f] : fns) {
        const auto an = analytic_grad_at<double>(f, a, idx);
        const auto fd = finite_diff_grad_at<double>(f, a, idx, 1e-6);
        EXPECT_LT(relative_error(an, fd), 1e-5) << name;
    }
}

TEST(RelativeError, Definition) {
    const std::vector<double> a{1.0, 2.0}, b{1.0, 2.1};
    EXPECT_NEAR(relative_error(a, b), 0.1 / 2.1, 1e-15);
    EXPECT_EQ(relative_error(std::vector<double>{0.0}, std::vector<double>{0.0}), 0.0);
}

TEST(Tensor, CastAndClone) {
    const auto a = vec({0.1, 0.2});
    auto c = a.clone();
    c.data()[0] = 5;
    EXPECT_EQ(a.data()[0], 0.1);
    const auto f = a.cast<float>();
    EXPECT_EQ(f.data()[1], 0.2f);
}
