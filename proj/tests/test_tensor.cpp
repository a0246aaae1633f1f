#include "grad_check.hpp"

#include "csg0/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace csg0;
using csg0::testing::max_grad_error;
using csg0::testing::project;
using csg0::testing::random_tensor;

namespace {

constexpr double kTol = 1e-4;
const std::uint64_t kSeeds[] = {1, 2, 3};

// Keeps relu/leaky_relu inputs away from the kink so central differences stay valid.
Tensor away_from_zero(const Shape& shape, std::uint64_t seed) {
    auto t = random_tensor(shape, seed, 0.1, 1.0, true);
    Rng rng(seed + 99);
    for (auto& v : t.data()) {
        if (rng.bernoulli(0.5)) {
            v = -v;
        }
    }
    return t;
}

} // namespace

TEST(Conv2d, IdentityKernel) {
    auto x = Tensor::from_data({1, 1, 1, 1}, {5.0});
    auto w = Tensor::from_data({1, 1, 1, 1}, {1.0});
    auto b = Tensor::from_data({1}, {0.0});
    EXPECT_EQ(conv2d(x, w, b, 0).item(), 5.0);
}

TEST(Conv2d, FullOverlapCenter) {
    auto x = Tensor::full({1, 1, 3, 3}, 1.0);
    auto w = Tensor::full({1, 1, 3, 3}, 1.0);
    auto b = Tensor::zeros({1});
    auto y = conv2d(x, w, b, 1);
    EXPECT_EQ(y.data()[4], 9.0);
    EXPECT_EQ(y.data()[0], 4.0);
}

TEST(Conv2d, ShapeMismatchNamesBothShapes) {
    auto x = Tensor::zeros({1, 2, 4, 4});
    auto w = Tensor::zeros({3, 5, 3, 3});
    try {
        conv2d(x, w, Tensor::zeros({3}), 1);
        FAIL();
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[1,2,4,4]"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[3,5,3,3]"), std::string::npos) << msg;
    }
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
    for (auto s : kSeeds) {
        auto x = random_tensor({1, 2, 4, 4}, s, -1, 1, true);
        auto w = random_tensor({3, 2, 3, 3}, s + 10, -1, 1, true);
        auto b = random_tensor({3}, s + 20, -1, 1, true);
        auto f = [&] { return project(conv2d(x, w, b, 1), s); };
        EXPECT_LT(max_grad_error(f, {x, w, b}), kTol) << "seed " << s;
    }
}

TEST(Conv2d, ValidPaddingGradient) {
    auto x = random_tensor({2, 3, 5, 4}, 5, -1, 1, true);
    auto w = random_tensor({2, 3, 3, 3}, 6, -1, 1, true);
    auto b = random_tensor({2}, 7, -1, 1, true);
    auto f = [&] { return project(conv2d(x, w, b, 0), 8); };
    EXPECT_LT(max_grad_error(f, {x, w, b}), kTol);
}

TEST(InstanceNorm, ConstantChannelIsZero) {
    auto x = Tensor::full({1, 2, 3, 3}, 4.0);
    auto y = instance_norm(x, Tensor::full({2}, 1.0), Tensor::zeros({2}));
    for (double v : y.data()) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(InstanceNorm, ZeroGammaGivesBeta) {
    auto x = random_tensor({2, 3, 4, 4}, 3);
    auto y = instance_norm(x, Tensor::zeros({3}), Tensor::full({3}, 7.0));
    for (double v : y.data()) {
        EXPECT_EQ(v, 7.0);
    }
}

TEST(InstanceNorm, MomentsMatchDirectRecomputation) {
    const double eps = 1e-5;
    auto x = random_tensor({2, 3, 4, 4}, 11, -3, 3);
    auto y = instance_norm(x, Tensor::full({3}, 1.0), Tensor::zeros({3}), eps);
    const auto xd = x.data();
    const auto yd = y.data();
    for (std::size_t p = 0; p < 6; ++p) {
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < 16; ++i) {
            mx += xd[p * 16 + i];
            my += yd[p * 16 + i];
        }
        mx /= 16;
        my /= 16;
        double vx = 0, vy = 0;
        for (std::size_t i = 0; i < 16; ++i) {
            vx += (xd[p * 16 + i] - mx) * (xd[p * 16 + i] - mx);
            vy += (yd[p * 16 + i] - my) * (yd[p * 16 + i] - my);
        }
        vx /= 16;
        vy /= 16;
        EXPECT_LT(std::abs(my), 1e-10);
        EXPECT_NEAR(vy, vx / (vx + eps), 1e-6);
    }
}

TEST(InstanceNorm, GradientMatchesFiniteDifferences) {
    for (auto s : kSeeds) {
        auto x = random_tensor({2, 3, 3, 3}, s, -2, 2, true);
        auto g = random_tensor({3}, s + 1, 0.5, 1.5, true);
        auto b = random_tensor({3}, s + 2, -1, 1, true);
        auto f = [&] { return project(instance_norm(x, g, b), s); };
        EXPECT_LT(max_grad_error(f, {x, g, b}), kTol) << "seed " << s;
    }
}

TEST(LogSoftmax, EqualLogits) {
    auto y = log_softmax_channels(Tensor::zeros({1, 2, 1, 1}));
    EXPECT_DOUBLE_EQ(y.data()[0], std::log(0.5));
    EXPECT_DOUBLE_EQ(y.data()[1], std::log(0.5));
}

TEST(LogSoftmax, LargeLogitsStayFinite) {
    auto y = log_softmax_channels(Tensor::from_data({1, 2, 1, 1}, {1000.0, 0.0}));
    EXPECT_NEAR(y.data()[0], 0.0, 1e-12);
    EXPECT_NEAR(y.data()[1], -1000.0, 1e-9);
}

TEST(LogSoftmax, ExponentsSumToOne) {
    auto y = log_softmax_channels(random_tensor({2, 5, 3, 3}, 4, -20, 20));
    const auto d = y.data();
    for (std::size_t n = 0; n < 2; ++n) {
        for (std::size_t p = 0; p < 9; ++p) {
            double s = 0;
            for (std::size_t c = 0; c < 5; ++c) {
                s += std::exp(d[(n * 5 + c) * 9 + p]);
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

TEST(LogSoftmax, GradientMatchesFiniteDifferences) {
    for (auto s : kSeeds) {
        auto x = random_tensor({1, 5, 2, 2}, s, -2, 2, true);
        auto f = [&] { return project(log_softmax_channels(x), s); };
        EXPECT_LT(max_grad_error(f, {x}), kTol) << "seed " << s;
    }
}

TEST(Elementwise, TrivialValues) {
    auto up = upsample_nearest(Tensor::from_data({1, 1, 1, 1}, {3.0}), 2);
    ASSERT_EQ(up.shape(), (Shape{1, 1, 2, 2}));
    for (double v : up.data()) {
        EXPECT_EQ(v, 3.0);
    }
    auto r = relu(Tensor::from_data({2}, {-1.0, 2.0}));
    EXPECT_EQ(r.data()[0], 0.0);
    EXPECT_EQ(r.data()[1], 2.0);
    auto l = leaky_relu(Tensor::from_data({2}, {-1.0, 2.0}), 0.2);
    EXPECT_EQ(l.data()[0], -0.2);
    EXPECT_EQ(l.data()[1], 2.0);
    auto p = avg_pool2(Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 6}));
    EXPECT_EQ(p.item(), 3.0);
}

TEST(Elementwise, ShapeMismatchThrows) {
    EXPECT_THROW(add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
    EXPECT_THROW(hadamard(Tensor::zeros({1, 2, 2, 2}), Tensor::zeros({1, 2, 2, 3})), DimensionError);
    EXPECT_THROW(concat_channels({Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 3, 2})}), DimensionError);
}

TEST(Elementwise, GradientsMatchFiniteDifferences) {
    for (auto s : kSeeds) {
        auto a = random_tensor({1, 2, 3, 3}, s, -1, 1, true);
        auto b = random_tensor({1, 2, 3, 3}, s + 1, -1, 1, true);
        auto k = away_from_zero({1, 2, 3, 3}, s + 2);
        auto m = random_tensor({1, 1, 3, 3}, s + 3, 0, 1, true);
        auto c = random_tensor({1, 3, 2, 2}, s + 4, -1, 1, true);
        auto q = random_tensor({1, 2, 4, 4}, s + 5, -1, 1, true);
        EXPECT_LT(max_grad_error([&] { return project(hadamard(a, b), s); }, {a, b}), kTol);
        EXPECT_LT(max_grad_error([&] { return project(add(a, b), s); }, {a, b}), kTol);
        EXPECT_LT(max_grad_error([&] { return project(sub(a, b), s); }, {a, b}), kTol);
        EXPECT_LT(max_grad_error([&] { return project(scale(a, -1.7), s); }, {a}), kTol);
        EXPECT_LT(max_grad_error([&] { return project(relu(k), s); }, {k}), kTol);
        EXPECT_LT(max_grad_error([&] { return project(leaky_relu(k, 0.2), s); }, {k}), kTol);
        EXPECT_LT(max_grad_error([&] { return project(tanh(a), s); }, {a}), kTol);
        EXPECT_LT(max_grad_error([&] { return project(mask_mul(a, m), s); }, {a, m}), kTol);
        EXPECT_LT(max_grad_error([&] { return project(concat_channels({a, m}), s); }, {a, m}), kTol);
        EXPECT_LT(max_grad_error([&] { return project(slice_channels(c, 1, 3), s); }, {c}), kTol);
        EXPECT_LT(max_grad_error([&] { return project(upsample_nearest(c, 2), s); }, {c}), kTol);
        EXPECT_LT(max_grad_error([&] { return project(avg_pool2(q), s); }, {q}), kTol);
        EXPECT_LT(max_grad_error([&] { return mean(hadamard(a, a)); }, {a}), kTol);
        EXPECT_LT(max_grad_error([&] { return mean_squared_error(a, b); }, {a, b}), kTol);
    }
}

TEST(Backward, SumGivesOnes) {
    auto x = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
    backward(sum(x));
    for (double g : x.grad()) {
        EXPECT_EQ(g, 1.0);
    }
}

TEST(Backward, SquareGivesTwoX) {
    auto x = Tensor::from_data({2}, {1.0, 2.0}, true);
    backward(sum(hadamard(x, x)));
    EXPECT_EQ(x.grad()[0], 2.0);
    EXPECT_EQ(x.grad()[1], 4.0);
}

TEST(Backward, RepeatedCallsAccumulate) {
    auto x = Tensor::from_data({2}, {1.0, 2.0}, true);
    backward(sum(x));
    backward(sum(x));
    EXPECT_EQ(x.grad()[0], 2.0);
    x.zero_grad();
    backward(sum(x));
    EXPECT_EQ(x.grad()[0], 1.0);
}

TEST(Backward, NonScalarIsContractError) {
    auto x = Tensor::from_data({2}, {1.0, 2.0}, true);
    EXPECT_THROW(backward(relu(x)), ContractError);
}

TEST(Backward, ComposedConvReluSum) {
    for (auto s : kSeeds) {
        auto x = random_tensor({1, 2, 4, 4}, s, -1, 1, true);
        auto w = random_tensor({3, 2, 3, 3}, s + 1, -1, 1, true);
        auto b = random_tensor({3}, s + 2, -1, 1, true);
        auto w2 = random_tensor({2, 3, 3, 3}, s + 3, -1, 1, true);
        auto b2 = random_tensor({2}, s + 4, -1, 1, true);
        auto f = [&] { return sum(tanh(conv2d(leaky_relu(conv2d(x, w, b, 1), 0.2), w2, b2, 1))); };
        EXPECT_LT(max_grad_error(f, {x, w, b, w2, b2}), kTol) << "seed " << s;
    }
}

TEST(NoGrad, GuardSkipsGraph) {
    auto x = Tensor::from_data({2}, {1.0, 2.0}, true);
    Tensor y;
    {
        NoGradGuard g;
        EXPECT_FALSE(grad_enabled());
        y = hadamard(x, x);
    }
    EXPECT_TRUE(grad_enabled());
    EXPECT_FALSE(y.requires_grad());
}

TEST(Finiteness, FiniteInputsGiveFiniteOutputs) {
    auto x = random_tensor({1, 3, 4, 4}, 9, -50, 50);
    auto w = random_tensor({2, 3, 3, 3}, 10, -5, 5);
    std::vector<Tensor> outs{conv2d(x, w, Tensor::zeros({2}), 1),
                             instance_norm(x, Tensor::full({3}, 1.0), Tensor::zeros({3})),
                             log_softmax_channels(scale(x, 100.0)),
                             tanh(x),
                             avg_pool2(x)};
    for (const auto& o : outs) {
        for (double v : o.data()) {
            EXPECT_TRUE(std::isfinite(v));
        }
    }
}
