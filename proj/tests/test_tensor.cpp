#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "setr/errors.hpp"
#include "setr/tensor.hpp"
#include "test_util.hpp"

namespace setr {
namespace {

using Td = Tensor<double>;

void expect_values(const Td& t, const std::vector<double>& want, double tol = 1e-12) {
    ASSERT_EQ(t.numel(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(t.data()[i], want[i], tol) << "at " << i;
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
    Tape<double> tape(false);
    auto a = Td::from({2, 2}, {1, 2, 3, 4});
    auto eye = Td::from({2, 2}, {1, 0, 0, 1});
    expect_values(matmul(tape, a, eye), {1, 2, 3, 4});
}

TEST(Matmul, HandComputedProduct) {
    Tape<double> tape(false);
    auto a = Td::from({2, 2}, {1, 2, 3, 4});
    auto b = Td::from({2, 2}, {5, 6, 7, 8});
    // 1*5+2*7, 1*6+2*8, 3*5+4*7, 3*6+4*8
    expect_values(matmul(tape, a, b), {19, 22, 43, 50});
}

TEST(Matmul, ZerosAnnihilate) {
    Tape<double> tape(false);
    auto out = matmul(tape, Td::zeros({2, 3}), Td::full({3, 4}, 1.0));
    EXPECT_EQ(out.shape(), (Shape{2, 4}));
    expect_values(out, std::vector<double>(8, 0.0));
}

TEST(Matmul, BatchedLeadingAxes) {
    Tape<double> tape(false);
    Rng rng(3);
    auto a = test::random_tensor<double>(rng, {2, 3, 4, 5});
    auto b = test::random_tensor<double>(rng, {5, 2});
    auto out = matmul(tape, a, b);
    ASSERT_EQ(out.shape(), (Shape{2, 3, 4, 2}));
    for (std::size_t r = 0; r < 24; ++r) {
        for (std::size_t j = 0; j < 2; ++j) {
            double acc = 0;
            for (std::size_t k = 0; k < 5; ++k) acc += a.data()[r * 5 + k] * b.data()[k * 2 + j];
            EXPECT_NEAR(out.data()[r * 2 + j], acc, 1e-12);
        }
    }
}

TEST(Matmul, MismatchNamesBothShapes) {
    Tape<double> tape(false);
    try {
        matmul(tape, Td::zeros({2, 3}), Td::zeros({4, 5}));
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[4,5]"), std::string::npos) << msg;
    }
}

TEST(Bmm, TransposedRightOperand) {
    Tape<double> tape(false);
    Rng rng(4);
    auto a = test::random_tensor<double>(rng, {3, 2, 4});
    auto b = test::random_tensor<double>(rng, {3, 5, 4});
    auto out = bmm(tape, a, b, true);
    ASSERT_EQ(out.shape(), (Shape{3, 2, 5}));
    for (std::size_t n = 0; n < 3; ++n)
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 5; ++j) {
                double acc = 0;
                for (std::size_t k = 0; k < 4; ++k) acc += a.at({n, i, k}) * b.at({n, j, k});
                EXPECT_NEAR(out.at({n, i, j}), acc, 1e-12);
            }
}

TEST(Elementwise, AddHandArithmetic) {
    Tape<double> tape(false);
    auto x = Td::from({3}, {1, 2, 3});
    expect_values(add(tape, x, x), {2, 4, 6});
}

TEST(Elementwise, Identities) {
    Tape<double> tape(false);
    Rng rng(5);
    auto x = test::random_tensor<double>(rng, {4, 3});
    expect_values(mul(tape, x, Td::full({4, 3}, 1.0)), {x.data().begin(), x.data().end()}, 0.0);
    expect_values(add(tape, x, Td::zeros({4, 3})), {x.data().begin(), x.data().end()}, 0.0);
    expect_values(sub(tape, x, x), std::vector<double>(12, 0.0), 0.0);
}

TEST(Elementwise, TrailingAxisBroadcast) {
    Tape<double> tape(false);
    auto x = Td::from({2, 3}, {1, 2, 3, 4, 5, 6});
    auto row = Td::from({3}, {10, 20, 30});
    expect_values(add(tape, x, row), {11, 22, 33, 14, 25, 36});
    auto col = Td::from({2, 1}, {2, 3});
    expect_values(mul(tape, x, col), {2, 4, 6, 12, 15, 18});
    expect_values(scale(tape, x, 0.5), {0.5, 1, 1.5, 2, 2.5, 3});
}

TEST(Elementwise, NonBroadcastableIsDimensionError) {
    Tape<double> tape(false);
    EXPECT_THROW(add(tape, Td::zeros({2, 3}), Td::zeros({2})), DimensionError);
    EXPECT_THROW(mul(tape, Td::zeros({2, 3}), Td::zeros({3, 3})), DimensionError);
}

TEST(Activation, Definitions) {
    Tape<double> tape(false);
    EXPECT_DOUBLE_EQ(sigmoid(tape, Td::scalar(0.0)).item(), 0.5);
    EXPECT_DOUBLE_EQ(tanh(tape, Td::scalar(0.0)).item(), 0.0);
    expect_values(relu(tape, Td::from({3}, {-1, 0, 2})), {0, 0, 2}, 0.0);
}

TEST(Activation, SigmoidStableAtExtremes) {
    Tape<double> tape(false);
    auto s = sigmoid(tape, Td::from({2}, {-800.0, 800.0}));
    EXPECT_TRUE(s.all_finite());
    EXPECT_EQ(s.data()[0], 0.0);
    EXPECT_EQ(s.data()[1], 1.0);
}

TEST(Activation, ReluGradientAtZeroIsZero) {
    Tape<double> tape;
    auto x = Td::from({3}, {-1, 0, 2}, true);
    tape.backward(sum(tape, relu(tape, x)));
    expect_values(Td::from({3}, {x.grad().begin(), x.grad().end()}), {0, 0, 1}, 0.0);
}

TEST(Softmax, Symmetry) {
    Tape<double> tape(false);
    expect_values(softmax(tape, Td::zeros({3}), 0), {1.0 / 3, 1.0 / 3, 1.0 / 3});
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
    Tape<float> tape(false);
    auto out = softmax(tape, Tensor<float>::from({2}, {1000.0f, 1000.0f}), 0);
    EXPECT_FLOAT_EQ(out.data()[0], 0.5f);
    EXPECT_FLOAT_EQ(out.data()[1], 0.5f);
}

TEST(Softmax, HighPrecisionOracle) {
    Tape<double> tape(false);
    const long double e1 = std::exp(1.0L), e2 = std::exp(2.0L);
    auto out = softmax(tape, Td::from({2}, {1, 2}), 0);
    EXPECT_NEAR(out.data()[0], static_cast<double>(e1 / (e1 + e2)), 1e-12);
    EXPECT_NEAR(out.data()[1], static_cast<double>(e2 / (e1 + e2)), 1e-12);
    EXPECT_NEAR(out.data()[1], 0.73106, 1e-5);
}

TEST(Softmax, InnerAxis) {
    Tape<double> tape(false);
    auto x = Td::from({2, 2}, {0, 5, 0, 5});
    auto out = softmax(tape, x, 0);
    expect_values(out, {0.5, 0.5, 0.5, 0.5});
    EXPECT_THROW(softmax(tape, x, 2), DimensionError);
}

TEST(LayerNorm, ConstantSliceCollapsesToBeta) {
    Tape<double> tape(false);
    auto out = layer_norm(tape, Td::full({4}, 5.0), Td::full({4}, 1.0), Td::zeros({4}));
    expect_values(out, {0, 0, 0, 0});
}

TEST(LayerNorm, HandComputedPair) {
    Tape<double> tape(false);
    // mean 2, population std 1
    auto out = layer_norm(tape, Td::from({2}, {1, 3}), Td::full({2}, 1.0), Td::zeros({2}), 0.0);
    expect_values(out, {-1, 1});
}

TEST(LayerNorm, ZeroGammaGivesBeta) {
    Tape<double> tape(false);
    Rng rng(6);
    auto out = layer_norm(tape, test::random_tensor<double>(rng, {3, 4}), Td::zeros({4}), Td::full({4}, 7.0));
    expect_values(out, std::vector<double>(12, 7.0));
}

TEST(LayerNorm, ParameterShapeMismatch) {
    Tape<double> tape(false);
    EXPECT_THROW(layer_norm(tape, Td::zeros({3, 4}), Td::zeros({3}), Td::zeros({4})), DimensionError);
}

TEST(ReduceMean, HandArithmetic) {
    Tape<double> tape(false);
    auto out = reduce_mean(tape, Td::from({2, 2}, {1, 3, 3, 5}), 0);
    EXPECT_EQ(out.shape(), (Shape{2}));
    expect_values(out, {2, 4});
}

TEST(ReduceMean, ConstantAndSizeOneAxis) {
    Tape<double> tape(false);
    EXPECT_DOUBLE_EQ(reduce_mean(tape, Td::full({5}, 2.5), 0).item(), 2.5);
    auto x = Td::from({1, 3}, {1, 2, 3});
    auto out = reduce_mean(tape, x, 0);
    EXPECT_EQ(out.shape(), (Shape{3}));
    expect_values(out, {1, 2, 3}, 0.0);
    EXPECT_THROW(reduce_mean(tape, x, 2), DimensionError);
}

TEST(Backward, SquareGradient) {
    Tape<double> tape;
    auto x = Td::from({1}, {3}, true);
    tape.backward(sum(tape, mul(tape, x, x)));
    EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, MatmulSumGradientIsOnesTimesBTransposed) {
    Tape<double> tape;
    Rng rng(7);
    auto a = test::random_tensor<double>(rng, {3, 4});
    auto b = test::random_tensor<double>(rng, {4, 2});
    a.set_requires_grad(true);
    tape.backward(sum(tape, matmul(tape, a, b)));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 4; ++k) {
            const double want = b.at({k, 0}) + b.at({k, 1});
            EXPECT_NEAR(a.grad()[i * 4 + k], want, 1e-12);
        }
}

TEST(Backward, UnreachableLeafStaysZero) {
    Tape<double> tape;
    auto x = Td::from({2}, {1, 2}, true);
    auto y = Td::from({2}, {3, 4}, true);
    tape.backward(sum(tape, x));
    EXPECT_FALSE(y.has_grad() && (y.grad()[0] != 0.0 || y.grad()[1] != 0.0));
}

TEST(Backward, Contracts) {
    {
        Tape<double> tape;
        auto x = Td::from({2}, {1, 2}, true);
        EXPECT_THROW(tape.backward(scale(tape, x, 2.0)), ContractError);
    }
    {
        Tape<double> tape;
        auto x = Td::from({2}, {1, 2}, true);
        auto loss = sum(tape, x);
        tape.backward(loss);
        EXPECT_THROW(tape.backward(loss), ContractError);
    }
    {
        Tape<double> tape(false);
        auto x = Td::from({2}, {1, 2}, true);
        EXPECT_THROW(tape.backward(sum(tape, x)), ContractError);
    }
}

TEST(Backward, GradientsAccumulateAcrossUses) {
    Tape<double> tape;
    auto x = Td::from({2}, {1, 2}, true);
    tape.backward(sum(tape, add(tape, x, scale(tape, x, 3.0))));
    EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
    EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
}

TEST(CrossEntropy, ExamplesFromClosedForm) {
    Tape<double> tape(false);
    std::vector<int> label0{0};
    EXPECT_NEAR(cross_entropy(tape, Td::zeros({1, 6}), std::span<const int>(label0)).item(), std::log(6.0), 1e-12);
    auto hot = Td::from({1, 3}, {30, 0, 0});
    EXPECT_LT(cross_entropy(tape, hot, std::span<const int>(label0)).item(), 1e-9);
    std::vector<int> label1{1};
    const double want = -std::log(std::exp(2.0) / (std::exp(1.0) + std::exp(2.0)));
    EXPECT_NEAR(cross_entropy(tape, Td::from({1, 2}, {1, 2}), std::span<const int>(label1)).item(), want, 1e-12);
    EXPECT_NEAR(want, 0.3133, 1e-4);
    std::vector<int> bad{2};
    EXPECT_THROW(cross_entropy(tape, Td::from({1, 2}, {1, 2}), std::span<const int>(bad)), ContractError);
}

TEST(Tensor, ShapeValidation) {
    EXPECT_THROW(Td::from({2, 2}, {1, 2, 3}), DimensionError);
    EXPECT_THROW(Td::zeros({2, 0}), DimensionError);
    EXPECT_EQ(Shape{}.numel(), 1u);
}

}  // namespace
}  // namespace setr
