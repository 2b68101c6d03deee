#include "fcst/error.hpp"
#include "fcst/tensor.hpp"
#include "support/grad_check.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fcst;
using namespace fcst::nn;
using fcst::testing::gradient_error;
using fcst::testing::random_tensor;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Direct evaluation of the dilated causal convolution sum for a single item.
std::vector<double> naive_conv(const std::vector<double>& x, std::size_t c_in, std::size_t T,
                               const std::vector<double>& k, std::size_t c_out, std::size_t K, std::size_t d) {
    std::vector<double> y(c_out * T, 0.0);
    for (std::size_t c = 0; c < c_out; ++c) {
        for (std::size_t t = 0; t < T; ++t) {
            double acc = 0.0;
            for (std::size_t i = 0; i < c_in; ++i) {
                for (std::size_t j = 0; j < K; ++j) {
                    const long src = static_cast<long>(t) - static_cast<long>((K - 1 - j) * d);
                    if (src < 0) continue;
                    acc += k[(c * c_in + i) * K + j] * x[i * T + static_cast<std::size_t>(src)];
                }
            }
            y[c * T + t] = acc;
        }
    }
    return y;
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no fcst::Error thrown";
    return ErrorCode::UsageError;
}

constexpr double kGradTol = 1e-6;

}  // namespace

TEST(Ops, MatmulHandExample) {
    const auto a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    const auto b = Tensor::from_data({2, 1}, {5, 6});
    const auto c = matmul(a, b);
    EXPECT_EQ(c.shape(), (Shape{2, 1}));
    EXPECT_EQ(values(c), (std::vector<double>{17, 39}));
    EXPECT_EQ(code_of([&] { matmul(b, b); }), ErrorCode::ShapeMismatch);
}

TEST(Ops, MatmulMatchesTripleLoop) {
    SeededRng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + rng.below(9);
        const std::size_t k = 1 + rng.below(9);
        const std::size_t n = 1 + rng.below(9);
        const auto a = random_tensor({m, k}, rng, false);
        const auto b = random_tensor({k, n}, rng, false);
        const auto c = matmul(a, b);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += a.data()[i * k + p] * b.data()[p * n + j];
                EXPECT_NEAR(c.data()[i * n + j], acc, 1e-12);
            }
        }
    }
}

TEST(Ops, Activations) {
    const auto x = Tensor::from_data({1, 3}, {-1.0, 0.0, 2.0});
    EXPECT_EQ(values(relu(x)), (std::vector<double>{0.0, 0.0, 2.0}));
    EXPECT_EQ(sigmoid(x).data()[1], 0.5);
    EXPECT_EQ(tanh(x).data()[1], 0.0);
    EXPECT_NEAR(sigmoid(x).data()[0], 1.0 / (1.0 + std::exp(1.0)), 1e-15);
    EXPECT_NEAR(tanh(x).data()[2], std::tanh(2.0), 1e-15);
    // No overflow at the extremes.
    const auto big = Tensor::from_data({2}, {-800.0, 800.0});
    EXPECT_EQ(values(sigmoid(big)), (std::vector<double>{0.0, 1.0}));
}

TEST(Ops, ElementwiseAndReductions) {
    const auto a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    const auto b = Tensor::from_data({2, 2}, {4, 3, 2, 1});
    EXPECT_EQ(values(add(a, b)), (std::vector<double>{5, 5, 5, 5}));
    EXPECT_EQ(values(sub(a, b)), (std::vector<double>{-3, -1, 1, 3}));
    EXPECT_EQ(values(mul(a, b)), (std::vector<double>{4, 6, 6, 4}));
    EXPECT_EQ(sum(a).item(), 10.0);
    EXPECT_EQ(values(add_row_bias(a, Tensor::from_data({2}, {10, 20}))), (std::vector<double>{11, 22, 13, 24}));
    EXPECT_EQ(code_of([&] { add(a, Tensor::zeros({4})); }), ErrorCode::ShapeMismatch);
}

TEST(Ops, MseLoss) {
    const auto p = Tensor::from_data({2, 1}, {1, 2});
    const auto t = Tensor::from_data({2, 1}, {0, 0});
    EXPECT_EQ(mse_loss(p, t).item(), 2.5);
    EXPECT_EQ(mse_loss(p, p).item(), 0.0);
}

TEST(Ops, SlicingAndReshape) {
    const auto a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(values(slice_cols(a, 1, 3)), (std::vector<double>{2, 3, 5, 6}));
    EXPECT_EQ(values(slice_rows(a, 1, 2)), (std::vector<double>{4, 5, 6}));
    EXPECT_EQ(values(concat_cols(a, slice_cols(a, 0, 1))), (std::vector<double>{1, 2, 3, 1, 4, 5, 6, 4}));
    const std::vector<Tensor> parts{a, slice_rows(a, 0, 1)};
    EXPECT_EQ(values(concat_rows(parts)), (std::vector<double>{1, 2, 3, 4, 5, 6, 1, 2, 3}));
    EXPECT_EQ(reshape(a, {3, 2}).shape(), (Shape{3, 2}));
    EXPECT_EQ(values(select_time(a, 2)), (std::vector<double>{3, 6}));
    EXPECT_EQ(code_of([&] { reshape(a, {4, 2}); }), ErrorCode::ShapeMismatch);
    EXPECT_EQ(code_of([&] { slice_cols(a, 2, 5); }), ErrorCode::ShapeMismatch);
}

TEST(Conv, DilatedHandExample) {
    const auto x = Tensor::from_data({1, 4}, {1, 2, 3, 4});
    const auto k = Tensor::from_data({1, 1, 2}, {1, 1});
    EXPECT_EQ(values(causal_conv1d(x, k, 2)), (std::vector<double>{1, 2, 4, 6}));
}

TEST(Conv, IdentityKernel) {
    SeededRng rng(2);
    const auto x = random_tensor({1, 30}, rng, false);
    const auto k = Tensor::from_data({1, 1, 3}, {0, 0, 1});
    for (std::size_t d : {1u, 2u, 4u}) EXPECT_EQ(values(causal_conv1d(x, k, d)), values(x));
}

TEST(Conv, MatchesDirectSum) {
    SeededRng rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t c_in = 1 + rng.below(3);
        const std::size_t c_out = 1 + rng.below(3);
        const std::size_t K = 1 + rng.below(4);
        const std::size_t d = 1 + rng.below(4);
        const std::size_t T = 1 + rng.below(20);
        const auto x = random_tensor({c_in, T}, rng, false);
        const auto k = random_tensor({c_out, c_in, K}, rng, false);
        const auto y = causal_conv1d(x, k, d);
        const auto oracle = naive_conv(values(x), c_in, T, values(k), c_out, K, d);
        ASSERT_EQ(y.shape(), (Shape{c_out, T}));
        for (std::size_t i = 0; i < oracle.size(); ++i) EXPECT_NEAR(y.data()[i], oracle[i], 1e-12);
    }
}

TEST(Conv, BatchedEqualsPerItem) {
    SeededRng rng(9);
    const auto x = random_tensor({3, 2, 11}, rng, false);
    const auto k = random_tensor({4, 2, 3}, rng, false);
    const auto y = causal_conv1d(x, k, 2);
    ASSERT_EQ(y.shape(), (Shape{3, 4, 11}));
    for (std::size_t b = 0; b < 3; ++b) {
        const auto item = causal_conv1d(reshape(slice_rows(reshape(x, {3, 22}), b, b + 1), {2, 11}), k, 2);
        for (std::size_t i = 0; i < 44; ++i) EXPECT_EQ(y.data()[b * 44 + i], item.data()[i]);
    }
}

TEST(Conv, CausalityProbe) {
    SeededRng rng(10);
    for (std::size_t K = 1; K <= 5; ++K) {
        for (std::size_t d : {1u, 2u, 3u, 8u}) {
            const std::size_t T = 40;
            const auto x = random_tensor({2, T}, rng, false);
            const auto k = random_tensor({3, 2, K}, rng, false);
            const auto base = causal_conv1d(x, k, d);
            for (std::size_t t0 : {0u, 7u, 20u, 39u}) {
                auto moved = Tensor::from_data({2, T}, values(x));
                moved.mutable_data()[t0] += 3.0;
                moved.mutable_data()[T + t0] -= 1.5;
                const auto y = causal_conv1d(moved, k, d);
                for (std::size_t c = 0; c < 3; ++c) {
                    for (std::size_t t = 0; t < t0; ++t) {
                        ASSERT_EQ(y.data()[c * T + t], base.data()[c * T + t]) << "K=" << K << " d=" << d;
                    }
                }
            }
        }
    }
}

TEST(Dropout, SurvivalRateAndScaling) {
    SeededRng rng(42);
    const std::size_t n = 1000000;
    const auto x = Tensor::full({n}, 1.0);
    const auto y = dropout(x, 0.2, rng, true);
    std::size_t kept = 0;
    for (double v : y.data()) {
        if (v != 0.0) {
            ++kept;
            ASSERT_DOUBLE_EQ(v, 1.25);
        }
    }
    const double frac = static_cast<double>(kept) / static_cast<double>(n);
    EXPECT_NEAR(frac, 0.8, 0.005);
}

TEST(Dropout, EvalModeIsIdentity) {
    SeededRng rng(1);
    const auto x = Tensor::full({10}, 2.0);
    const auto y = dropout(x, 0.5, rng, false);
    EXPECT_EQ(y.node(), x.node());
    SeededRng fresh(1);
    EXPECT_EQ(rng.next_u64(), fresh.next_u64());
    EXPECT_EQ(code_of([&] { dropout(x, 1.0, rng, true); }), ErrorCode::BadRate);
    EXPECT_EQ(code_of([&] { dropout(x, -0.1, rng, true); }), ErrorCode::BadRate);
}

TEST(Autograd, LeafGradientsAccumulate) {
    auto w = Tensor::from_data({2}, {1.0, 2.0}, true);
    sum(mul(w, w)).backward();
    EXPECT_EQ(std::vector<double>(w.grad().begin(), w.grad().end()), (std::vector<double>{2.0, 4.0}));
    sum(mul(w, w)).backward();
    EXPECT_EQ(std::vector<double>(w.grad().begin(), w.grad().end()), (std::vector<double>{4.0, 8.0}));
    w.zero_grad();
    EXPECT_EQ(w.grad()[0], 0.0);
}

TEST(Autograd, NoGradGuardRecordsNothing) {
    const auto w = Tensor::from_data({2}, {1.0, 2.0}, true);
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    const auto y = mul(w, w);
    EXPECT_FALSE(y.requires_grad());
}

// ---- gradient checks ------------------------------------------------------

namespace {

void expect_gradients(const fcst::testing::Builder& f, const std::vector<Shape>& shapes, double lo = -1.0,
                      double hi = 1.0) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SeededRng rng(seed * 7919 + 1);
        std::vector<Tensor> inputs;
        for (const auto& s : shapes) inputs.push_back(random_tensor(s, rng, true, lo, hi));
        EXPECT_LT(gradient_error(f, inputs, seed), kGradTol) << "seed " << seed;
    }
}

}  // namespace

TEST(GradCheck, Matmul) {
    expect_gradients([](const auto& in) { return matmul(in[0], in[1]); }, {{3, 4}, {4, 2}});
}

TEST(GradCheck, Elementwise) {
    expect_gradients([](const auto& in) { return add(in[0], in[1]); }, {{2, 3}, {2, 3}});
    expect_gradients([](const auto& in) { return sub(in[0], in[1]); }, {{2, 3}, {2, 3}});
    expect_gradients([](const auto& in) { return mul(in[0], in[1]); }, {{2, 3}, {2, 3}});
    expect_gradients([](const auto& in) { return add_row_bias(in[0], in[1]); }, {{4, 3}, {3}});
    expect_gradients([](const auto& in) { return sum(in[0]); }, {{3, 3}});
}

TEST(GradCheck, Activations) {
    expect_gradients([](const auto& in) { return sigmoid(in[0]); }, {{3, 4}}, -3.0, 3.0);
    expect_gradients([](const auto& in) { return tanh(in[0]); }, {{3, 4}}, -3.0, 3.0);
    // Kept away from the kink at zero.
    expect_gradients([](const auto& in) { return relu(in[0]); }, {{3, 4}}, 0.05, 2.0);
    expect_gradients([](const auto& in) { return relu(in[0]); }, {{3, 4}}, -2.0, -0.05);
}

TEST(GradCheck, Structural) {
    expect_gradients([](const auto& in) { return slice_cols(in[0], 1, 3); }, {{3, 4}});
    expect_gradients([](const auto& in) { return slice_rows(in[0], 0, 2); }, {{3, 4}});
    expect_gradients([](const auto& in) { return concat_cols(in[0], in[1]); }, {{3, 2}, {3, 3}});
    expect_gradients(
        [](const auto& in) {
            const std::vector<Tensor> parts{in[0], in[1]};
            return concat_rows(parts);
        },
        {{1, 3}, {2, 3}});
    expect_gradients([](const auto& in) { return reshape(in[0], {6, 2}); }, {{3, 4}});
    expect_gradients([](const auto& in) { return select_time(in[0], 3); }, {{2, 3, 5}});
}

TEST(GradCheck, Losses) {
    expect_gradients([](const auto& in) { return mse_loss(in[0], in[1]); }, {{4, 2}, {4, 2}});
}

TEST(GradCheck, Dropout) {
    expect_gradients(
        [](const auto& in) {
            SeededRng rng(77);
            return dropout(in[0], 0.3, rng, true);
        },
        {{5, 6}});
}

TEST(GradCheck, CausalConv) {
    for (std::size_t d : {1u, 2u, 3u}) {
        expect_gradients([d](const auto& in) { return causal_conv1d(in[0], in[1], d); }, {{2, 9}, {3, 2, 3}});
        expect_gradients([d](const auto& in) { return causal_conv1d(in[0], in[1], d); }, {{2, 2, 9}, {3, 2, 2}});
    }
    expect_gradients([](const auto& in) { return add_channel_bias(in[0], in[1]); }, {{2, 3, 5}, {3}});
}

TEST(GradCheck, RecurrentPieces) {
    expect_gradients([](const auto& in) { return affine_pair(in[0], in[1], in[2], in[3], in[4]); },
                     {{2, 3}, {3, 8}, {2, 2}, {2, 8}, {8}});
    expect_gradients([](const auto& in) { return lstm_cell(in[0], in[1]); }, {{2, 8}, {2, 4}}, -2.0, 2.0);
}
