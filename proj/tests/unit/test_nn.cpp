#include "fcst/error.hpp"
#include "fcst/nn.hpp"
#include "support/grad_check.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fcst;
using namespace fcst::nn;
using fcst::testing::gradient_error;
using fcst::testing::random_tensor;

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

LstmParams scalar_params(std::vector<double> wx, std::vector<double> wh, std::vector<double> b) {
    LstmParams p;
    p.w_input = Tensor::from_data({1, 4}, std::move(wx), true);
    p.w_hidden = Tensor::from_data({1, 4}, std::move(wh), true);
    p.bias = Tensor::from_data({4}, std::move(b), true);
    return p;
}

}  // namespace

TEST(Lstm, ZeroParametersStayAtOrigin) {
    LstmParams p;
    p.w_input = Tensor::zeros({3, 16});
    p.w_hidden = Tensor::zeros({4, 16});
    p.bias = Tensor::zeros({16});
    SeededRng rng(1);
    const auto x = random_tensor({6, 3}, rng, false);
    const auto h = lstm_layer(x, p, Tensor::zeros({1, 4}), Tensor::zeros({1, 4}));
    ASSERT_EQ(h.shape(), (Shape{6, 4}));
    for (double v : h.data()) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, ScalarRecurrenceByHand) {
    const std::vector<double> wx{0.5, -0.3, 0.8, 0.1};
    const std::vector<double> wh{0.2, 0.4, -0.6, 0.9};
    const std::vector<double> b{0.1, 1.0, -0.2, 0.05};
    const std::vector<double> xs{1.0, -0.5, 2.0};

    double h = 0.0;
    double c = 0.0;
    std::vector<double> expected;
    for (double x : xs) {
        const double i = logistic(wx[0] * x + wh[0] * h + b[0]);
        const double f = logistic(wx[1] * x + wh[1] * h + b[1]);
        const double g = std::tanh(wx[2] * x + wh[2] * h + b[2]);
        const double o = logistic(wx[3] * x + wh[3] * h + b[3]);
        c = f * c + i * g;
        h = o * std::tanh(c);
        expected.push_back(h);
    }

    const auto p = scalar_params(wx, wh, b);
    const auto out = lstm_layer(Tensor::from_data({3, 1}, xs), p, Tensor::zeros({1, 1}), Tensor::zeros({1, 1}));
    for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(out.data()[t], expected[t], 1e-14);
}

TEST(Lstm, InitialisationLayout) {
    SeededRng rng(3);
    const auto p = make_lstm_params(2, 5, rng);
    EXPECT_EQ(p.w_input.shape(), (Shape{2, 20}));
    EXPECT_EQ(p.w_hidden.shape(), (Shape{5, 20}));
    for (std::size_t k = 0; k < 20; ++k) EXPECT_EQ(p.bias.data()[k], (k >= 5 && k < 10) ? 1.0 : 0.0);
    const double bound = std::sqrt(6.0 / 22.0);
    for (double v : p.w_input.data()) EXPECT_LE(std::abs(v), bound);
}

TEST(Lstm, GradientCheck) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SeededRng rng(seed + 100);
        const auto x = random_tensor({5, 3}, rng);
        const auto wx = random_tensor({3, 8}, rng);
        const auto wh = random_tensor({2, 8}, rng);
        const auto b = random_tensor({8}, rng);
        const auto h0 = random_tensor({1, 2}, rng);
        const auto c0 = random_tensor({1, 2}, rng);
        const auto f = [](const std::vector<Tensor>& in) {
            LstmParams p{in[1], in[2], in[3]};
            return lstm_layer(in[0], p, in[4], in[5]);
        };
        EXPECT_LT(gradient_error(f, {x, wx, wh, b, h0, c0}, seed), 1e-6) << "seed " << seed;
    }
}

TEST(Lstm, ShapeErrors) {
    SeededRng rng(4);
    const auto p = make_lstm_params(2, 3, rng);
    EXPECT_THROW(lstm_layer(Tensor::zeros({4, 5}), p, Tensor::zeros({1, 3}), Tensor::zeros({1, 3})), Error);
    EXPECT_THROW(lstm_layer(Tensor::zeros({4, 2}), p, Tensor::zeros({1, 2}), Tensor::zeros({1, 2})), Error);
}

TEST(Dense, ForwardAndGradient) {
    const Dense d{Tensor::from_data({2, 1}, {2.0, -1.0}), Tensor::from_data({1}, {0.5})};
    EXPECT_EQ(d.forward(Tensor::from_data({1, 2}, {3.0, 4.0})).item(), 2.5);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SeededRng rng(seed);
        const auto f = [](const std::vector<Tensor>& in) { return Dense{in[1], in[2]}.forward(in[0]); };
        EXPECT_LT(gradient_error(f, {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng), random_tensor({2}, rng)}, seed),
                  1e-6);
    }
}

TEST(Adam, ZeroGradientLeavesParameters) {
    auto w = Tensor::from_data({3}, {1.0, -2.0, 3.0}, true);
    w.mutable_grad();  // allocates an all-zero gradient buffer
    AdamState s;
    std::vector<Tensor> params{w};
    adam_step(s, params);
    EXPECT_EQ(std::vector<double>(w.data().begin(), w.data().end()), (std::vector<double>{1.0, -2.0, 3.0}));
    EXPECT_EQ(s.step_count, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    auto w = Tensor::from_data({2}, {1.0, 1.0}, true);
    sum(mul(w, Tensor::from_data({2}, {3.0, -0.01}))).backward();
    AdamState s;
    s.learning_rate = 0.01;
    std::vector<Tensor> params{w};
    adam_step(s, params);
    EXPECT_NEAR(w.data()[0] - 1.0, -0.01, 1e-8);
    EXPECT_NEAR(w.data()[1] - 1.0, 0.01, 1e-6);
}

TEST(Adam, MinimisesQuadratic) {
    auto w = Tensor::from_data({1}, {1.0}, true);
    AdamState s;
    s.learning_rate = 0.1;
    std::vector<Tensor> params{w};
    for (int step = 0; step < 100; ++step) {
        w.zero_grad();
        sum(mul(w, w)).backward();
        adam_step(s, params);
    }
    EXPECT_LT(std::abs(w.data()[0]), 0.1);
}

TEST(Adam, MissingGradient) {
    auto w = Tensor::from_data({1}, {1.0}, true);
    AdamState s;
    std::vector<Tensor> params{w};
    try {
        adam_step(s, params);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingGradient);
    }
    EXPECT_EQ(w.data()[0], 1.0);
    EXPECT_EQ(s.step_count, 0u);
}
