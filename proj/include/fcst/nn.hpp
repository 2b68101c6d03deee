#pragma once

#include "fcst/rng.hpp"
#include "fcst/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fcst::nn {

using NamedTensor = std::pair<std::string, Tensor>;

/// Uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out)), drawn from `rng`.
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, SeededRng& rng);

struct LstmParams {
    Tensor w_input;   // [D_in, 4H], gate column blocks (i, f, g, o)
    Tensor w_hidden;  // [H, 4H]
    Tensor bias;      // [4H]

    std::size_t input_size() const { return w_input.dim(0); }
    std::size_t hidden_size() const { return w_hidden.dim(0); }
};

/// Glorot-initialized weights, zero biases except the forget gate (1.0).
LstmParams make_lstm_params(std::size_t input_size, std::size_t hidden_size, SeededRng& rng);

/// Runs the recurrence over `steps` (each [B, D_in]) from (h0, c0) (each
/// [B, H]) and returns every hidden state h_1..h_T.
std::vector<Tensor> lstm_layer(std::span<const Tensor> steps, const LstmParams& params, const Tensor& h0,
                               const Tensor& c0);

/// Unbatched form: x_seq is [T, D_in], h0/c0 are [1, H]; returns [T, H].
Tensor lstm_layer(const Tensor& x_seq, const LstmParams& params, const Tensor& h0, const Tensor& c0);

struct Dense {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]

    Tensor forward(const Tensor& x) const { return add_row_bias(matmul(x, weight), bias); }
};

Dense make_dense(std::size_t in, std::size_t out, SeededRng& rng);

struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step_count = 0;
    std::vector<std::vector<double>> first_moment;   // one buffer per parameter
    std::vector<std::vector<double>> second_moment;
};

/// One bias-corrected Adam update of every parameter from its accumulated
/// gradient. Throws MissingGradient if any parameter has no gradient buffer.
void adam_step(AdamState& state, std::span<Tensor> params);

}  // namespace fcst::nn
