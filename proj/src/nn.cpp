#include "fcst/nn.hpp"

#include "fcst/error.hpp"

#include <cmath>

namespace fcst::nn {

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, SeededRng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = rng.uniform(-bound, bound);
    return Tensor::from_data(std::move(shape), std::move(data), true);
}

LstmParams make_lstm_params(std::size_t input_size, std::size_t hidden_size, SeededRng& rng) {
    LstmParams p;
    const std::size_t gates = 4 * hidden_size;
    p.w_input = glorot_uniform({input_size, gates}, input_size, gates, rng);
    p.w_hidden = glorot_uniform({hidden_size, gates}, hidden_size, gates, rng);
    std::vector<double> bias(gates, 0.0);
    for (std::size_t k = hidden_size; k < 2 * hidden_size; ++k) bias[k] = 1.0;
    p.bias = Tensor::from_data({gates}, std::move(bias), true);
    return p;
}

std::vector<Tensor> lstm_layer(std::span<const Tensor> steps, const LstmParams& params, const Tensor& h0,
                               const Tensor& c0) {
    const std::size_t H = params.hidden_size();
    if (params.w_input.dim(1) != 4 * H || params.w_hidden.dim(1) != 4 * H || params.bias.dim(0) != 4 * H) {
        fail(ErrorCode::ShapeMismatch, "lstm_layer: inconsistent parameter shapes");
    }
    if (h0.rank() != 2 || h0.shape() != c0.shape() || h0.dim(1) != H) {
        fail(ErrorCode::ShapeMismatch, "lstm_layer: h0/c0 must be [B, " + std::to_string(H) + "]");
    }
    std::vector<Tensor> hidden;
    hidden.reserve(steps.size());
    Tensor state = concat_cols(h0, c0);
    Tensor h = h0;
    for (const Tensor& x : steps) {
        if (x.rank() != 2 || x.dim(0) != h0.dim(0) || x.dim(1) != params.input_size()) {
            fail(ErrorCode::ShapeMismatch, "lstm_layer: step input " + shape_str(x.shape()));
        }
        const Tensor gates = affine_pair(x, params.w_input, h, params.w_hidden, params.bias);
        state = lstm_cell(gates, state);
        h = slice_cols(state, 0, H);
        hidden.push_back(h);
    }
    return hidden;
}

Tensor lstm_layer(const Tensor& x_seq, const LstmParams& params, const Tensor& h0, const Tensor& c0) {
    if (x_seq.rank() != 2) fail(ErrorCode::ShapeMismatch, "lstm_layer: x_seq must be [T, D_in]");
    std::vector<Tensor> steps;
    steps.reserve(x_seq.dim(0));
    for (std::size_t t = 0; t < x_seq.dim(0); ++t) steps.push_back(slice_rows(x_seq, t, t + 1));
    const auto hidden = lstm_layer(steps, params, h0, c0);
    return concat_rows(hidden);
}

Dense make_dense(std::size_t in, std::size_t out, SeededRng& rng) {
    return Dense{glorot_uniform({in, out}, in, out, rng), Tensor::zeros({out}, true)};
}

void adam_step(AdamState& state, std::span<Tensor> params) {
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (!params[p].has_grad()) {
            fail(ErrorCode::MissingGradient, "parameter " + std::to_string(p) + " has no gradient");
        }
    }
    if (state.first_moment.empty()) {
        for (const Tensor& t : params) {
            state.first_moment.emplace_back(t.numel(), 0.0);
            state.second_moment.emplace_back(t.numel(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
        fail(ErrorCode::ShapeMismatch, "adam: moment buffers do not match parameter list");
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (state.first_moment[p].size() != params[p].numel() || state.second_moment[p].size() != params[p].numel()) {
            fail(ErrorCode::ShapeMismatch, "adam: moment buffer " + std::to_string(p) + " has the wrong size");
        }
    }

    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto w = params[p].mutable_data();
        const auto g = params[p].grad();
        auto& m = state.first_moment[p];
        auto& v = state.second_moment[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            w[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

}  // namespace fcst::nn
