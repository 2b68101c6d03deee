#pragma once

#include "fcst/rng.hpp"

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fcst::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node& self)> backward;

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
    }
};

}  // namespace detail

/// Dense row-major float64 array with an optional gradient and a link to the
/// op that produced it. Copies are shallow handles onto the same storage, so
/// a parameter can be shared between a model and its optimizer.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t i) const { return shape().at(i); }
    std::size_t numel() const { return node_->data.size(); }

    std::span<const double> data() const { return node_->data; }
    /// Writable storage for initializers and optimizers. Mutating a tensor
    /// that already feeds a recorded graph invalidates that graph.
    std::span<double> mutable_data() { return node_->data; }
    double item() const;

    bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
    bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad();
    void zero_grad();

    /// Reverse-mode accumulation from this scalar. Leaf gradients accumulate
    /// across calls; intermediate gradients and the recorded graph are
    /// released afterwards.
    void backward() const;

    /// Same values, no graph, no gradient.
    Tensor detach() const;

    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled() noexcept;

// ---- ops -----------------------------------------------------------------
// All ops throw Error{ShapeMismatch} on incompatible shapes.

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n] -> [m,n]
Tensor add(const Tensor& a, const Tensor& b);     // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);     // elementwise
Tensor add_row_bias(const Tensor& a, const Tensor& bias);  // [m,n] + [n]
Tensor sum(const Tensor& a);                               // -> scalar

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);  // [m,n] -> [m,end-begin]
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);  // [m,n] -> [end-begin,n]
Tensor concat_rows(std::span<const Tensor> parts);                       // [r_i,n] -> [sum r_i,n]
Tensor concat_cols(const Tensor& a, const Tensor& b);                    // [m,p] | [m,q] -> [m,p+q]
Tensor reshape(const Tensor& a, Shape shape);

/// Picks one position along the last (time) axis: [..., T] -> [...].
Tensor select_time(const Tensor& x, std::size_t t);

Tensor mse_loss(const Tensor& pred, const Tensor& target);

/// Inverted dropout. With training == false (or rate == 0) the input handle
/// is returned unchanged and `rng` is never touched.
Tensor dropout(const Tensor& x, double rate, SeededRng& rng, bool training);

/// y[c,t] = sum_{i,j} kernels[c,i,j] * x[i, t - (K-1-j)*d], zero-padded on the
/// left. Accepts x as [C_in,T] or batched [B,C_in,T]; kernels are
/// [C_out,C_in,K]. Output keeps the time length.
Tensor causal_conv1d(const Tensor& x, const Tensor& kernels, std::size_t dilation);

/// x[..., c, t] + bias[c].
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

/// x*wx + h*wh + b, the fused pre-activation of all four LSTM gates.
Tensor affine_pair(const Tensor& x, const Tensor& wx, const Tensor& h, const Tensor& wh, const Tensor& b);

/// One LSTM cell update. `gates` is [B,4H] pre-activations ordered
/// (input, forget, cell, output); `state` is [B,2H] holding (h | c).
/// Returns the next (h | c).
Tensor lstm_cell(const Tensor& gates, const Tensor& state);

}  // namespace fcst::nn
