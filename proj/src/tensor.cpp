#include "fcst/tensor.hpp"

#include "fcst/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace fcst::nn {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node&)>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using Index = Eigen::Index;

thread_local bool g_grad_enabled = true;

Index ix(std::size_t v) { return static_cast<Index>(v); }

ConstMap cmap(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
    return ConstMap(v.data(), ix(rows), ix(cols));
}

MutMap mmap(std::vector<double>& v, std::size_t rows, std::size_t cols) { return MutMap(v.data(), ix(rows), ix(cols)); }

[[noreturn]] void shape_error(const std::string& op, const std::string& detail) {
    fail(ErrorCode::ShapeMismatch, op + ": " + detail);
}

void require_rank(const std::string& op, const Tensor& t, std::size_t rank) {
    if (!t.defined() || t.rank() != rank) {
        shape_error(op, "expected rank " + std::to_string(rank) + ", got " +
                            (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
    }
}

void require_same(const std::string& op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        shape_error(op, shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

/// Builds the result node; records `bw` only when some input needs a gradient.
Tensor make_op(Shape shape, std::vector<double> data, std::initializer_list<const Tensor*> inputs, BackwardFn bw) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    if (g_grad_enabled) {
        bool any = false;
        for (const Tensor* in : inputs) any = any || in->requires_grad();
        if (any) {
            node->requires_grad = true;
            for (const Tensor* in : inputs) node->parents.push_back(in->node());
            node->backward = std::move(bw);
        }
    }
    return Tensor(std::move(node));
}

/// Parent grad buffer if that parent takes gradients, else nullptr.
std::vector<double>* grad_of(Node* parent) {
    if (!parent->requires_grad) return nullptr;
    parent->ensure_grad();
    return &parent->grad;
}

template <class F>
Tensor unary_map(const Tensor& x, F&& f, std::function<double(double x, double y)> dydx) {
    const auto& xd = x.node()->data;
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
    Node* px = x.node().get();
    return make_op(x.shape(), std::move(out), {&x}, [px, dydx](Node& self) {
        auto* gx = grad_of(px);
        if (!gx) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            (*gx)[i] += self.grad[i] * dydx(px->data[i], self.data[i]);
        }
    });
}

double stable_sigmoid(double v) {
    if (v >= 0) {
        return 1.0 / (1.0 + std::exp(-v));
    }
    const double e = std::exp(v);
    return e / (1.0 + e);
}

}  // namespace

std::size_t shape_numel(const Shape& shape) noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

// ---- Tensor -------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    for (auto d : shape) {
        if (d == 0) shape_error("Tensor", "zero-sized dimension in " + shape_str(shape));
    }
    if (shape_numel(shape) != data.size()) {
        shape_error("Tensor", "data length " + std::to_string(data.size()) + " does not match " + shape_str(shape));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from_data({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }

double Tensor::item() const {
    if (numel() != 1) shape_error("item", "tensor has " + std::to_string(numel()) + " elements");
    return node_->data[0];
}

std::span<double> Tensor::mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from_data(shape(), node_->data, false); }

void Tensor::backward() const {
    if (numel() != 1) shape_error("backward", "root must be a scalar, got " + shape_str(shape()));
    if (!requires_grad()) fail(ErrorCode::MissingGradient, "backward on a tensor that does not require grad");

    // Iterative post-order DFS; recursion would overflow on long unrolled sequences.
    std::vector<NodePtr> order;
    std::unordered_set<const Node*> visited;
    std::vector<std::pair<NodePtr, std::size_t>> stack;
    stack.emplace_back(node_, 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            const NodePtr& parent = node->parents[next++];
            if (parent->requires_grad && visited.insert(parent.get()).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node& n = **it;
        if (!n.backward) continue;  // leaf
        if (!n.grad.empty()) n.backward(n);
        n.backward = nullptr;
        n.parents.clear();
        std::vector<double>().swap(n.grad);
    }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() noexcept { return g_grad_enabled; }

// ---- ops ----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) shape_error("matmul", shape_str(a.shape()) + " x " + shape_str(b.shape()));
    std::vector<double> out(m * n);
    mmap(out, m, n).noalias() = cmap(a.node()->data, m, k) * cmap(b.node()->data, k, n);
    Node* pa = a.node().get();
    Node* pb = b.node().get();
    return make_op({m, n}, std::move(out), {&a, &b}, [pa, pb, m, k, n](Node& self) {
        const auto g = cmap(self.grad, m, n);
        if (auto* ga = grad_of(pa)) mmap(*ga, m, k).noalias() += g * cmap(pb->data, k, n).transpose();
        if (auto* gb = grad_of(pb)) mmap(*gb, k, n).noalias() += cmap(pa->data, m, k).transpose() * g;
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same("add", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    Node* pa = a.node().get();
    Node* pb = b.node().get();
    return make_op(a.shape(), std::move(out), {&a, &b}, [pa, pb](Node& self) {
        for (Node* p : {pa, pb}) {
            if (auto* g = grad_of(p)) {
                for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
            }
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same("sub", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    Node* pa = a.node().get();
    Node* pb = b.node().get();
    return make_op(a.shape(), std::move(out), {&a, &b}, [pa, pb](Node& self) {
        if (auto* g = grad_of(pa)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
        }
        if (auto* g = grad_of(pb)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same("mul", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    Node* pa = a.node().get();
    Node* pb = b.node().get();
    return make_op(a.shape(), std::move(out), {&a, &b}, [pa, pb](Node& self) {
        if (auto* g = grad_of(pa)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * pb->data[i];
        }
        if (auto* g = grad_of(pb)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * pa->data[i];
        }
    });
}

Tensor add_row_bias(const Tensor& a, const Tensor& bias) {
    require_rank("add_row_bias", a, 2);
    require_rank("add_row_bias", bias, 1);
    const std::size_t m = a.dim(0), n = a.dim(1);
    if (bias.dim(0) != n) shape_error("add_row_bias", shape_str(a.shape()) + " + " + shape_str(bias.shape()));
    std::vector<double> out(a.data().begin(), a.data().end());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias.data()[j];
    Node* pa = a.node().get();
    Node* pb = bias.node().get();
    return make_op(a.shape(), std::move(out), {&a, &bias}, [pa, pb, m, n](Node& self) {
        if (auto* g = grad_of(pa)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
        }
        if (auto* g = grad_of(pb)) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) (*g)[j] += self.grad[i * n + j];
        }
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    Node* pa = a.node().get();
    return make_op({1}, {s}, {&a}, [pa](Node& self) {
        if (auto* g = grad_of(pa)) {
            for (double& v : *g) v += self.grad[0];
        }
    });
}

Tensor sigmoid(const Tensor& x) {
    return unary_map(x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
    return unary_map(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
    return unary_map(x, [](double v) { return v > 0.0 ? v : 0.0; },
                     [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
    require_rank("slice_cols", a, 2);
    const std::size_t m = a.dim(0), n = a.dim(1);
    if (begin >= end || end > n) shape_error("slice_cols", "bad range for " + shape_str(a.shape()));
    const std::size_t w = end - begin;
    std::vector<double> out(m * w);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a.data()[i * n + begin + j];
    Node* pa = a.node().get();
    return make_op({m, w}, std::move(out), {&a}, [pa, m, n, w, begin](Node& self) {
        if (auto* g = grad_of(pa)) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < w; ++j) (*g)[i * n + begin + j] += self.grad[i * w + j];
        }
    });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
    require_rank("slice_rows", a, 2);
    const std::size_t m = a.dim(0), n = a.dim(1);
    if (begin >= end || end > m) shape_error("slice_rows", "bad range for " + shape_str(a.shape()));
    std::vector<double> out(a.data().begin() + static_cast<std::ptrdiff_t>(begin * n),
                            a.data().begin() + static_cast<std::ptrdiff_t>(end * n));
    Node* pa = a.node().get();
    const std::size_t offset = begin * n;
    return make_op({end - begin, n}, std::move(out), {&a}, [pa, offset](Node& self) {
        if (auto* g = grad_of(pa)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[offset + i] += self.grad[i];
        }
    });
}

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) shape_error("concat_rows", "no inputs");
    const std::size_t n = parts.front().dim(1);
    std::size_t rows = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        require_rank("concat_rows", p, 2);
        if (p.dim(1) != n) shape_error("concat_rows", "column counts differ");
        rows += p.dim(0);
        any_grad = any_grad || p.requires_grad();
    }
    std::vector<double> out;
    out.reserve(rows * n);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());

    auto node = std::make_shared<Node>();
    node->shape = {rows, n};
    node->data = std::move(out);
    if (g_grad_enabled && any_grad) {
        node->requires_grad = true;
        std::vector<Node*> raw;
        for (const auto& p : parts) {
            node->parents.push_back(p.node());
            raw.push_back(p.node().get());
        }
        node->backward = [raw](Node& self) {
            std::size_t offset = 0;
            for (Node* p : raw) {
                const std::size_t len = p->data.size();
                if (auto* g = grad_of(p)) {
                    for (std::size_t i = 0; i < len; ++i) (*g)[i] += self.grad[offset + i];
                }
                offset += len;
            }
        };
    }
    return Tensor(std::move(node));
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require_rank("concat_cols", a, 2);
    require_rank("concat_cols", b, 2);
    const std::size_t m = a.dim(0), p = a.dim(1), q = b.dim(1);
    if (b.dim(0) != m) shape_error("concat_cols", shape_str(a.shape()) + " | " + shape_str(b.shape()));
    std::vector<double> out(m * (p + q));
    for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(i * p), p, out.begin() + static_cast<std::ptrdiff_t>(i * (p + q)));
        std::copy_n(b.data().begin() + static_cast<std::ptrdiff_t>(i * q), q,
                    out.begin() + static_cast<std::ptrdiff_t>(i * (p + q) + p));
    }
    Node* pa = a.node().get();
    Node* pb = b.node().get();
    return make_op({m, p + q}, std::move(out), {&a, &b}, [pa, pb, m, p, q](Node& self) {
        auto* ga = grad_of(pa);
        auto* gb = grad_of(pb);
        for (std::size_t i = 0; i < m; ++i) {
            if (ga) for (std::size_t j = 0; j < p; ++j) (*ga)[i * p + j] += self.grad[i * (p + q) + j];
            if (gb) for (std::size_t j = 0; j < q; ++j) (*gb)[i * q + j] += self.grad[i * (p + q) + p + j];
        }
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) shape_error("reshape", shape_str(a.shape()) + " -> " + shape_str(shape));
    Node* pa = a.node().get();
    return make_op(std::move(shape), a.node()->data, {&a}, [pa](Node& self) {
        if (auto* g = grad_of(pa)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
        }
    });
}

Tensor select_time(const Tensor& x, std::size_t t) {
    if (!x.defined() || x.rank() < 2) shape_error("select_time", "need rank >= 2");
    const std::size_t T = x.shape().back();
    if (t >= T) shape_error("select_time", "index " + std::to_string(t) + " out of range");
    const std::size_t outer = x.numel() / T;
    std::vector<double> out(outer);
    for (std::size_t o = 0; o < outer; ++o) out[o] = x.data()[o * T + t];
    Shape shape(x.shape().begin(), x.shape().end() - 1);
    Node* px = x.node().get();
    return make_op(std::move(shape), std::move(out), {&x}, [px, T, t, outer](Node& self) {
        if (auto* g = grad_of(px)) {
            for (std::size_t o = 0; o < outer; ++o) (*g)[o * T + t] += self.grad[o];
        }
    });
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    require_same("mse_loss", pred, target);
    const std::size_t n = pred.numel();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = pred.data()[i] - target.data()[i];
        s += d * d;
    }
    Node* pp = pred.node().get();
    Node* pt = target.node().get();
    return make_op({1}, {s / static_cast<double>(n)}, {&pred, &target}, [pp, pt, n](Node& self) {
        const double k = 2.0 * self.grad[0] / static_cast<double>(n);
        auto* gp = grad_of(pp);
        auto* gt = grad_of(pt);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = k * (pp->data[i] - pt->data[i]);
            if (gp) (*gp)[i] += d;
            if (gt) (*gt)[i] -= d;
        }
    });
}

Tensor dropout(const Tensor& x, double rate, SeededRng& rng, bool training) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        fail(ErrorCode::BadRate, "dropout rate must be in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) {
        return x;
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(x.numel());
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
        out[i] = x.data()[i] * mask[i];
    }
    Node* px = x.node().get();
    return make_op(x.shape(), std::move(out), {&x}, [px, mask = std::move(mask)](Node& self) {
        if (auto* g = grad_of(px)) {
            for (std::size_t i = 0; i < mask.size(); ++i) (*g)[i] += self.grad[i] * mask[i];
        }
    });
}

Tensor causal_conv1d(const Tensor& x, const Tensor& kernels, std::size_t dilation) {
    if (!x.defined() || (x.rank() != 2 && x.rank() != 3)) shape_error("causal_conv1d", "x must be [C,T] or [B,C,T]");
    require_rank("causal_conv1d", kernels, 3);
    if (dilation < 1) shape_error("causal_conv1d", "dilation must be >= 1");
    const bool batched = x.rank() == 3;
    const std::size_t B = batched ? x.dim(0) : 1;
    const std::size_t c_in = x.dim(x.rank() - 2);
    const std::size_t T = x.dim(x.rank() - 1);
    const std::size_t c_out = kernels.dim(0);
    const std::size_t K = kernels.dim(2);
    if (kernels.dim(1) != c_in) {
        shape_error("causal_conv1d", "kernels " + shape_str(kernels.shape()) + " vs input " + shape_str(x.shape()));
    }

    auto taps_of = [c_out, c_in, K](const std::vector<double>& kd) {
        std::vector<RowMat> taps(K, RowMat(ix(c_out), ix(c_in)));
        for (std::size_t c = 0; c < c_out; ++c)
            for (std::size_t i = 0; i < c_in; ++i)
                for (std::size_t j = 0; j < K; ++j) taps[j](ix(c), ix(i)) = kd[(c * c_in + i) * K + j];
        return taps;
    };

    const auto taps = taps_of(kernels.node()->data);
    std::vector<double> out(B * c_out * T, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
        const ConstMap xb(x.node()->data.data() + b * c_in * T, ix(c_in), ix(T));
        MutMap yb(out.data() + b * c_out * T, ix(c_out), ix(T));
        for (std::size_t j = 0; j < K; ++j) {
            const std::size_t shift = (K - 1 - j) * dilation;
            if (shift >= T) continue;
            const Index len = ix(T - shift);
            yb.rightCols(len).noalias() += taps[j] * xb.leftCols(len);
        }
    }

    Shape shape = batched ? Shape{B, c_out, T} : Shape{c_out, T};
    Node* px = x.node().get();
    Node* pk = kernels.node().get();
    return make_op(std::move(shape), std::move(out), {&x, &kernels},
                   [px, pk, B, c_in, c_out, T, K, dilation, taps_of](Node& self) {
                       auto* gx = grad_of(px);
                       auto* gk = grad_of(pk);
                       const auto taps = taps_of(pk->data);
                       std::vector<RowMat> gtaps;
                       if (gk) gtaps.assign(K, RowMat::Zero(ix(c_out), ix(c_in)));
                       for (std::size_t b = 0; b < B; ++b) {
                           const ConstMap gy(self.grad.data() + b * c_out * T, ix(c_out), ix(T));
                           const ConstMap xb(px->data.data() + b * c_in * T, ix(c_in), ix(T));
                           for (std::size_t j = 0; j < K; ++j) {
                               const std::size_t shift = (K - 1 - j) * dilation;
                               if (shift >= T) continue;
                               const Index len = ix(T - shift);
                               if (gx) {
                                   MutMap gxb(gx->data() + b * c_in * T, ix(c_in), ix(T));
                                   gxb.leftCols(len).noalias() += taps[j].transpose() * gy.rightCols(len);
                               }
                               if (gk) gtaps[j].noalias() += gy.rightCols(len) * xb.leftCols(len).transpose();
                           }
                       }
                       if (gk) {
                           for (std::size_t c = 0; c < c_out; ++c)
                               for (std::size_t i = 0; i < c_in; ++i)
                                   for (std::size_t j = 0; j < K; ++j)
                                       (*gk)[(c * c_in + i) * K + j] += gtaps[j](ix(c), ix(i));
                       }
                   });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
    if (!x.defined() || x.rank() < 2) shape_error("add_channel_bias", "x must be [...,C,T]");
    require_rank("add_channel_bias", bias, 1);
    const std::size_t C = x.dim(x.rank() - 2);
    const std::size_t T = x.dim(x.rank() - 1);
    if (bias.dim(0) != C) shape_error("add_channel_bias", shape_str(x.shape()) + " + " + shape_str(bias.shape()));
    const std::size_t outer = x.numel() / (C * T);
    std::vector<double> out(x.data().begin(), x.data().end());
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t t = 0; t < T; ++t) out[(o * C + c) * T + t] += bias.data()[c];
    Node* px = x.node().get();
    Node* pb = bias.node().get();
    return make_op(x.shape(), std::move(out), {&x, &bias}, [px, pb, outer, C, T](Node& self) {
        if (auto* g = grad_of(px)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
        }
        if (auto* g = grad_of(pb)) {
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t t = 0; t < T; ++t) (*g)[c] += self.grad[(o * C + c) * T + t];
        }
    });
}

Tensor affine_pair(const Tensor& x, const Tensor& wx, const Tensor& h, const Tensor& wh, const Tensor& b) {
    for (const Tensor* t : {&x, &wx, &h, &wh}) require_rank("affine_pair", *t, 2);
    require_rank("affine_pair", b, 1);
    const std::size_t m = x.dim(0), k1 = x.dim(1), k2 = h.dim(1), n = wx.dim(1);
    if (wx.dim(0) != k1 || h.dim(0) != m || wh.dim(0) != k2 || wh.dim(1) != n || b.dim(0) != n) {
        shape_error("affine_pair", shape_str(x.shape()) + "*" + shape_str(wx.shape()) + " + " + shape_str(h.shape()) +
                                       "*" + shape_str(wh.shape()) + " + " + shape_str(b.shape()));
    }
    std::vector<double> out(m * n);
    auto y = mmap(out, m, n);
    y.noalias() = cmap(x.node()->data, m, k1) * cmap(wx.node()->data, k1, n);
    y.noalias() += cmap(h.node()->data, m, k2) * cmap(wh.node()->data, k2, n);
    y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.node()->data.data(), ix(n));

    Node* px = x.node().get();
    Node* pwx = wx.node().get();
    Node* ph = h.node().get();
    Node* pwh = wh.node().get();
    Node* pb = b.node().get();
    return make_op({m, n}, std::move(out), {&x, &wx, &h, &wh, &b}, [=](Node& self) {
        const auto g = cmap(self.grad, m, n);
        if (auto* gx = grad_of(px)) mmap(*gx, m, k1).noalias() += g * cmap(pwx->data, k1, n).transpose();
        if (auto* gwx = grad_of(pwx)) mmap(*gwx, k1, n).noalias() += cmap(px->data, m, k1).transpose() * g;
        if (auto* gh = grad_of(ph)) mmap(*gh, m, k2).noalias() += g * cmap(pwh->data, k2, n).transpose();
        if (auto* gwh = grad_of(pwh)) mmap(*gwh, k2, n).noalias() += cmap(ph->data, m, k2).transpose() * g;
        if (auto* gb = grad_of(pb)) {
            Eigen::Map<Eigen::RowVectorXd>(gb->data(), ix(n)) += g.colwise().sum();
        }
    });
}

Tensor lstm_cell(const Tensor& gates, const Tensor& state) {
    require_rank("lstm_cell", gates, 2);
    require_rank("lstm_cell", state, 2);
    const std::size_t B = gates.dim(0);
    const std::size_t H = gates.dim(1) / 4;
    if (gates.dim(1) != 4 * H || H == 0 || state.dim(0) != B || state.dim(1) != 2 * H) {
        shape_error("lstm_cell", "gates " + shape_str(gates.shape()) + " vs state " + shape_str(state.shape()));
    }
    // Saved activations per row: i, f, g, o, tanh(c).
    std::vector<double> saved(B * 5 * H);
    std::vector<double> out(B * 2 * H);
    const auto& a = gates.node()->data;
    const auto& s = state.node()->data;
    for (std::size_t r = 0; r < B; ++r) {
        const double* ar = a.data() + r * 4 * H;
        const double* cprev = s.data() + r * 2 * H + H;
        double* sv = saved.data() + r * 5 * H;
        double* hr = out.data() + r * 2 * H;
        double* cr = hr + H;
        for (std::size_t k = 0; k < H; ++k) {
            const double i = stable_sigmoid(ar[k]);
            const double f = stable_sigmoid(ar[H + k]);
            const double g = std::tanh(ar[2 * H + k]);
            const double o = stable_sigmoid(ar[3 * H + k]);
            const double c = f * cprev[k] + i * g;
            const double tc = std::tanh(c);
            sv[k] = i;
            sv[H + k] = f;
            sv[2 * H + k] = g;
            sv[3 * H + k] = o;
            sv[4 * H + k] = tc;
            cr[k] = c;
            hr[k] = o * tc;
        }
    }
    Node* pg = gates.node().get();
    Node* ps = state.node().get();
    return make_op({B, 2 * H}, std::move(out), {&gates, &state},
                   [pg, ps, B, H, saved = std::move(saved)](Node& self) {
                       auto* gg = grad_of(pg);
                       auto* gs = grad_of(ps);
                       for (std::size_t r = 0; r < B; ++r) {
                           const double* sv = saved.data() + r * 5 * H;
                           const double* gh = self.grad.data() + r * 2 * H;
                           const double* gc = gh + H;
                           const double* cprev = ps->data.data() + r * 2 * H + H;
                           for (std::size_t k = 0; k < H; ++k) {
                               const double i = sv[k], f = sv[H + k], g = sv[2 * H + k], o = sv[3 * H + k];
                               const double tc = sv[4 * H + k];
                               const double dc = gc[k] + gh[k] * o * (1.0 - tc * tc);
                               if (gg) {
                                   double* ga = gg->data() + r * 4 * H;
                                   ga[k] += dc * g * i * (1.0 - i);
                                   ga[H + k] += dc * cprev[k] * f * (1.0 - f);
                                   ga[2 * H + k] += dc * i * (1.0 - g * g);
                                   ga[3 * H + k] += gh[k] * tc * o * (1.0 - o);
                               }
                               if (gs) (*gs)[r * 2 * H + H + k] += dc * f;
                           }
                       }
                   });
}

}  // namespace fcst::nn
