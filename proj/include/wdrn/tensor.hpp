#pragma once

// Dense NHWC tensor with a define-by-run reverse-mode autodiff tape.
//
// A Tensor is a cheap handle: copies share storage and gradient. Use clone()
// for an independent, detached copy. Every operation whose inputs require
// gradients records a node carrying a monotonically increasing id; backward()
// replays reachable nodes in decreasing id order, i.e. reverse construction
// order, and then releases them.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "wdrn/error.hpp"

namespace wdrn {

struct Shape {
    std::size_t batch = 1;
    std::size_t height = 1;
    std::size_t width = 1;
    std::size_t channels = 1;

    constexpr std::size_t size() const noexcept { return batch * height * width * channels; }

    friend constexpr bool operator==(const Shape&, const Shape&) = default;

    std::string str() const {
        return "[" + std::to_string(batch) + "," + std::to_string(height) + "," + std::to_string(width) +
               "," + std::to_string(channels) + "]";
    }
};

inline void validate_shape(const Shape& s) {
    if (s.batch == 0 || s.height == 0 || s.width == 0 || s.channels == 0) {
        throw ShapeError("shape " + s.str() + " has a zero extent");
    }
    constexpr auto max = static_cast<std::size_t>(std::numeric_limits<std::ptrdiff_t>::max());
    std::size_t n = s.batch;
    for (std::size_t e : {s.height, s.width, s.channels}) {
        if (n > max / e) throw ShapeError("shape " + s.str() + " overflows the index range");
        n *= e;
    }
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
    if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

namespace detail {

inline std::uint64_t next_node_id() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
}

inline bool& grad_recording() {
    thread_local bool on = true;
    return on;
}

/// When set, relu appends its active/inactive mask here (used by the
/// gradient checker to detect finite-difference steps that cross a kink).
inline std::vector<bool>*& relu_mask_sink() {
    thread_local std::vector<bool>* sink = nullptr;
    return sink;
}

template <std::floating_point T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
    bool consumed = false;
    std::uint64_t id = 0;  // 0 for leaves
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T{0});
    }
};

}  // namespace detail

template <std::floating_point T>
class Tensor {
public:
    using value_type = T;
    using NodePtr = std::shared_ptr<detail::Node<T>>;

    Tensor() : Tensor(Shape{}) {}

    explicit Tensor(const Shape& shape, T fill = T{0}) : node_(std::make_shared<detail::Node<T>>()) {
        validate_shape(shape);
        node_->shape = shape;
        node_->data.assign(shape.size(), fill);
    }

    Tensor(const Shape& shape, std::vector<T> values) : node_(std::make_shared<detail::Node<T>>()) {
        validate_shape(shape);
        if (values.size() != shape.size()) {
            throw ShapeError("tensor " + shape.str() + " needs " + std::to_string(shape.size()) +
                             " values, got " + std::to_string(values.size()));
        }
        node_->shape = shape;
        node_->data = std::move(values);
    }

    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    static Tensor scalar(T v) { return Tensor(Shape{}, v); }

    const Shape& shape() const noexcept { return node_->shape; }
    std::size_t size() const noexcept { return node_->data.size(); }

    std::span<T> data() noexcept { return node_->data; }
    std::span<const T> data() const noexcept { return node_->data; }

    std::size_t index(std::size_t n, std::size_t y, std::size_t x, std::size_t c) const noexcept {
        const Shape& s = node_->shape;
        return ((n * s.height + y) * s.width + x) * s.channels + c;
    }
    T& operator()(std::size_t n, std::size_t y, std::size_t x, std::size_t c) noexcept {
        return node_->data[index(n, y, x, c)];
    }
    T operator()(std::size_t n, std::size_t y, std::size_t x, std::size_t c) const noexcept {
        return node_->data[index(n, y, x, c)];
    }

    T item() const {
        if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape().str());
        return node_->data[0];
    }

    bool requires_grad() const noexcept { return node_->requires_grad; }

    /// Marks a leaf as trainable. Leaves get a zero gradient buffer immediately.
    Tensor& set_requires_grad(bool on) {
        node_->requires_grad = on;
        if (on && node_->id == 0) node_->ensure_grad();
        return *this;
    }

    bool has_grad() const noexcept { return !node_->grad.empty(); }
    std::span<const T> grad() const noexcept { return node_->grad; }
    std::span<T> mutable_grad() noexcept { return node_->grad; }

    void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T{0}); }

    bool is_leaf() const noexcept { return node_->id == 0; }
    std::uint64_t node_id() const noexcept { return node_->id; }

    /// Independent deep copy with no gradient and no graph history.
    Tensor clone() const { return Tensor(shape(), node_->data); }

    template <std::floating_point U>
    Tensor<U> cast() const {
        std::vector<U> out(size());
        std::transform(node_->data.begin(), node_->data.end(), out.begin(),
                       [](T v) { return static_cast<U>(v); });
        return Tensor<U>(shape(), std::move(out));
    }

    const NodePtr& node() const noexcept { return node_; }

private:
    NodePtr node_;
};

namespace detail {

/// Wraps freshly computed data as an op result; records a tape node only when
/// some input requires gradients.
template <std::floating_point T>
Tensor<T> make_result(const Shape& shape, std::vector<T> data, std::vector<std::shared_ptr<Node<T>>> inputs,
                      std::function<void(Node<T>&)> backward) {
    auto node = std::make_shared<Node<T>>();
    node->shape = shape;
    node->data = std::move(data);
    const bool tracked = grad_recording() && std::any_of(inputs.begin(), inputs.end(), [](const auto& n) { return n->requires_grad; });
    if (tracked) {
        node->requires_grad = true;
        node->id = next_node_id();
        node->inputs = std::move(inputs);
        node->backward = std::move(backward);
    }
    return Tensor<T>(std::move(node));
}

template <std::floating_point T>
T* grad_of(Node<T>& n) {
    if (!n.requires_grad) return nullptr;
    n.ensure_grad();
    return n.grad.data();
}

}  // namespace detail

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_recording()) { detail::grad_recording() = false; }
    ~NoGradGuard() { detail::grad_recording() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Populates gradients of every trainable tensor reachable from `loss`.
/// The recorded graph is released afterwards; a second call on the same
/// loss is rejected.
template <std::floating_point T>
void backward(const Tensor<T>& loss) {
    if (loss.size() != 1) throw ShapeError("backward() needs a scalar loss, got " + loss.shape().str());
    auto* root = loss.node().get();
    if (!root->requires_grad) return;
    if (root->consumed) throw std::logic_error("backward(): graph already consumed");

    // Shared ownership keeps every node alive until the release pass ends.
    std::vector<std::shared_ptr<detail::Node<T>>> order;
    std::unordered_set<detail::Node<T>*> seen;
    std::vector<std::shared_ptr<detail::Node<T>>> stack{loss.node()};
    while (!stack.empty()) {
        auto n = std::move(stack.back());
        stack.pop_back();
        if (!seen.insert(n.get()).second) continue;
        if (n->id == 0) continue;
        for (auto& in : n->inputs) {
            if (in->requires_grad) stack.push_back(in);
        }
        order.push_back(std::move(n));
    }
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a->id > b->id; });

    root->ensure_grad();
    root->grad[0] += T{1};
    for (auto& n : order) {
        if (n->consumed) throw std::logic_error("backward(): graph already consumed");
        if (!n->grad.empty() && n->backward) n->backward(*n);
    }
    for (auto& n : order) {
        n->backward = nullptr;
        n->inputs.clear();
        n->grad.clear();
        n->grad.shrink_to_fit();
        n->consumed = true;
    }
}

// ---------------------------------------------------------------------------
// Elementwise operations. No broadcasting: shapes must match exactly.

template <std::floating_point T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "add");
    std::vector<T> out(a.size());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
    return detail::make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](detail::Node<T>& self) {
        for (auto& in : self.inputs) {
            if (T* g = detail::grad_of(*in)) {
                for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
            }
        }
    });
}

template <std::floating_point T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "sub");
    std::vector<T> out(a.size());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
    return detail::make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](detail::Node<T>& self) {
        if (T* g = detail::grad_of(*self.inputs[0])) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
        if (T* g = detail::grad_of(*self.inputs[1])) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

template <std::floating_point T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "mul");
    std::vector<T> out(a.size());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
    return detail::make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](detail::Node<T>& self) {
        auto& lhs = *self.inputs[0];
        auto& rhs = *self.inputs[1];
        if (T* g = detail::grad_of(lhs)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * rhs.data[i];
        }
        if (T* g = detail::grad_of(rhs)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * lhs.data[i];
        }
    });
}

template <std::floating_point T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "div");
    std::vector<T> out(a.size());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / y[i];
    return detail::make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](detail::Node<T>& self) {
        auto& num = *self.inputs[0];
        auto& den = *self.inputs[1];
        if (T* g = detail::grad_of(num)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] / den.data[i];
        }
        if (T* g = detail::grad_of(den)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i] * self.data[i] / den.data[i];
        }
    });
}

template <std::floating_point T>
Tensor<T> scalar_mul(const Tensor<T>& a, T s) {
    std::vector<T> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= s;
    return detail::make_result<T>(a.shape(), std::move(out), {a.node()}, [s](detail::Node<T>& self) {
        if (T* g = detail::grad_of(*self.inputs[0])) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * s;
        }
    });
}

template <std::floating_point T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
    std::vector<T> out(a.data().begin(), a.data().end());
    for (auto& v : out) v += s;
    return detail::make_result<T>(a.shape(), std::move(out), {a.node()}, [](detail::Node<T>& self) {
        if (T* g = detail::grad_of(*self.inputs[0])) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
    });
}

/// |x|, with subgradient sign(0) = 0.
template <std::floating_point T>
Tensor<T> abs(const Tensor<T>& a) {
    std::vector<T> out(a.size());
    auto x = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(x[i]);
    return detail::make_result<T>(a.shape(), std::move(out), {a.node()}, [](detail::Node<T>& self) {
        auto& in = *self.inputs[0];
        if (T* g = detail::grad_of(in)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const T v = in.data[i];
                if (v > T{0}) g[i] += self.grad[i];
                else if (v < T{0}) g[i] -= self.grad[i];
            }
        }
    });
}

/// max(x, 0); gradient at exactly 0 is 0.
template <std::floating_point T>
Tensor<T> relu(const Tensor<T>& a) {
    std::vector<T> out(a.size());
    auto x = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > T{0} ? x[i] : T{0};
    if (auto* sink = detail::relu_mask_sink()) {
        for (std::size_t i = 0; i < out.size(); ++i) sink->push_back(x[i] > T{0});
    }
    return detail::make_result<T>(a.shape(), std::move(out), {a.node()}, [](detail::Node<T>& self) {
        auto& in = *self.inputs[0];
        if (T* g = detail::grad_of(in)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                if (in.data[i] > T{0}) g[i] += self.grad[i];
            }
        }
    });
}

/// Mean over all elements, as a 1x1x1x1 tensor. Accumulates in double.
template <std::floating_point T>
Tensor<T> reduce_mean(const Tensor<T>& a) {
    double acc = 0.0;
    for (T v : a.data()) acc += static_cast<double>(v);
    const auto n = a.size();
    std::vector<T> out{static_cast<T>(acc / static_cast<double>(n))};
    return detail::make_result<T>(Shape{}, std::move(out), {a.node()}, [n](detail::Node<T>& self) {
        if (T* g = detail::grad_of(*self.inputs[0])) {
            const T share = self.grad[0] / static_cast<T>(n);
            for (std::size_t i = 0; i < n; ++i) g[i] += share;
        }
    });
}

}  // namespace wdrn
