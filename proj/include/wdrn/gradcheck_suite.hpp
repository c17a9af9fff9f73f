#pragma once

// Finite-difference verification of every differentiable op, the losses and
// a small end-to-end network, all in double precision.

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "wdrn/conv.hpp"
#include "wdrn/gradcheck.hpp"
#include "wdrn/losses.hpp"
#include "wdrn/model.hpp"
#include "wdrn/shuffle.hpp"
#include "wdrn/tensor.hpp"
#include "wdrn/wavelet.hpp"

namespace wdrn {

struct GradcheckOptions {
    double threshold = 1e-5;
    double eps = 1e-6;
    std::uint64_t seed = 1;
    /// Test hook: the named op gets a deliberately wrong backward pass.
    std::string corrupt_op;
};

struct GradcheckRow {
    std::string op;
    double max_rel_error = 0.0;
    std::size_t checked = 0;  ///< number of gradient entries compared
    bool passed = false;
};

namespace detail {

/// Identity in the forward direction whose backward scales the gradient.
template <std::floating_point T>
Tensor<T> faulty_identity(const Tensor<T>& x, T scale) {
    std::vector<T> out(x.data().begin(), x.data().end());
    return make_result<T>(x.shape(), std::move(out), {x.node()}, [scale](Node<T>& self) {
        if (T* g = grad_of(*self.inputs[0])) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * scale;
        }
    });
}

class GradcheckRunner {
public:
    explicit GradcheckRunner(const GradcheckOptions& opt) : opt_(opt), rng_(opt.seed) {}

    Tensor<double> uniform(const Shape& s, double lo, double hi) {
        std::vector<double> v(s.size());
        for (auto& x : v) x = lo + (hi - lo) * unit_uniform(rng_);
        return Tensor<double>(s, std::move(v));
    }

    /// Values in [lo, hi] with random sign, so none sits near zero.
    Tensor<double> away_from_zero(const Shape& s, double lo, double hi) {
        Tensor<double> t = uniform(s, lo, hi);
        for (auto& x : t.data()) {
            if (rng_() & 1) x = -x;
        }
        return t;
    }

    std::vector<std::size_t> sample(std::size_t n, std::size_t k) {
        std::vector<std::size_t> out;
        if (k >= n) {
            for (std::size_t i = 0; i < n; ++i) out.push_back(i);
            return out;
        }
        for (std::size_t i = 0; i < k; ++i) out.push_back(static_cast<std::size_t>(rng_() % n));
        return out;
    }

    using Fn = std::function<Tensor<double>(const Tensor<double>&)>;

    /// Compares gradients of a scalar function of `at`; returns the relative error.
    double compare(const std::string& op, const Fn& f, const Tensor<double>& at, std::size_t max_entries,
                   std::size_t& checked) {
        const Fn g = !op.empty() && op == opt_.corrupt_op ? Fn([&f](const Tensor<double>& x) { return f(faulty_identity(x, 1.01)); })
                                           : f;
        const auto idx = sample(at.size(), max_entries);
        const auto analytic = analytic_grad_at<double>(g, at, idx);
        const auto numeric = finite_diff_grad_at<double>(g, at, idx, opt_.eps);
        checked += idx.size();
        return relative_error(analytic, numeric);
    }

    /// Non-scalar op: projects the output onto fixed random weights.
    double compare_projected(const std::string& op, const Fn& f, const Tensor<double>& at, std::size_t& checked) {
        Shape out_shape;
        {
            NoGradGuard ng;
            out_shape = f(at).shape();
        }
        const Tensor<double> w = uniform(out_shape, -1.0, 1.0);
        return compare(
            op, [f, w](const Tensor<double>& x) { return reduce_mean(mul(f(x), w)); }, at, at.size(), checked);
    }

    GradcheckRow row(const std::string& op, const std::vector<std::function<double(std::size_t&)>>& parts) {
        GradcheckRow r{op, 0.0, 0, false};
        for (const auto& p : parts) r.max_rel_error = std::max(r.max_rel_error, p(r.checked));
        r.passed = r.max_rel_error < opt_.threshold;
        return r;
    }

    GradcheckRow end_to_end(const std::string& op, DomainVariant variant);

    const GradcheckOptions& options() const { return opt_; }

private:
    GradcheckOptions opt_;
    std::mt19937_64 rng_;
};

inline GradcheckRow GradcheckRunner::end_to_end(const std::string& op, DomainVariant variant) {
    Model<double> model = build<double>(WdrnConfig::standard(3, variant, {1, 8}), opt_.seed);
    // The output convolution starts at zero, which would starve every other
    // layer of gradient, and zero biases put ReLUs of dead regions exactly on
    // the kink. Randomize both.
    std::vector<std::string> reinit;
    for (const auto& [name, t] : model.params) {
        if (name.starts_with("out.conv.") || name.ends_with(".bias")) reinit.push_back(name);
    }
    for (const auto& name : reinit) {
        const Shape shape = model.params.at(name).shape();
        model.params.replace(name, uniform(shape, -0.1, 0.1));
    }
    Tensor<double> x = uniform(Shape{1, 32, 32, 3}, 0.0, 1.0);
    // Projecting the output onto fixed weights keeps the objective free of
    // the |.| kinks in the losses (those are checked on their own above).
    const Tensor<double> w = uniform(Shape{1, 32, 32, 3}, -1.0, 1.0);
    const bool corrupt = !op.empty() && op == opt_.corrupt_op;
    auto loss_of = [&] {
        Tensor<double> in = corrupt ? faulty_identity(x, 1.01) : x;
        return reduce_mean(mul(forward(model, in), w));
    };

    x.set_requires_grad(true);
    for (auto& [name, p] : model.params) p.set_requires_grad(true);
    model.params.zero_grad();
    backward(loss_of());

    // Evaluates the loss and the ReLU activation pattern without recording.
    auto evaluate = [&](std::vector<bool>& mask) {
        NoGradGuard ng;
        mask.clear();
        detail::relu_mask_sink() = &mask;
        const double v = loss_of().item();
        detail::relu_mask_sink() = nullptr;
        return v;
    };
    std::vector<bool> base_mask, up_mask, down_mask;
    evaluate(base_mask);

    std::vector<std::pair<std::string, Tensor<double>*>> targets{{"input", &x}};
    for (auto& [name, p] : model.params) targets.emplace_back(name, &p);

    GradcheckRow r{op, 0.0, 0, false};
    std::vector<double> analytic, numeric;
    for (auto& [name, t] : targets) {
        const std::size_t want = t == &x ? 8 : 3;
        std::size_t got = 0;
        // Entries whose difference stencil flips a ReLU are skipped: the
        // function is not differentiable across the step.
        for (std::size_t attempt = 0; attempt < 20 * want && got < want; ++attempt) {
            const std::size_t i = static_cast<std::size_t>(rng_() % t->size());
            const double orig = t->data()[i];
            t->data()[i] = orig + opt_.eps;
            const double up = evaluate(up_mask);
            t->data()[i] = orig - opt_.eps;
            const double down = evaluate(down_mask);
            t->data()[i] = orig;
            if (up_mask != base_mask || down_mask != base_mask) continue;
            analytic.push_back(t->grad()[i]);
            numeric.push_back((up - down) / (2.0 * opt_.eps));
            ++got;
        }
        if (got == 0) throw std::runtime_error("gradcheck: every probe of " + name + " straddles a ReLU kink");
        r.checked += got;
    }
    r.max_rel_error = relative_error(analytic, numeric);
    r.passed = r.max_rel_error < opt_.threshold;
    return r;
}

}  // namespace detail

/// Runs every check; one row per op.
inline std::vector<GradcheckRow> run_gradcheck_suite(const GradcheckOptions& opt = {}) {
    detail::GradcheckRunner g(opt);
    using Part = std::function<double(std::size_t&)>;
    std::vector<GradcheckRow> rows;

    const Shape s{1, 6, 6, 3};
    {
        const auto x = g.uniform(s, -1, 1);
        const auto w = g.uniform(Shape{3, 3, 3, 4}, -0.5, 0.5);
        const auto b = g.uniform(Shape{1, 1, 1, 4}, -0.5, 0.5);
        std::vector<Part> parts;
        for (std::size_t stride : {1, 2}) {
            parts.push_back([&, stride](std::size_t& n) {
                return g.compare_projected("conv2d", [&](const Tensor<double>& t) { return conv2d(t, w, b, stride); }, x, n);
            });
            parts.push_back([&, stride](std::size_t& n) {
                return g.compare_projected("conv2d", [&](const Tensor<double>& t) { return conv2d(x, t, b, stride); }, w, n);
            });
            parts.push_back([&, stride](std::size_t& n) {
                return g.compare_projected("conv2d", [&](const Tensor<double>& t) { return conv2d(x, w, t, stride); }, b, n);
            });
        }
        rows.push_back(g.row("conv2d", parts));
    }
    {
        const auto x = g.uniform(Shape{1, 3, 3, 4}, -1, 1);
        const auto w = g.uniform(Shape{2, 2, 4, 3}, -0.5, 0.5);
        const auto b = g.uniform(Shape{1, 1, 1, 3}, -0.5, 0.5);
        const std::string op = "conv_transpose2d";
        rows.push_back(g.row(op, {
            [&](std::size_t& n) { return g.compare_projected(op, [&](const Tensor<double>& t) { return conv_transpose2d(t, w, b, 2); }, x, n); },
            [&](std::size_t& n) { return g.compare_projected(op, [&](const Tensor<double>& t) { return conv_transpose2d(x, t, b, 2); }, w, n); },
            [&](std::size_t& n) { return g.compare_projected(op, [&](const Tensor<double>& t) { return conv_transpose2d(x, w, t, 2); }, b, n); },
        }));
    }
    {
        const auto x = g.away_from_zero(s, 0.1, 1.0);
        rows.push_back(g.row("relu", {[&](std::size_t& n) {
            return g.compare_projected("relu", [](const Tensor<double>& t) { return relu(t); }, x, n);
        }}));
    }
    auto binary = [&](const std::string& op, auto fn, const Tensor<double>& a, const Tensor<double>& b) {
        rows.push_back(g.row(op, {
            [&](std::size_t& n) { return g.compare_projected(op, [&](const Tensor<double>& t) { return fn(t, b); }, a, n); },
            [&](std::size_t& n) { return g.compare_projected(op, [&](const Tensor<double>& t) { return fn(a, t); }, b, n); },
        }));
    };
    {
        const auto a = g.uniform(s, -1, 1);
        const auto b = g.uniform(s, -1, 1);
        const auto pos = g.uniform(s, 0.5, 1.5);
        binary("add", [](const Tensor<double>& p, const Tensor<double>& q) { return add(p, q); }, a, b);
        binary("sub", [](const Tensor<double>& p, const Tensor<double>& q) { return sub(p, q); }, a, b);
        binary("mul", [](const Tensor<double>& p, const Tensor<double>& q) { return mul(p, q); }, a, b);
        binary("div", [](const Tensor<double>& p, const Tensor<double>& q) { return div(p, q); }, a, pos);
    }
    auto unary = [&](const std::string& op, auto fn, const Tensor<double>& x) {
        rows.push_back(g.row(op, {[&](std::size_t& n) { return g.compare_projected(op, fn, x, n); }}));
    };
    unary("scalar_mul", [](const Tensor<double>& t) { return scalar_mul(t, -1.7); }, g.uniform(s, -1, 1));
    unary("add_scalar", [](const Tensor<double>& t) { return add_scalar(t, 0.3); }, g.uniform(s, -1, 1));
    unary("abs", [](const Tensor<double>& t) { return abs(t); }, g.away_from_zero(s, 0.1, 1.0));
    unary("mean", [](const Tensor<double>& t) { return reduce_mean(t); }, g.uniform(s, -1, 1));
    {
        const auto k = detail::kernel_as<double>(3, 0.8);
        unary("filter2d_valid", [k](const Tensor<double>& t) { return filter2d<double>(t, k, 3, FilterBorder::valid); },
              g.uniform(s, -1, 1));
        unary("filter2d_reflect",
              [k](const Tensor<double>& t) { return filter2d<double>(t, k, 3, FilterBorder::reflect); },
              g.uniform(s, -1, 1));
        const std::vector<double> w{0.299, 0.587, 0.114};
        unary("channel_mix", [w](const Tensor<double>& t) { return channel_mix<double>(t, w); }, g.uniform(s, -1, 1));
    }
    unary("dwt2", [](const Tensor<double>& t) { return dwt2_haar(t); }, g.uniform(Shape{1, 4, 4, 3}, -1, 1));
    unary("idwt2", [](const Tensor<double>& t) { return idwt2_haar(t); }, g.uniform(Shape{1, 2, 2, 8}, -1, 1));
    unary("space_to_depth", [](const Tensor<double>& t) { return space_to_depth(t, 2); },
          g.uniform(Shape{1, 4, 4, 3}, -1, 1));
    unary("depth_to_space", [](const Tensor<double>& t) { return depth_to_space(t, 2); },
          g.uniform(Shape{1, 2, 2, 8}, -1, 1));

    {
        const Shape img{1, 16, 16, 3};
        const LossConfig cfg;
        const auto target = g.uniform(img, 0.0, 1.0);
        // Keep every residual well away from the |.| kink.
        auto pred = g.away_from_zero(img, 0.05, 0.3);
        for (std::size_t i = 0; i < pred.size(); ++i) pred.data()[i] += target.data()[i];
        auto both = [&](const std::string& op, auto fn) {
            rows.push_back(g.row(op, {
                [&](std::size_t& n) { return g.compare(op, [&](const Tensor<double>& t) { return fn(t, target); }, pred, pred.size(), n); },
                [&](std::size_t& n) { return g.compare(op, [&](const Tensor<double>& t) { return fn(pred, t); }, target, target.size(), n); },
            }));
        };
        both("mae_loss", [](const Tensor<double>& p, const Tensor<double>& q) { return mae_loss(p, q); });
        both("ssim_loss", [&](const Tensor<double>& p, const Tensor<double>& q) { return ssim_loss(p, q, cfg); });
        both("gray_loss", [&](const Tensor<double>& p, const Tensor<double>& q) { return gray_loss(p, q, cfg); });
    }

    rows.push_back(g.end_to_end("wdrn_wavelet", DomainVariant::wavelet));
    rows.push_back(g.end_to_end("wdrn_strided", DomainVariant::strided));
    return rows;
}

}  // namespace wdrn
