#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "wdrn/conv.hpp"
#include "wdrn/error.hpp"
#include "wdrn/tensor.hpp"

namespace wdrn {

struct LossConfig {
    double alpha = 1.0;  ///< MAE weight
    double beta = 1.0;   ///< SSIM weight
    double gamma = 1.0;  ///< gray weight
    double blur_sigma = 5.0;
    std::size_t blur_kernel = 21;
    std::array<double, 3> gray_weights{0.299, 0.587, 0.114};
    std::size_t ssim_window = 11;
    double ssim_sigma = 1.5;
    double ssim_k1 = 0.01;
    double ssim_k2 = 0.03;
    double data_range = 1.0;

    friend bool operator==(const LossConfig&, const LossConfig&) = default;

    double c1() const { return (ssim_k1 * data_range) * (ssim_k1 * data_range); }
    double c2() const { return (ssim_k2 * data_range) * (ssim_k2 * data_range); }

    void validate() const {
        if (alpha < 0) throw ConfigError("alpha", "alpha must be >= 0");
        if (beta < 0) throw ConfigError("beta", "beta must be >= 0");
        if (gamma < 0) throw ConfigError("gamma", "gamma must be >= 0");
        if (!(blur_sigma > 0)) throw ConfigError("blur_sigma", "blur_sigma must be > 0");
        if (blur_kernel % 2 == 0) throw ConfigError("blur_kernel", "blur_kernel must be odd");
        if (ssim_window % 2 == 0) throw ConfigError("ssim_window", "ssim_window must be odd");
        if (!(ssim_sigma > 0)) throw ConfigError("ssim_sigma", "ssim_sigma must be > 0");
        if (!(data_range > 0)) throw ConfigError("data_range", "data_range must be > 0");
        const double s = gray_weights[0] + gray_weights[1] + gray_weights[2];
        if (std::abs(s - 1.0) > 1e-9) throw ConfigError("gray_weights", "gray_weights must sum to 1");
    }
};

/// Normalized samples of exp(-(x^2 + y^2) / (2 sigma^2)) on a centered
/// size x size grid, row-major.
inline std::vector<double> gaussian_kernel(std::size_t size, double sigma) {
    if (size % 2 == 0) throw std::invalid_argument("gaussian_kernel: size must be odd, got " + std::to_string(size));
    if (!(sigma > 0)) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
    const auto r = static_cast<long>(size / 2);
    std::vector<double> k(size * size);
    double total = 0.0;
    for (long y = -r; y <= r; ++y) {
        for (long x = -r; x <= r; ++x) {
            const double v = std::exp(-static_cast<double>(x * x + y * y) / (2.0 * sigma * sigma));
            k[static_cast<std::size_t>((y + r) * static_cast<long>(size) + (x + r))] = v;
            total += v;
        }
    }
    for (auto& v : k) v /= total;
    return k;
}

namespace detail {

template <std::floating_point T>
std::vector<T> kernel_as(std::size_t size, double sigma) {
    auto k = gaussian_kernel(size, sigma);
    return {k.begin(), k.end()};
}

}  // namespace detail

/// Mean absolute error over every element (batch included).
template <std::floating_point T>
Tensor<T> mae_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    require_same_shape(pred.shape(), target.shape(), "mae_loss");
    return reduce_mean(abs(sub(pred, target)));
}

/// Mean of the SSIM map: Gaussian-windowed statistics, `valid` windows,
/// each channel independently. Differentiable in both arguments.
template <std::floating_point T>
Tensor<T> ssim_index(const Tensor<T>& pred, const Tensor<T>& target, const LossConfig& cfg) {
    require_same_shape(pred.shape(), target.shape(), "ssim");
    const Shape& s = pred.shape();
    if (s.height < cfg.ssim_window || s.width < cfg.ssim_window) {
        throw ShapeError("ssim: image " + s.str() + " is smaller than the " + std::to_string(cfg.ssim_window) +
                         "x" + std::to_string(cfg.ssim_window) + " window");
    }
    const auto win = detail::kernel_as<T>(cfg.ssim_window, cfg.ssim_sigma);
    const std::size_t k = cfg.ssim_window;
    auto blur = [&](const Tensor<T>& t) { return filter2d<T>(t, win, k, FilterBorder::valid); };
    const T c1 = static_cast<T>(cfg.c1());
    const T c2 = static_cast<T>(cfg.c2());

    const Tensor<T> mu_x = blur(pred);
    const Tensor<T> mu_y = blur(target);
    const Tensor<T> mu_xx = mul(mu_x, mu_x);
    const Tensor<T> mu_yy = mul(mu_y, mu_y);
    const Tensor<T> mu_xy = mul(mu_x, mu_y);
    const Tensor<T> var_x = sub(blur(mul(pred, pred)), mu_xx);
    const Tensor<T> var_y = sub(blur(mul(target, target)), mu_yy);
    const Tensor<T> cov = sub(blur(mul(pred, target)), mu_xy);

    const Tensor<T> num = mul(add_scalar(scalar_mul(mu_xy, T{2}), c1), add_scalar(scalar_mul(cov, T{2}), c2));
    const Tensor<T> den = mul(add_scalar(add(mu_xx, mu_yy), c1), add_scalar(add(var_x, var_y), c2));
    return reduce_mean(div(num, den));
}

template <std::floating_point T>
Tensor<T> ssim_loss(const Tensor<T>& pred, const Tensor<T>& target, const LossConfig& cfg) {
    return add_scalar(scalar_mul(ssim_index(pred, target, cfg), T{-1}), T{1});
}

/// Blurred luma of a 3-channel batch: [N,H,W,3] -> [N,H,W,1].
template <std::floating_point T>
Tensor<T> blurred_gray(const Tensor<T>& img, const LossConfig& cfg) {
    if (img.shape().channels != 3) {
        throw ShapeError("gray_loss: expected 3-channel input, got " + img.shape().str());
    }
    const std::array<T, 3> w{static_cast<T>(cfg.gray_weights[0]), static_cast<T>(cfg.gray_weights[1]),
                             static_cast<T>(cfg.gray_weights[2])};
    const auto kernel = detail::kernel_as<T>(cfg.blur_kernel, cfg.blur_sigma);
    return filter2d<T>(channel_mix<T>(img, w), kernel, cfg.blur_kernel, FilterBorder::reflect);
}

/// L1 distance between Gaussian-blurred grayscale versions of both images.
template <std::floating_point T>
Tensor<T> gray_loss(const Tensor<T>& pred, const Tensor<T>& target, const LossConfig& cfg) {
    if (pred.shape().channels != 3 || target.shape().channels != 3) {
        throw ShapeError("gray_loss: expected 3-channel inputs, got " + pred.shape().str() + " and " +
                         target.shape().str());
    }
    require_same_shape(pred.shape(), target.shape(), "gray_loss");
    return reduce_mean(abs(sub(blurred_gray(pred, cfg), blurred_gray(target, cfg))));
}

template <std::floating_point T>
struct LossTerms {
    Tensor<T> mae;
    Tensor<T> ssim;
    Tensor<T> gray;
    Tensor<T> total;
};

/// alpha * mae + beta * ssim + gamma * gray. Terms with zero weight are
/// skipped entirely, so they contribute neither value nor gradient.
template <std::floating_point T>
Tensor<T> weighted_total(const Tensor<T>& mae, const Tensor<T>& ssim, const Tensor<T>& gray, const LossConfig& cfg) {
    Tensor<T> sum = Tensor<T>::scalar(T{0});
    auto accumulate = [&](const Tensor<T>& term, double weight) {
        if (weight != 0.0) sum = add(sum, scalar_mul(term, static_cast<T>(weight)));
    };
    accumulate(mae, cfg.alpha);
    accumulate(ssim, cfg.beta);
    accumulate(gray, cfg.gamma);
    return sum;
}

template <std::floating_point T>
LossTerms<T> total_loss(const Tensor<T>& pred, const Tensor<T>& target, const LossConfig& cfg) {
    LossTerms<T> t{mae_loss(pred, target), ssim_loss(pred, target, cfg), gray_loss(pred, target, cfg), {}};
    t.total = weighted_total(t.mae, t.ssim, t.gray, cfg);
    return t;
}

}  // namespace wdrn
