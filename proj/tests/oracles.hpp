#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "wdrn/tensor.hpp"

namespace wdrn::test {

/// Straight-line reimplementations used as references. They share no code
/// with the library beyond reading tensor storage.

template <std::floating_point T>
double mae_oracle(const Tensor<T>& a, const Tensor<T>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a.data()[i]) - b.data()[i]);
    return s / static_cast<double>(a.size());
}

inline std::size_t mirror(long i, long n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return static_cast<std::size_t>(i);
}

/// Blurred luma of image `n` of an [N,H,W,3] batch, as an H*W row-major grid.
template <std::floating_point T>
std::vector<double> blurred_luma_oracle(const Tensor<T>& img, std::size_t n, std::size_t ksize, double sigma) {
    const Shape& s = img.shape();
    const long H = static_cast<long>(s.height), W = static_cast<long>(s.width);
    std::vector<double> luma(s.height * s.width);
    for (long y = 0; y < H; ++y) {
        for (long x = 0; x < W; ++x) {
            const std::size_t base = ((n * s.height + y) * s.width + x) * 3;
            luma[y * W + x] = 0.299 * img.data()[base] + 0.587 * img.data()[base + 1] + 0.114 * img.data()[base + 2];
        }
    }
    const long r = static_cast<long>(ksize / 2);
    double norm = 0;
    for (long dy = -r; dy <= r; ++dy) {
        for (long dx = -r; dx <= r; ++dx) norm += std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
    }
    std::vector<double> out(luma.size(), 0.0);
    for (long y = 0; y < H; ++y) {
        for (long x = 0; x < W; ++x) {
            double acc = 0;
            for (long dy = -r; dy <= r; ++dy) {
                for (long dx = -r; dx <= r; ++dx) {
                    const double w = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)) / norm;
                    acc += w * luma[mirror(y + dy, H) * W + mirror(x + dx, W)];
                }
            }
            out[y * W + x] = acc;
        }
    }
    return out;
}

template <std::floating_point T>
double gray_oracle(const Tensor<T>& a, const Tensor<T>& b, std::size_t ksize, double sigma) {
    double s = 0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < a.shape().batch; ++n) {
        const auto ga = blurred_luma_oracle(a, n, ksize, sigma);
        const auto gb = blurred_luma_oracle(b, n, ksize, sigma);
        for (std::size_t i = 0; i < ga.size(); ++i) s += std::abs(ga[i] - gb[i]);
        count += ga.size();
    }
    return s / static_cast<double>(count);
}

template <std::floating_point T>
double psnr_oracle(const Tensor<T>& a, const Tensor<T>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.data()[i]) - b.data()[i];
        s += d * d;
    }
    return 10.0 * std::log10(1.0 / (s / static_cast<double>(a.size())));
}

}  // namespace wdrn::test
