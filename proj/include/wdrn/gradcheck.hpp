#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "wdrn/tensor.hpp"

namespace wdrn {

template <std::floating_point T>
using ScalarFn = std::function<Tensor<T>(const Tensor<T>&)>;

/// Central differences of `f` at the listed flat indices of `at`. The
/// difference quotient is formed in double precision; `at` is not modified.
template <std::floating_point T>
std::vector<double> finite_diff_grad_at(const ScalarFn<T>& f, const Tensor<T>& at, std::span<const std::size_t> indices,
                                        double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_grad: eps must be positive");
    std::vector<double> out;
    out.reserve(indices.size());
    Tensor<T> probe = at.clone();
    for (std::size_t i : indices) {
        const T orig = probe.data()[i];
        probe.data()[i] = static_cast<T>(static_cast<double>(orig) + eps);
        const double up = static_cast<double>(f(probe).item());
        probe.data()[i] = static_cast<T>(static_cast<double>(orig) - eps);
        const double down = static_cast<double>(f(probe).item());
        probe.data()[i] = orig;
        out.push_back((up - down) / (2.0 * eps));
    }
    return out;
}

template <std::floating_point T>
Tensor<double> finite_diff_grad(const ScalarFn<T>& f, const Tensor<T>& at, double eps) {
    std::vector<std::size_t> all(at.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return Tensor<double>(at.shape(), finite_diff_grad_at<T>(f, at, all, eps));
}

/// max|a - b| / max(max|a|, max|b|, floor).
inline double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-12) {
    if (a.size() != b.size()) throw std::invalid_argument("relative_error: length mismatch");
    double diff = 0.0, scale = floor;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - b[i]));
        scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    }
    return diff / scale;
}

/// Analytic gradient of f at `at` (via backward) for the given indices.
template <std::floating_point T>
std::vector<double> analytic_grad_at(const ScalarFn<T>& f, const Tensor<T>& at, std::span<const std::size_t> indices) {
    Tensor<T> probe = at.clone();
    probe.set_requires_grad(true);
    backward(f(probe));
    std::vector<double> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(static_cast<double>(probe.grad()[i]));
    return out;
}

}  // namespace wdrn
