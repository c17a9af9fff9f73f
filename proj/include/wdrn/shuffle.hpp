#pragma once

// Pixel shufflers. Channel convention:
//   space_to_depth: out[n, i, j, c*r*r + dy*r + dx] = in[n, i*r + dy, j*r + dx, c]
// depth_to_space is the exact inverse permutation.

#include <vector>

#include "wdrn/tensor.hpp"

namespace wdrn {

namespace detail {

/// Calls fn(space_index, depth_index) for every element, where space_index
/// addresses the [N, h*r, w*r, C] tensor and depth_index the [N, h, w, C*r*r] one.
template <typename Fn>
void for_each_shuffle_pair(const Shape& space, std::size_t r, Fn&& fn) {
    const std::size_t C = space.channels, h = space.height / r, w = space.width / r, D = C * r * r;
    for (std::size_t n = 0; n < space.batch; ++n) {
        for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                const std::size_t dbase = ((n * h + i) * w + j) * D;
                for (std::size_t dy = 0; dy < r; ++dy) {
                    for (std::size_t dx = 0; dx < r; ++dx) {
                        const std::size_t sbase = ((n * space.height + i * r + dy) * space.width + j * r + dx) * C;
                        for (std::size_t c = 0; c < C; ++c) fn(sbase + c, dbase + c * r * r + dy * r + dx);
                    }
                }
            }
        }
    }
}

}  // namespace detail

template <std::floating_point T>
Tensor<T> space_to_depth(const Tensor<T>& x, std::size_t r) {
    const Shape& in = x.shape();
    if (r == 0 || in.height % r != 0 || in.width % r != 0) {
        throw ShapeError("space_to_depth: extents of " + in.str() + " not divisible by block " + std::to_string(r));
    }
    const Shape out_shape{in.batch, in.height / r, in.width / r, in.channels * r * r};
    std::vector<T> out(out_shape.size());
    auto src = x.data();
    detail::for_each_shuffle_pair(in, r, [&](std::size_t s, std::size_t d) { out[d] = src[s]; });
    return detail::make_result<T>(out_shape, std::move(out), {x.node()}, [in, r](detail::Node<T>& self) {
        if (T* g = detail::grad_of(*self.inputs[0])) {
            detail::for_each_shuffle_pair(in, r, [&](std::size_t s, std::size_t d) { g[s] += self.grad[d]; });
        }
    });
}

template <std::floating_point T>
Tensor<T> depth_to_space(const Tensor<T>& x, std::size_t r) {
    const Shape& in = x.shape();
    if (r == 0 || in.channels % (r * r) != 0) {
        throw ShapeError("depth_to_space: channels of " + in.str() + " not divisible by " + std::to_string(r * r));
    }
    const Shape out_shape{in.batch, in.height * r, in.width * r, in.channels / (r * r)};
    std::vector<T> out(out_shape.size());
    auto src = x.data();
    detail::for_each_shuffle_pair(out_shape, r, [&](std::size_t s, std::size_t d) { out[s] = src[d]; });
    return detail::make_result<T>(out_shape, std::move(out), {x.node()}, [out_shape, r](detail::Node<T>& self) {
        if (T* g = detail::grad_of(*self.inputs[0])) {
            detail::for_each_shuffle_pair(out_shape, r, [&](std::size_t s, std::size_t d) { g[d] += self.grad[s]; });
        }
    });
}

}  // namespace wdrn
