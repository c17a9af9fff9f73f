#pragma once

// Single-level orthonormal 2-D Haar transform on NHWC tensors.
//
// For each 2x2 block [[a, b], [c, d]] and channel ch of a C-channel input:
//   LL = (a + b + c + d) / 2     -> output channel 0*C + ch
//   LH = (a + b - c - d) / 2     -> output channel 1*C + ch
//   HL = (a - b + c - d) / 2     -> output channel 2*C + ch
//   HH = (a - b - c + d) / 2     -> output channel 3*C + ch
// The 4x4 block matrix is symmetric and orthogonal, so the transform is its
// own inverse up to layout and each direction's adjoint is the other one.

#include <vector>

#include "wdrn/tensor.hpp"

namespace wdrn {

namespace detail {

template <std::floating_point T>
void haar_analysis(const T* src, T* dst, const Shape& in, bool accumulate) {
    const std::size_t C = in.channels, h = in.height / 2, w = in.width / 2;
    const T half{0.5};
    for (std::size_t n = 0; n < in.batch; ++n) {
        for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                const T* pa = src + ((n * in.height + 2 * i) * in.width + 2 * j) * C;
                const T* pb = pa + C;
                const T* pc = pa + in.width * C;
                const T* pd = pc + C;
                T* o = dst + ((n * h + i) * w + j) * 4 * C;
                for (std::size_t ch = 0; ch < C; ++ch) {
                    const T a = pa[ch], b = pb[ch], c = pc[ch], d = pd[ch];
                    const T ll = (a + b + c + d) * half;
                    const T lh = (a + b - c - d) * half;
                    const T hl = (a - b + c - d) * half;
                    const T hh = (a - b - c + d) * half;
                    if (accumulate) {
                        o[ch] += ll, o[C + ch] += lh, o[2 * C + ch] += hl, o[3 * C + ch] += hh;
                    } else {
                        o[ch] = ll, o[C + ch] = lh, o[2 * C + ch] = hl, o[3 * C + ch] = hh;
                    }
                }
            }
        }
    }
}

/// `in` is the sub-band shape [N, h, w, 4C].
template <std::floating_point T>
void haar_synthesis(const T* src, T* dst, const Shape& in, bool accumulate) {
    const std::size_t C = in.channels / 4, h = in.height, w = in.width;
    const std::size_t W = 2 * w;
    const T half{0.5};
    for (std::size_t n = 0; n < in.batch; ++n) {
        for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                const T* s = src + ((n * h + i) * w + j) * 4 * C;
                T* pa = dst + ((n * 2 * h + 2 * i) * W + 2 * j) * C;
                T* pb = pa + C;
                T* pc = pa + W * C;
                T* pd = pc + C;
                for (std::size_t ch = 0; ch < C; ++ch) {
                    const T ll = s[ch], lh = s[C + ch], hl = s[2 * C + ch], hh = s[3 * C + ch];
                    const T a = (ll + lh + hl + hh) * half;
                    const T b = (ll + lh - hl - hh) * half;
                    const T c = (ll - lh + hl - hh) * half;
                    const T d = (ll - lh - hl + hh) * half;
                    if (accumulate) {
                        pa[ch] += a, pb[ch] += b, pc[ch] += c, pd[ch] += d;
                    } else {
                        pa[ch] = a, pb[ch] = b, pc[ch] = c, pd[ch] = d;
                    }
                }
            }
        }
    }
}

}  // namespace detail

/// [N,H,W,C] -> [N,H/2,W/2,4C], sub-bands grouped as [LL | LH | HL | HH].
template <std::floating_point T>
Tensor<T> dwt2_haar(const Tensor<T>& x) {
    const Shape& in = x.shape();
    if (in.height % 2 != 0 || in.width % 2 != 0) {
        throw ShapeError("dwt2_haar: spatial extents of " + in.str() + " must be even");
    }
    const Shape out_shape{in.batch, in.height / 2, in.width / 2, 4 * in.channels};
    std::vector<T> out(out_shape.size());
    detail::haar_analysis(x.data().data(), out.data(), in, false);
    return detail::make_result<T>(out_shape, std::move(out), {x.node()}, [in](detail::Node<T>& self) {
        if (T* g = detail::grad_of(*self.inputs[0])) detail::haar_synthesis(self.grad.data(), g, self.shape, true);
    });
}

/// Exact inverse of dwt2_haar: [N,h,w,4C] -> [N,2h,2w,C].
template <std::floating_point T>
Tensor<T> idwt2_haar(const Tensor<T>& x) {
    const Shape& in = x.shape();
    if (in.channels % 4 != 0) {
        throw ShapeError("idwt2_haar: channel count of " + in.str() + " is not divisible by 4");
    }
    const Shape out_shape{in.batch, in.height * 2, in.width * 2, in.channels / 4};
    std::vector<T> out(out_shape.size());
    detail::haar_synthesis(x.data().data(), out.data(), in, false);
    return detail::make_result<T>(out_shape, std::move(out), {x.node()}, [](detail::Node<T>& self) {
        if (T* g = detail::grad_of(*self.inputs[0])) detail::haar_analysis(self.grad.data(), g, self.shape, true);
    });
}

}  // namespace wdrn
