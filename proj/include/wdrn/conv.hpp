#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wdrn/tensor.hpp"

namespace wdrn {

enum class Padding { same, valid };

namespace detail {

struct ConvGeometry {
    std::size_t kh, kw, cin, cout;
    std::size_t stride;
    std::ptrdiff_t pad_y, pad_x;
    std::size_t out_h, out_w;
};

template <std::floating_point T>
ConvGeometry conv_geometry(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                           std::size_t stride, Padding padding) {
    const Shape& in = input.shape();
    const Shape& w = weights.shape();
    ConvGeometry g{w.batch, w.height, w.width, w.channels, stride, 0, 0, 0, 0};
    if (in.channels != g.cin) {
        throw ShapeError("conv2d: input " + in.str() + " has " + std::to_string(in.channels) +
                         " channels but weights " + w.str() + " expect " + std::to_string(g.cin));
    }
    if (bias.shape() != Shape{1, 1, 1, g.cout}) {
        throw ShapeError("conv2d: bias " + bias.shape().str() + " does not match weights " + w.str());
    }
    if (stride == 0) throw ShapeError("conv2d: stride must be >= 1");
    if (padding == Padding::same) {
        if (g.kh % 2 == 0 || g.kw % 2 == 0) {
            throw ShapeError("conv2d: `same` padding needs odd kernel extents, got weights " + w.str());
        }
        g.pad_y = static_cast<std::ptrdiff_t>(g.kh / 2);
        g.pad_x = static_cast<std::ptrdiff_t>(g.kw / 2);
    } else if (in.height < g.kh || in.width < g.kw) {
        throw ShapeError("conv2d: input " + in.str() + " smaller than kernel " + w.str());
    }
    g.out_h = (in.height + 2 * static_cast<std::size_t>(g.pad_y) - g.kh) / stride + 1;
    g.out_w = (in.width + 2 * static_cast<std::size_t>(g.pad_x) - g.kw) / stride + 1;
    return g;
}

/// Reflect-101 index folding (d c b | a b c d | c b a), valid for any offset.
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
    if (n == 1) return 0;
    const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
    i %= period;
    if (i < 0) i += period;
    if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
    return static_cast<std::size_t>(i);
}

}  // namespace detail

/// 2-D convolution (cross-correlation) over an NHWC input.
/// weights: [kh, kw, Cin, Cout] packed into Shape{kh, kw, Cin, Cout}; bias: [1,1,1,Cout].
template <std::floating_point T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias, std::size_t stride = 1,
                 Padding padding = Padding::same) {
    const auto g = detail::conv_geometry(input, weights, bias, stride, padding);
    const Shape& in = input.shape();
    const Shape out_shape{in.batch, g.out_h, g.out_w, g.cout};
    std::vector<T> out(out_shape.size());

    auto x = input.data();
    auto w = weights.data();
    auto b = bias.data();
    const auto H = static_cast<std::ptrdiff_t>(in.height);
    const auto W = static_cast<std::ptrdiff_t>(in.width);

    for (std::size_t n = 0; n < in.batch; ++n) {
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                T* o = &out[((n * g.out_h + oy) * g.out_w + ox) * g.cout];
                for (std::size_t co = 0; co < g.cout; ++co) o[co] = b[co];
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - g.pad_y;
                    if (iy < 0 || iy >= H) continue;
                    for (std::size_t kx = 0; kx < g.kw; ++kx) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - g.pad_x;
                        if (ix < 0 || ix >= W) continue;
                        const T* xi = &x[input.index(n, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), 0)];
                        const T* wk = &w[(ky * g.kw + kx) * g.cin * g.cout];
                        for (std::size_t ci = 0; ci < g.cin; ++ci) {
                            const T v = xi[ci];
                            const T* wr = wk + ci * g.cout;
                            for (std::size_t co = 0; co < g.cout; ++co) o[co] += v * wr[co];
                        }
                    }
                }
            }
        }
    }

    return detail::make_result<T>(
        out_shape, std::move(out), {input.node(), weights.node(), bias.node()},
        [g, in](detail::Node<T>& self) {
            auto& xn = *self.inputs[0];
            auto& wn = *self.inputs[1];
            auto& bn = *self.inputs[2];
            T* gx = detail::grad_of(xn);
            T* gw = detail::grad_of(wn);
            T* gb = detail::grad_of(bn);
            const T* x = xn.data.data();
            const T* w = wn.data.data();
            const auto H = static_cast<std::ptrdiff_t>(in.height);
            const auto W = static_cast<std::ptrdiff_t>(in.width);
            for (std::size_t n = 0; n < in.batch; ++n) {
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const T* go = &self.grad[((n * g.out_h + oy) * g.out_w + ox) * g.cout];
                        if (gb) {
                            for (std::size_t co = 0; co < g.cout; ++co) gb[co] += go[co];
                        }
                        for (std::size_t ky = 0; ky < g.kh; ++ky) {
                            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - g.pad_y;
                            if (iy < 0 || iy >= H) continue;
                            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                                const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - g.pad_x;
                                if (ix < 0 || ix >= W) continue;
                                const std::size_t base =
                                    ((n * in.height + static_cast<std::size_t>(iy)) * in.width +
                                     static_cast<std::size_t>(ix)) * g.cin;
                                const std::size_t wbase = (ky * g.kw + kx) * g.cin * g.cout;
                                for (std::size_t ci = 0; ci < g.cin; ++ci) {
                                    const T* wr = w + wbase + ci * g.cout;
                                    if (gx) {
                                        T acc{0};
                                        for (std::size_t co = 0; co < g.cout; ++co) acc += go[co] * wr[co];
                                        gx[base + ci] += acc;
                                    }
                                    if (gw) {
                                        const T v = x[base + ci];
                                        T* gwr = gw + wbase + ci * g.cout;
                                        for (std::size_t co = 0; co < g.cout; ++co) gwr[co] += v * go[co];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
}

/// Transposed convolution: each input pixel scatters a kh x kw patch at
/// (y*stride, x*stride). Output extent (in - 1) * stride + k.
/// weights: Shape{kh, kw, Cin, Cout}; bias: [1,1,1,Cout].
template <std::floating_point T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                           std::size_t stride) {
    const Shape& in = input.shape();
    const Shape& ws = weights.shape();
    const std::size_t kh = ws.batch, kw = ws.height, cin = ws.width, cout = ws.channels;
    if (in.channels != cin) {
        throw ShapeError("conv_transpose2d: input " + in.str() + " has " + std::to_string(in.channels) +
                         " channels but weights " + ws.str() + " expect " + std::to_string(cin));
    }
    if (bias.shape() != Shape{1, 1, 1, cout}) {
        throw ShapeError("conv_transpose2d: bias " + bias.shape().str() + " does not match weights " + ws.str());
    }
    if (stride == 0) throw ShapeError("conv_transpose2d: stride must be >= 1");
    const Shape out_shape{in.batch, (in.height - 1) * stride + kh, (in.width - 1) * stride + kw, cout};
    std::vector<T> out(out_shape.size());
    auto x = input.data();
    auto w = weights.data();
    auto b = bias.data();
    for (std::size_t i = 0; i < out.size(); i += cout) {
        for (std::size_t co = 0; co < cout; ++co) out[i + co] = b[co];
    }
    for (std::size_t n = 0; n < in.batch; ++n) {
        for (std::size_t iy = 0; iy < in.height; ++iy) {
            for (std::size_t ix = 0; ix < in.width; ++ix) {
                const T* xi = &x[input.index(n, iy, ix, 0)];
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        T* o = &out[((n * out_shape.height + iy * stride + ky) * out_shape.width + ix * stride + kx) *
                                    cout];
                        const T* wk = &w[(ky * kw + kx) * cin * cout];
                        for (std::size_t ci = 0; ci < cin; ++ci) {
                            const T v = xi[ci];
                            const T* wr = wk + ci * cout;
                            for (std::size_t co = 0; co < cout; ++co) o[co] += v * wr[co];
                        }
                    }
                }
            }
        }
    }
    return detail::make_result<T>(
        out_shape, std::move(out), {input.node(), weights.node(), bias.node()},
        [in, out_shape, kh, kw, cin, cout, stride](detail::Node<T>& self) {
            auto& xn = *self.inputs[0];
            auto& wn = *self.inputs[1];
            auto& bn = *self.inputs[2];
            T* gx = detail::grad_of(xn);
            T* gw = detail::grad_of(wn);
            T* gb = detail::grad_of(bn);
            if (gb) {
                for (std::size_t i = 0; i < self.grad.size(); i += cout) {
                    for (std::size_t co = 0; co < cout; ++co) gb[co] += self.grad[i + co];
                }
            }
            for (std::size_t n = 0; n < in.batch; ++n) {
                for (std::size_t iy = 0; iy < in.height; ++iy) {
                    for (std::size_t ix = 0; ix < in.width; ++ix) {
                        const std::size_t base = ((n * in.height + iy) * in.width + ix) * cin;
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const T* go =
                                    &self.grad[((n * out_shape.height + iy * stride + ky) * out_shape.width +
                                                ix * stride + kx) *
                                               cout];
                                const std::size_t wbase = (ky * kw + kx) * cin * cout;
                                for (std::size_t ci = 0; ci < cin; ++ci) {
                                    const T* wr = wn.data.data() + wbase + ci * cout;
                                    if (gx) {
                                        T acc{0};
                                        for (std::size_t co = 0; co < cout; ++co) acc += go[co] * wr[co];
                                        gx[base + ci] += acc;
                                    }
                                    if (gw) {
                                        const T v = xn.data[base + ci];
                                        T* gwr = gw + wbase + ci * cout;
                                        for (std::size_t co = 0; co < cout; ++co) gwr[co] += v * go[co];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
}

enum class FilterBorder { valid, reflect };

/// Applies one fixed (non-trainable) k x k kernel to every channel independently.
/// `valid` shrinks the output by k - 1; `reflect` keeps the extent using
/// reflect-101 borders. Window sums accumulate in double precision.
template <std::floating_point T>
Tensor<T> filter2d(const Tensor<T>& input, std::span<const T> kernel, std::size_t k, FilterBorder border) {
    if (k % 2 == 0 || kernel.size() != k * k) {
        throw ShapeError("filter2d: kernel must be odd-sized and hold k*k taps");
    }
    const Shape& in = input.shape();
    const auto r = static_cast<std::ptrdiff_t>(k / 2);
    Shape out_shape = in;
    if (border == FilterBorder::valid) {
        if (in.height < k || in.width < k) {
            throw ShapeError("filter2d: input " + in.str() + " smaller than " + std::to_string(k) + "x" +
                             std::to_string(k) + " window");
        }
        out_shape.height = in.height - k + 1;
        out_shape.width = in.width - k + 1;
    }
    std::vector<T> taps(kernel.begin(), kernel.end());

    // Source pixel for output (oy, ox) and tap (dy, dx).
    auto source = [in, r, border](std::size_t oy, std::size_t dy, std::size_t len) {
        if (border == FilterBorder::valid) return oy + dy;
        return detail::reflect_index(static_cast<std::ptrdiff_t>(oy + dy) - r, len);
    };

    std::vector<T> out(out_shape.size(), T{0});
    auto x = input.data();
    const std::size_t C = in.channels;
    std::vector<double> acc(C);
    for (std::size_t n = 0; n < in.batch; ++n) {
        for (std::size_t oy = 0; oy < out_shape.height; ++oy) {
            for (std::size_t ox = 0; ox < out_shape.width; ++ox) {
                std::fill(acc.begin(), acc.end(), 0.0);
                for (std::size_t dy = 0; dy < k; ++dy) {
                    const std::size_t sy = source(oy, dy, in.height);
                    for (std::size_t dx = 0; dx < k; ++dx) {
                        const std::size_t sx = source(ox, dx, in.width);
                        const double t = kernel[dy * k + dx];
                        const T* xi = &x[input.index(n, sy, sx, 0)];
                        for (std::size_t c = 0; c < C; ++c) acc[c] += t * xi[c];
                    }
                }
                T* o = &out[((n * out_shape.height + oy) * out_shape.width + ox) * C];
                for (std::size_t c = 0; c < C; ++c) o[c] = static_cast<T>(acc[c]);
            }
        }
    }
    return detail::make_result<T>(
        out_shape, std::move(out), {input.node()},
        [in, out_shape, taps = std::move(taps), k, source](detail::Node<T>& self) {
            T* gx = detail::grad_of(*self.inputs[0]);
            if (!gx) return;
            const std::size_t C = in.channels;
            for (std::size_t n = 0; n < in.batch; ++n) {
                for (std::size_t oy = 0; oy < out_shape.height; ++oy) {
                    for (std::size_t ox = 0; ox < out_shape.width; ++ox) {
                        const T* go = &self.grad[((n * out_shape.height + oy) * out_shape.width + ox) * C];
                        for (std::size_t dy = 0; dy < k; ++dy) {
                            const std::size_t sy = source(oy, dy, in.height);
                            for (std::size_t dx = 0; dx < k; ++dx) {
                                const std::size_t sx = source(ox, dx, in.width);
                                const T t = taps[dy * k + dx];
                                T* gi = gx + ((n * in.height + sy) * in.width + sx) * C;
                                for (std::size_t c = 0; c < C; ++c) gi[c] += t * go[c];
                            }
                        }
                    }
                }
            }
        });
}

/// Weighted sum over the channel axis: [N,H,W,C] -> [N,H,W,1].
template <std::floating_point T>
Tensor<T> channel_mix(const Tensor<T>& input, std::span<const T> weights) {
    const Shape& in = input.shape();
    if (weights.size() != in.channels) {
        throw ShapeError("channel_mix: " + std::to_string(weights.size()) + " weights for input " + in.str());
    }
    const Shape out_shape{in.batch, in.height, in.width, 1};
    std::vector<T> out(out_shape.size());
    auto x = input.data();
    for (std::size_t p = 0; p < out.size(); ++p) {
        double acc = 0.0;
        for (std::size_t c = 0; c < in.channels; ++c) acc += double(weights[c]) * x[p * in.channels + c];
        out[p] = static_cast<T>(acc);
    }
    std::vector<T> w(weights.begin(), weights.end());
    return detail::make_result<T>(out_shape, std::move(out), {input.node()},
                                  [w = std::move(w)](detail::Node<T>& self) {
                                      T* gx = detail::grad_of(*self.inputs[0]);
                                      if (!gx) return;
                                      const std::size_t C = w.size();
                                      for (std::size_t p = 0; p < self.grad.size(); ++p) {
                                          for (std::size_t c = 0; c < C; ++c) gx[p * C + c] += w[c] * self.grad[p];
                                      }
                                  });
}

}  // namespace wdrn
