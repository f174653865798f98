#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "tsit/gemm.hpp"
#include "tsit/tensor.hpp"

namespace tsit {

// ---------------------------------------------------------------------------
// broadcasting helpers (numpy-style, trailing dimensions aligned)
// ---------------------------------------------------------------------------

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t nd = std::max(a.size(), b.size());
    Shape out(nd, 1);
    for (std::size_t i = 0; i < nd; ++i) {
        const std::size_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
        const std::size_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) +
                             " are not broadcastable");
        }
        out[i] = std::max(da, db);
    }
    return out;
}

// strides of `t` (contiguous row-major) expanded over the dims of `out`,
// with stride 0 on broadcast axes
inline std::vector<std::size_t> broadcast_strides(const Shape& t, const Shape& out) {
    std::vector<std::size_t> contiguous(t.size(), 1);
    for (std::size_t i = t.size(); i-- > 1;) contiguous[i - 1] = contiguous[i] * t[i];
    std::vector<std::size_t> strides(out.size(), 0);
    const std::size_t off = out.size() - t.size();
    for (std::size_t i = 0; i < t.size(); ++i) {
        const std::size_t od = out[off + i];
        if (t[i] == od) {
            strides[off + i] = contiguous[i];
        } else if (t[i] == 1) {
            strides[off + i] = 0;
        } else {
            throw ShapeError("shape " + shape_str(t) + " does not broadcast over " + shape_str(out));
        }
    }
    return strides;
}

// Walks the index space of `shape` once, maintaining a flat offset per stride
// set. fn(out_flat, offsets) is called for every element in row-major order.
template <std::size_t K, typename F>
inline void for_each_broadcast(const Shape& shape,
                               const std::array<std::vector<std::size_t>, K>& strides, F&& fn) {
    const std::size_t total = shape_numel(shape);
    const std::size_t nd = shape.size();
    std::vector<std::size_t> idx(nd, 0);
    std::array<std::size_t, K> off{};
    for (std::size_t flat = 0; flat < total; ++flat) {
        fn(flat, off);
        for (std::size_t d = nd; d-- > 0;) {
            ++idx[d];
            for (std::size_t s = 0; s < K; ++s) off[s] += strides[s][d];
            if (idx[d] < shape[d]) break;
            idx[d] = 0;
            for (std::size_t s = 0; s < K; ++s) off[s] -= strides[s][d] * shape[d];
        }
    }
}

// ---------------------------------------------------------------------------
// elementwise binary ops
// ---------------------------------------------------------------------------

namespace detail {

// f(a, b) -> value; dfa/dfb produce the local partials given (a, b, out_grad)
template <typename T, typename FwdF, typename BwdF>
Tensor<T> binary_op(const char* name, const Tensor<T>& a, const Tensor<T>& b, FwdF fwd, BwdF bwd) {
    const Shape oshape = broadcast_shape(a.shape(), b.shape());
    const std::size_t n = shape_numel(oshape);
    std::vector<T> out(n);
    if (a.shape() == b.shape()) {
        const T* pa = a.data();
        const T* pb = b.data();
        for (std::size_t i = 0; i < n; ++i) out[i] = fwd(pa[i], pb[i]);
    } else {
        const std::array<std::vector<std::size_t>, 2> strides = {
            broadcast_strides(a.shape(), oshape), broadcast_strides(b.shape(), oshape)};
        const T* pa = a.data();
        const T* pb = b.data();
        for_each_broadcast<2>(oshape, strides, [&](std::size_t i, const auto& off) {
            out[i] = fwd(pa[off[0]], pb[off[1]]);
        });
    }
    return record_op<T>(
        name, oshape, std::move(out), {a, b},
        [oshape, bwd](const TensorImpl<T>& o, const auto& ins) {
            auto& ia = *ins[0];
            auto& ib = *ins[1];
            const bool need_a = ia.requires_grad;
            const bool need_b = ib.requires_grad;
            if (need_a) ia.ensure_grad();
            if (need_b) ib.ensure_grad();
            const std::array<std::vector<std::size_t>, 2> strides = {
                broadcast_strides(ia.shape, oshape), broadcast_strides(ib.shape, oshape)};
            for_each_broadcast<2>(oshape, strides, [&](std::size_t i, const auto& off) {
                const T g = o.grad[i];
                T ga = T(0), gb = T(0);
                bwd(ia.data[off[0]], ib.data[off[1]], g, ga, gb);
                if (need_a) ia.grad[off[0]] += ga;
                if (need_b) ib.grad[off[1]] += gb;
            });
        });
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op<T>(
        "add", a, b, [](T x, T y) { return x + y; },
        [](T, T, T g, T& ga, T& gb) { ga = g; gb = g; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op<T>(
        "sub", a, b, [](T x, T y) { return x - y; },
        [](T, T, T g, T& ga, T& gb) { ga = g; gb = -g; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op<T>(
        "mul", a, b, [](T x, T y) { return x * y; },
        [](T x, T y, T g, T& ga, T& gb) { ga = g * y; gb = g * x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op<T>(
        "div", a, b, [](T x, T y) { return x / y; },
        [](T x, T y, T g, T& ga, T& gb) {
            ga = g / y;
            gb = -g * x / (y * y);
        });
}

// ---------------------------------------------------------------------------
// elementwise unary ops
// ---------------------------------------------------------------------------

namespace detail {

template <typename T, typename FwdF, typename BwdF>
Tensor<T> unary_op(const char* name, const Tensor<T>& x, FwdF fwd, BwdF bwd) {
    const std::size_t n = x.numel();
    std::vector<T> out(n);
    const T* px = x.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(px[i]);
    return record_op<T>(name, x.shape(), std::move(out), {x},
                        [bwd](const TensorImpl<T>& o, const auto& ins) {
                            auto& ix = *ins[0];
                            if (!ix.requires_grad) return;
                            ix.ensure_grad();
                            for (std::size_t i = 0; i < o.data.size(); ++i) {
                                ix.grad[i] += bwd(ix.data[i], o.data[i], o.grad[i]);
                            }
                        });
}

}  // namespace detail

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
    return detail::unary_op<T>(
        "neg", x, [](T v) { return -v; }, [](T, T, T g) { return -g; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
    return detail::unary_op<T>(
        "add_scalar", x, [c](T v) { return v + c; }, [](T, T, T g) { return g; });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
    return detail::unary_op<T>(
        "mul_scalar", x, [c](T v) { return v * c; }, [c](T, T, T g) { return g * c; });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
    return detail::unary_op<T>(
        "leaky_relu", x, [slope](T v) { return v >= T(0) ? v : slope * v; },
        [slope](T v, T, T g) { return v >= T(0) ? g : slope * g; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    return leaky_relu(x, T(0));
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
    return detail::unary_op<T>(
        "tanh", x, [](T v) { return std::tanh(v); },
        [](T, T y, T g) { return g * (T(1) - y * y); });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
    return detail::unary_op<T>(
        "sqrt", x, [](T v) { return std::sqrt(v); },
        [](T, T y, T g) { return g * T(0.5) / y; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
    return detail::unary_op<T>(
        "abs", x, [](T v) { return std::abs(v); },
        [](T v, T, T g) { return v > T(0) ? g : (v < T(0) ? -g : T(0)); });
}

// elementwise min(x, c); the hinge building block
template <typename T>
Tensor<T> minimum(const Tensor<T>& x, T c) {
    return detail::unary_op<T>(
        "minimum", x, [c](T v) { return v < c ? v : c; },
        [c](T v, T, T g) { return v < c ? g : T(0); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
    return detail::unary_op<T>(
        "square", x, [](T v) { return v * v; }, [](T v, T, T g) { return T(2) * v * g; });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

namespace detail {

inline Shape reduced_shape(const Shape& in, const std::vector<std::size_t>& axes, bool keepdims) {
    for (std::size_t ax : axes) {
        if (ax >= in.size()) throw ShapeError("reduction axis out of range for " + shape_str(in));
    }
    Shape kept = in;
    for (std::size_t ax : axes) kept[ax] = 1;
    if (keepdims) return kept;
    Shape out;
    for (std::size_t d = 0; d < in.size(); ++d) {
        if (std::find(axes.begin(), axes.end(), d) == axes.end()) out.push_back(in[d]);
    }
    return out;
}

}  // namespace detail

// sum over the given axes; scale lets mean share the same node
template <typename T>
Tensor<T> sum_axes(const Tensor<T>& x, const std::vector<std::size_t>& axes, bool keepdims = false,
                   T scale = T(1)) {
    if (x.numel() == 0) throw ShapeError("reduction over empty tensor");
    const Shape kshape = detail::reduced_shape(x.shape(), axes, /*keepdims=*/true);
    const Shape oshape = detail::reduced_shape(x.shape(), axes, keepdims);
    std::vector<T> out(shape_numel(kshape), T(0));
    const std::array<std::vector<std::size_t>, 1> strides = {broadcast_strides(kshape, x.shape())};
    const T* px = x.data();
    for_each_broadcast<1>(x.shape(), strides,
                          [&](std::size_t i, const auto& off) { out[off[0]] += px[i]; });
    if (scale != T(1)) {
        for (T& v : out) v *= scale;
    }
    const Shape xshape = x.shape();
    return record_op<T>(
        scale == T(1) ? "sum" : "mean", oshape, std::move(out), {x},
        [kshape, xshape, scale](const TensorImpl<T>& o, const auto& ins) {
            auto& ix = *ins[0];
            if (!ix.requires_grad) return;
            ix.ensure_grad();
            const std::array<std::vector<std::size_t>, 1> strides = {
                broadcast_strides(kshape, xshape)};
            for_each_broadcast<1>(xshape, strides, [&](std::size_t i, const auto& off) {
                ix.grad[i] += o.grad[off[0]] * scale;
            });
        });
}

template <typename T>
Tensor<T> mean_axes(const Tensor<T>& x, const std::vector<std::size_t>& axes,
                    bool keepdims = false) {
    std::size_t count = 1;
    for (std::size_t ax : axes) count *= x.shape().at(ax);
    if (count == 0) throw ShapeError("mean over empty axes");
    return sum_axes(x, axes, keepdims, T(1) / static_cast<T>(count));
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    std::vector<std::size_t> axes(x.ndim());
    for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
    return sum_axes(x, axes, false);
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    std::vector<std::size_t> axes(x.ndim());
    for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
    return mean_axes(x, axes, false);
}

// population variance over axes, computed as E[x^2] - E[x]^2 on the tape
template <typename T>
Tensor<T> variance_axes(const Tensor<T>& x, const std::vector<std::size_t>& axes,
                        bool keepdims = false) {
    Tensor<T> mu = mean_axes(x, axes, keepdims);
    Tensor<T> msq = mean_axes(mul(x, x), axes, keepdims);
    return sub(msq, mul(mu, mu));
}

// ---------------------------------------------------------------------------
// matmul (2-D)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 2) {
        throw ShapeError("matmul expects 2-D operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2) {
        throw ShapeError("matmul inner dims disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    std::vector<T> out(m * n, T(0));
    gemm_nn(m, k, n, a.data(), b.data(), out.data());
    return record_op<T>(
        "matmul", Shape{m, n}, std::move(out), {a, b},
        [m, k, n](const TensorImpl<T>& o, const auto& ins) {
            auto& ia = *ins[0];
            auto& ib = *ins[1];
            if (ia.requires_grad) {
                ia.ensure_grad();
                // dA[i][t] = sum_j G[i][j] * B[t][j]
                gemm_nt(m, n, k, o.grad.data(), ib.data.data(), ia.grad.data());
            }
            if (ib.requires_grad) {
                ib.ensure_grad();
                std::vector<T> at(k * m);
                transpose(m, k, ia.data.data(), at.data());
                gemm_nn(k, m, n, at.data(), o.grad.data(), ib.grad.data());
            }
        });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                         " changes element count");
    }
    std::vector<T> out = x.vec();
    return record_op<T>("reshape", std::move(shape), std::move(out), {x},
                        [](const TensorImpl<T>& o, const auto& ins) {
                            auto& ix = *ins[0];
                            if (!ix.requires_grad) return;
                            ix.ensure_grad();
                            for (std::size_t i = 0; i < o.grad.size(); ++i)
                                ix.grad[i] += o.grad[i];
                        });
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis) {
    if (a.ndim() != b.ndim() || axis >= a.ndim()) {
        throw ShapeError("concat: rank mismatch or bad axis for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    for (std::size_t d = 0; d < a.ndim(); ++d) {
        if (d != axis && a.dim(d) != b.dim(d)) {
            throw ShapeError("concat: non-axis extents differ: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
        }
    }
    Shape oshape = a.shape();
    oshape[axis] += b.dim(axis);
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= a.dim(d);
    for (std::size_t d = axis + 1; d < a.ndim(); ++d) inner *= a.dim(d);
    const std::size_t a_block = a.dim(axis) * inner;
    const std::size_t b_block = b.dim(axis) * inner;
    std::vector<T> out(shape_numel(oshape));
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(a.data() + o * a_block, a_block, out.data() + o * (a_block + b_block));
        std::copy_n(b.data() + o * b_block, b_block, out.data() + o * (a_block + b_block) + a_block);
    }
    return record_op<T>(
        "concat", std::move(oshape), std::move(out), {a, b},
        [outer, a_block, b_block](const TensorImpl<T>& o, const auto& ins) {
            auto& ia = *ins[0];
            auto& ib = *ins[1];
            if (ia.requires_grad) {
                ia.ensure_grad();
                for (std::size_t ou = 0; ou < outer; ++ou)
                    for (std::size_t i = 0; i < a_block; ++i)
                        ia.grad[ou * a_block + i] += o.grad[ou * (a_block + b_block) + i];
            }
            if (ib.requires_grad) {
                ib.ensure_grad();
                for (std::size_t ou = 0; ou < outer; ++ou)
                    for (std::size_t i = 0; i < b_block; ++i)
                        ib.grad[ou * b_block + i] += o.grad[ou * (a_block + b_block) + a_block + i];
            }
        });
}

// repeat channels cyclically: out[:, c] = x[:, c % C] (used to feed a
// 3-channel image into a site expecting target_c channels)
template <typename T>
Tensor<T> tile_channels(const Tensor<T>& x, std::size_t target_c) {
    if (x.ndim() != 4) throw ShapeError("tile_channels expects 4-D input");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t plane = H * W;
    std::vector<T> out(N * target_c * plane);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < target_c; ++c)
            std::copy_n(x.data() + (n * C + c % C) * plane, plane,
                        out.data() + (n * target_c + c) * plane);
    return record_op<T>("tile_channels", Shape{N, target_c, H, W}, std::move(out), {x},
                        [N, C, target_c, plane](const TensorImpl<T>& o, const auto& ins) {
                            auto& ix = *ins[0];
                            if (!ix.requires_grad) return;
                            ix.ensure_grad();
                            for (std::size_t n = 0; n < N; ++n)
                                for (std::size_t c = 0; c < target_c; ++c) {
                                    const T* g = o.grad.data() + (n * target_c + c) * plane;
                                    T* dst = ix.grad.data() + (n * C + c % C) * plane;
                                    for (std::size_t i = 0; i < plane; ++i) dst[i] += g[i];
                                }
                        });
}

// ---------------------------------------------------------------------------
// operator sugar
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
    return add(a, b);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
    return sub(a, b);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
    return mul(a, b);
}
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) {
    return div(a, b);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& x) {
    return neg(x);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& x, T c) {
    return mul_scalar(x, c);
}
template <typename T>
Tensor<T> operator*(T c, const Tensor<T>& x) {
    return mul_scalar(x, c);
}
template <typename T>
Tensor<T> operator+(const Tensor<T>& x, T c) {
    return add_scalar(x, c);
}

}  // namespace tsit
