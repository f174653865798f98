#pragma once

#include <cstddef>
#include <vector>

#include "tsit/debug.hpp"
#include "tsit/gemm.hpp"
#include "tsit/ops.hpp"
#include "tsit/tensor.hpp"

namespace tsit {

// ---------------------------------------------------------------------------
// im2col / col2im
// ---------------------------------------------------------------------------

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride,
                                   std::size_t pad) {
    const std::size_t padded = in + 2 * pad;
    if (padded < k) throw ShapeError("conv kernel larger than padded input");
    return (padded - k) / stride + 1;
}

// col layout: rows = C*kh*kw, cols = Ho*Wo (one input sample)
template <typename T>
inline void im2col(const T* x, std::size_t C, std::size_t H, std::size_t W, std::size_t kh,
                   std::size_t kw, std::size_t stride, std::size_t pad, std::size_t Ho,
                   std::size_t Wo, T* col) {
    const std::size_t plane = H * W;
    const std::size_t ocols = Ho * Wo;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t ki = 0; ki < kh; ++ki) {
            for (std::size_t kj = 0; kj < kw; ++kj) {
                T* row = col + ((c * kh + ki) * kw + kj) * ocols;
                for (std::size_t ho = 0; ho < Ho; ++ho) {
                    const std::ptrdiff_t hi =
                        static_cast<std::ptrdiff_t>(ho * stride + ki) -
                        static_cast<std::ptrdiff_t>(pad);
                    if (hi < 0 || hi >= static_cast<std::ptrdiff_t>(H)) {
                        for (std::size_t wo = 0; wo < Wo; ++wo) row[ho * Wo + wo] = T(0);
                        continue;
                    }
                    for (std::size_t wo = 0; wo < Wo; ++wo) {
                        const std::ptrdiff_t wi =
                            static_cast<std::ptrdiff_t>(wo * stride + kj) -
                            static_cast<std::ptrdiff_t>(pad);
                        row[ho * Wo + wo] =
                            (wi < 0 || wi >= static_cast<std::ptrdiff_t>(W))
                                ? T(0)
                                : x[c * plane + static_cast<std::size_t>(hi) * W +
                                    static_cast<std::size_t>(wi)];
                    }
                }
            }
        }
    }
}

template <typename T>
inline void col2im_accum(const T* col, std::size_t C, std::size_t H, std::size_t W, std::size_t kh,
                         std::size_t kw, std::size_t stride, std::size_t pad, std::size_t Ho,
                         std::size_t Wo, T* x_grad) {
    const std::size_t plane = H * W;
    const std::size_t ocols = Ho * Wo;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t ki = 0; ki < kh; ++ki) {
            for (std::size_t kj = 0; kj < kw; ++kj) {
                const T* row = col + ((c * kh + ki) * kw + kj) * ocols;
                for (std::size_t ho = 0; ho < Ho; ++ho) {
                    const std::ptrdiff_t hi =
                        static_cast<std::ptrdiff_t>(ho * stride + ki) -
                        static_cast<std::ptrdiff_t>(pad);
                    if (hi < 0 || hi >= static_cast<std::ptrdiff_t>(H)) continue;
                    for (std::size_t wo = 0; wo < Wo; ++wo) {
                        const std::ptrdiff_t wi =
                            static_cast<std::ptrdiff_t>(wo * stride + kj) -
                            static_cast<std::ptrdiff_t>(pad);
                        if (wi < 0 || wi >= static_cast<std::ptrdiff_t>(W)) continue;
                        x_grad[c * plane + static_cast<std::size_t>(hi) * W +
                               static_cast<std::size_t>(wi)] += row[ho * Wo + wo];
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// conv2d: cross-correlation, x [N,C,H,W] * w [OC,C,kh,kw] (+ b [OC])
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride,
                 std::size_t pad) {
    if (x.ndim() != 4 || w.ndim() != 4) {
        throw ShapeError("conv2d expects 4-D input and weight, got " + shape_str(x.shape()) +
                         " and " + shape_str(w.shape()));
    }
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t OC = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != C) {
        throw ShapeError("conv2d channel mismatch: input " + shape_str(x.shape()) + " weight " +
                         shape_str(w.shape()));
    }
    const bool has_bias = b.numel() > 0;
    if (has_bias && (b.ndim() != 1 || b.dim(0) != OC)) {
        throw ShapeError("conv2d bias must be [out_channels], got " + shape_str(b.shape()));
    }
    const std::size_t Ho = conv_out_extent(H, kh, stride, pad);
    const std::size_t Wo = conv_out_extent(W, kw, stride, pad);
    const std::size_t ckk = C * kh * kw;
    const std::size_t ocols = Ho * Wo;

    std::vector<T> out(N * OC * ocols, T(0));
    std::vector<T> col(ckk * ocols);
    for (std::size_t n = 0; n < N; ++n) {
        im2col(x.data() + n * C * H * W, C, H, W, kh, kw, stride, pad, Ho, Wo, col.data());
        gemm_nn(OC, ckk, ocols, w.data(), col.data(), out.data() + n * OC * ocols);
    }
    if (has_bias) {
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t oc = 0; oc < OC; ++oc) {
                T* dst = out.data() + (n * OC + oc) * ocols;
                const T bv = b.data()[oc];
                for (std::size_t i = 0; i < ocols; ++i) dst[i] += bv;
            }
    }

    std::vector<Tensor<T>> inputs = {x, w};
    if (has_bias) inputs.push_back(b);
    return record_op<T>(
        "conv2d", Shape{N, OC, Ho, Wo}, std::move(out), inputs,
        [N, C, H, W, OC, kh, kw, stride, pad, Ho, Wo, ckk, ocols, has_bias](
            const TensorImpl<T>& o, const auto& ins) {
            auto& ix = *ins[0];
            auto& iw = *ins[1];
            const bool need_x = ix.requires_grad;
            const bool need_w = iw.requires_grad;
            const bool need_b = has_bias && ins[2]->requires_grad;
            if (need_x) ix.ensure_grad();
            if (need_w) iw.ensure_grad();
            if (need_b) ins[2]->ensure_grad();
            std::vector<T> col(ckk * ocols);
            std::vector<T> wt;
            std::vector<T> dcol;
            if (need_w || need_x) {
                if (need_x) {
                    wt.resize(ckk * OC);
                    transpose(OC, ckk, iw.data.data(), wt.data());
                    dcol.resize(ckk * ocols);
                }
                for (std::size_t n = 0; n < N; ++n) {
                    const T* g = o.grad.data() + n * OC * ocols;
                    if (need_w) {
                        im2col(ix.data.data() + n * C * H * W, C, H, W, kh, kw, stride, pad, Ho,
                               Wo, col.data());
                        // dW[oc][ck] += sum_p G[oc][p] * col[ck][p]
                        gemm_nt(OC, ocols, ckk, g, col.data(), iw.grad.data());
                        if (debug_flags().conv2d_grad_fault) {
                            for (T& v : iw.grad) v *= T(1.01);
                        }
                    }
                    if (need_x) {
                        std::fill(dcol.begin(), dcol.end(), T(0));
                        gemm_nn(ckk, OC, ocols, wt.data(), g, dcol.data());
                        col2im_accum(dcol.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                                     ix.grad.data() + n * C * H * W);
                    }
                }
            }
            if (need_b) {
                auto& ib = *ins[2];
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t oc = 0; oc < OC; ++oc) {
                        const T* g = o.grad.data() + (n * OC + oc) * ocols;
                        T acc = T(0);
                        for (std::size_t i = 0; i < ocols; ++i) acc += g[i];
                        ib.grad[oc] += acc;
                    }
            }
        });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride, std::size_t pad) {
    return conv2d(x, w, Tensor<T>::zeros({0}), stride, pad);
}

// ---------------------------------------------------------------------------
// nearest-neighbour resize (src index = floor(i * in / out))
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> resize_nearest(const Tensor<T>& x, std::size_t Ho, std::size_t Wo) {
    if (x.ndim() != 4) throw ShapeError("resize_nearest expects 4-D input");
    if (Ho == 0 || Wo == 0) throw ShapeError("resize_nearest target must be positive");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    std::vector<T> out(N * C * Ho * Wo);
    const T* px = x.data();
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        const T* src = px + nc * H * W;
        T* dst = out.data() + nc * Ho * Wo;
        for (std::size_t i = 0; i < Ho; ++i) {
            const std::size_t si = i * H / Ho;
            for (std::size_t j = 0; j < Wo; ++j) dst[i * Wo + j] = src[si * W + j * W / Wo];
        }
    }
    return record_op<T>("resize_nearest", Shape{N, C, Ho, Wo}, std::move(out), {x},
                        [N, C, H, W, Ho, Wo](const TensorImpl<T>& o, const auto& ins) {
                            auto& ix = *ins[0];
                            if (!ix.requires_grad) return;
                            ix.ensure_grad();
                            for (std::size_t nc = 0; nc < N * C; ++nc) {
                                T* gsrc = ix.grad.data() + nc * H * W;
                                const T* g = o.grad.data() + nc * Ho * Wo;
                                for (std::size_t i = 0; i < Ho; ++i) {
                                    const std::size_t si = i * H / Ho;
                                    for (std::size_t j = 0; j < Wo; ++j)
                                        gsrc[si * W + j * W / Wo] += g[i * Wo + j];
                                }
                            }
                        });
}

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, std::size_t factor) {
    return resize_nearest(x, x.dim(2) * factor, x.dim(3) * factor);
}

template <typename T>
Tensor<T> downsample_nearest(const Tensor<T>& x, std::size_t factor) {
    if (x.dim(2) % factor != 0 || x.dim(3) % factor != 0) {
        throw ShapeError("downsample_nearest: extent not divisible by factor for " +
                         shape_str(x.shape()));
    }
    return resize_nearest(x, x.dim(2) / factor, x.dim(3) / factor);
}

}  // namespace tsit
