#include "binembed/ops.hpp"

#include <cassert>
#include <cmath>
#include <cstring>
#include <limits>

#include "binembed/kernels.hpp"
#include "binembed/parallel.hpp"

namespace binembed {

namespace {

// Growable per-thread scratch; avoids re-faulting large buffers in hot
// training loops.
struct Scratch {
    std::vector<float> patches, dpatches;
    std::vector<uint64_t> patch_bits, map_bits;
};
Scratch& scratch() {
    thread_local Scratch s;
    return s;
}

void check_channels(const ConvSpec& spec, int64_t c) {
    if (c != spec.in_ch)
        throw shape_error("conv2d: input has " + std::to_string(c) + " channels, spec expects " +
                          std::to_string(spec.in_ch));
}

// Gathers the float im2col patch matrix (M x K) for one (H,W,C) sample.
void im2col(const float* x, int64_t H, int64_t W, int64_t C, const ConvSpec& spec, int64_t out_h,
            int64_t out_w, int64_t pad_top, int64_t pad_left, float pad_value, float* patches) {
    const int64_t K = spec.patch_len();
    parallel_for(out_h * out_w, [&](int64_t m0, int64_t m1) {
        for (int64_t m = m0; m < m1; ++m) {
            const int64_t oy = m / out_w, ox = m % out_w;
            float* row = patches + m * K;
            for (int64_t ky = 0; ky < spec.kernel_h; ++ky) {
                const int64_t y = oy * spec.stride - pad_top + ky;
                for (int64_t kx = 0; kx < spec.kernel_w; ++kx) {
                    const int64_t xx = ox * spec.stride - pad_left + kx;
                    float* dst = row + (ky * spec.kernel_w + kx) * C;
                    if (y < 0 || y >= H || xx < 0 || xx >= W) {
                        for (int64_t c = 0; c < C; ++c) dst[c] = pad_value;
                    } else {
                        std::memcpy(dst, x + (y * W + xx) * C, C * sizeof(float));
                    }
                }
            }
        }
    });
}

// Scatter-add of patch gradients back onto the input, parallel over
// channel ranges so no two tasks touch the same element.
void col2im_add(const float* dpatches, int64_t H, int64_t W, int64_t C, const ConvSpec& spec,
                int64_t out_h, int64_t out_w, int64_t pad_top, int64_t pad_left, float* dx) {
    const int64_t K = spec.patch_len();
    parallel_for(C, [&](int64_t c0, int64_t c1) {
        for (int64_t m = 0; m < out_h * out_w; ++m) {
            const int64_t oy = m / out_w, ox = m % out_w;
            const float* row = dpatches + m * K;
            for (int64_t ky = 0; ky < spec.kernel_h; ++ky) {
                const int64_t y = oy * spec.stride - pad_top + ky;
                if (y < 0 || y >= H) continue;
                for (int64_t kx = 0; kx < spec.kernel_w; ++kx) {
                    const int64_t xx = ox * spec.stride - pad_left + kx;
                    if (xx < 0 || xx >= W) continue;
                    const float* src = row + (ky * spec.kernel_w + kx) * C;
                    float* dst = dx + (y * W + xx) * C;
                    for (int64_t c = c0; c < c1; ++c) dst[c] += src[c];
                }
            }
        }
    });
}

int64_t channels_of(const FloatTensor& x) {
    if (x.rank() < 1) throw shape_error("expected rank >= 1");
    return x.shape.back();
}

}  // namespace

ConvDims conv_dims(const FloatTensor& x) {
    if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2)};
    if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
    throw shape_error("expected (H,W,C) or (N,H,W,C) tensor, got " + shape_str(x.shape));
}

void conv_out_dims(int64_t in_h, int64_t in_w, const ConvSpec& spec, int64_t* out_h, int64_t* out_w,
                   int64_t* pad_top, int64_t* pad_left) {
    if (spec.padding == Padding::same) {
        *out_h = (in_h + spec.stride - 1) / spec.stride;
        *out_w = (in_w + spec.stride - 1) / spec.stride;
        const int64_t ph = std::max<int64_t>((*out_h - 1) * spec.stride + spec.kernel_h - in_h, 0);
        const int64_t pw = std::max<int64_t>((*out_w - 1) * spec.stride + spec.kernel_w - in_w, 0);
        *pad_top = ph / 2;
        *pad_left = pw / 2;
    } else {
        if (in_h < spec.kernel_h || in_w < spec.kernel_w)
            throw shape_error("valid conv: input smaller than kernel");
        *out_h = (in_h - spec.kernel_h) / spec.stride + 1;
        *out_w = (in_w - spec.kernel_w) / spec.stride + 1;
        *pad_top = 0;
        *pad_left = 0;
    }
}

FloatTensor sign_forward(const FloatTensor& x) {
    FloatTensor y(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) y.data[i] = x.data[i] >= 0.0f ? 1.0f : -1.0f;
    return y;
}

FloatTensor sign_backward(const FloatTensor& upstream, const FloatTensor& x) {
    if (upstream.shape != x.shape) throw shape_error("sign_backward: shape mismatch");
    FloatTensor g(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i)
        g.data[i] = std::fabs(x.data[i]) <= 1.0f ? upstream.data[i] : 0.0f;
    return g;
}

FloatTensor binary_conv2d(const FloatTensor& x, const BitTensor& w, const ConvSpec& spec) {
    const ConvDims d = conv_dims(x);
    check_channels(spec, d.c);
    if (w.inner_dim() != spec.patch_len() || w.outer_rows() != spec.out_ch)
        throw shape_error("binary_conv2d: weight rows " + shape_str(w.shape) +
                          " do not match spec patch length");
#ifndef NDEBUG
    for (float v : x.data) assert((v == 1.0f || v == -1.0f) && "binary conv input must be +-1");
#endif
    int64_t oh, ow, pt, pl;
    conv_out_dims(d.h, d.w, spec, &oh, &ow, &pt, &pl);
    const int64_t K = spec.patch_len();
    const int64_t M = oh * ow;
    const int64_t wpr = (K + 63) / 64;

    Shape out_shape = x.rank() == 3 ? Shape{oh, ow, spec.out_ch} : Shape{d.n, oh, ow, spec.out_ch};
    FloatTensor y(out_shape);

    auto& s = scratch();
    s.patch_bits.assign(static_cast<size_t>(M * wpr), 0);

    const bool fast_words = (d.c % 64 == 0);
    if (fast_words) s.map_bits.resize(static_cast<size_t>(d.h * d.w * (d.c / 64)));
    else s.patches.resize(static_cast<size_t>(M * K));

    for (int64_t n = 0; n < d.n; ++n) {
        const float* xs = x.ptr() + n * d.h * d.w * d.c;
        if (fast_words) {
            // Pack the feature map once; patch rows become word copies.
            const int64_t cw = d.c / 64;
            parallel_for(d.h * d.w, [&](int64_t p0, int64_t p1) {
                for (int64_t p = p0; p < p1; ++p) pack_row(xs + p * d.c, d.c, s.map_bits.data() + p * cw);
            });
            parallel_for(M, [&](int64_t m0, int64_t m1) {
                for (int64_t m = m0; m < m1; ++m) {
                    const int64_t oy = m / ow, ox = m % ow;
                    uint64_t* row = s.patch_bits.data() + m * wpr;
                    for (int64_t ky = 0; ky < spec.kernel_h; ++ky) {
                        const int64_t yy = oy * spec.stride - pt + ky;
                        for (int64_t kx = 0; kx < spec.kernel_w; ++kx) {
                            const int64_t xx = ox * spec.stride - pl + kx;
                            uint64_t* dst = row + (ky * spec.kernel_w + kx) * cw;
                            if (yy < 0 || yy >= d.h || xx < 0 || xx >= d.w)
                                std::memset(dst, 0, cw * 8);  // zero bits = -1 padding
                            else
                                std::memcpy(dst, s.map_bits.data() + (yy * d.w + xx) * cw, cw * 8);
                        }
                    }
                }
            });
        } else {
            im2col(xs, d.h, d.w, d.c, spec, oh, ow, pt, pl, -1.0f, s.patches.data());
            parallel_for(M, [&](int64_t m0, int64_t m1) {
                for (int64_t m = m0; m < m1; ++m) {
                    uint64_t* row = s.patch_bits.data() + m * wpr;
                    std::memset(row, 0, wpr * 8);
                    pack_row(s.patches.data() + m * K, K, row);
                }
            });
        }
        float* ys = y.ptr() + n * M * spec.out_ch;
        parallel_for(M, [&](int64_t m0, int64_t m1) {
            kern::xnor_dot_rows(s.patch_bits.data(), wpr, w.words.data(), w.words_per_row(), ys, m0,
                                m1, K, spec.out_ch);
        });
    }
    return y;
}

FloatTensor real_conv2d(const FloatTensor& x, const FloatTensor& w, const ConvSpec& spec,
                        const std::vector<float>* bias) {
    const ConvDims d = conv_dims(x);
    check_channels(spec, d.c);
    if (w.numel() != spec.patch_len() * spec.out_ch)
        throw shape_error("real_conv2d: weight tensor " + shape_str(w.shape) + " does not match spec");
    int64_t oh, ow, pt, pl;
    conv_out_dims(d.h, d.w, spec, &oh, &ow, &pt, &pl);
    const int64_t K = spec.patch_len();
    const int64_t M = oh * ow;

    Shape out_shape = x.rank() == 3 ? Shape{oh, ow, spec.out_ch} : Shape{d.n, oh, ow, spec.out_ch};
    FloatTensor y(out_shape);

    auto& s = scratch();
    const bool direct = (spec.kernel_h == 1 && spec.kernel_w == 1 && spec.stride == 1);
    if (!direct) s.patches.resize(static_cast<size_t>(M * K));

    for (int64_t n = 0; n < d.n; ++n) {
        const float* xs = x.ptr() + n * d.h * d.w * d.c;
        const float* patches = direct ? xs : s.patches.data();
        if (!direct) im2col(xs, d.h, d.w, d.c, spec, oh, ow, pt, pl, 0.0f, s.patches.data());
        float* ys = y.ptr() + n * M * spec.out_ch;
        parallel_for(M, [&](int64_t m0, int64_t m1) {
            kern::dot_rows(patches, w.ptr(), ys, m0, m1, K, spec.out_ch);
            if (bias) {
                for (int64_t m = m0; m < m1; ++m)
                    for (int64_t o = 0; o < spec.out_ch; ++o) ys[m * spec.out_ch + o] += (*bias)[o];
            }
        });
    }
    return y;
}

void conv2d_backward(const FloatTensor& x, const float* w_rows, const ConvSpec& spec,
                     const FloatTensor& dy, float pad_value, FloatTensor* dx, float* dw,
                     float* dbias) {
    const ConvDims d = conv_dims(x);
    check_channels(spec, d.c);
    int64_t oh, ow, pt, pl;
    conv_out_dims(d.h, d.w, spec, &oh, &ow, &pt, &pl);
    const int64_t K = spec.patch_len();
    const int64_t M = oh * ow;
    if (dy.numel() != d.n * M * spec.out_ch)
        throw shape_error("conv2d_backward: upstream shape " + shape_str(dy.shape) + " unexpected");

    if (dx) *dx = FloatTensor(x.shape);

    auto& s = scratch();
    const bool direct = (spec.kernel_h == 1 && spec.kernel_w == 1 && spec.stride == 1);
    if (!direct && dw) s.patches.resize(static_cast<size_t>(M * K));
    if (dx) s.dpatches.resize(static_cast<size_t>(M * K));

    for (int64_t n = 0; n < d.n; ++n) {
        const float* xs = x.ptr() + n * d.h * d.w * d.c;
        const float* dys = dy.ptr() + n * M * spec.out_ch;

        if (dw) {
            const float* patches = xs;
            if (!direct) {
                im2col(xs, d.h, d.w, d.c, spec, oh, ow, pt, pl, pad_value, s.patches.data());
                patches = s.patches.data();
            }
            // dw[o] += sum_m dy[m][o] * patches[m]
            parallel_for(spec.out_ch, [&](int64_t o0, int64_t o1) {
                kern::accum_rank1(dys, 1, spec.out_ch, patches, dw, o0, o1, M, K);
            });
        }
        if (dbias) {
            for (int64_t m = 0; m < M; ++m)
                for (int64_t o = 0; o < spec.out_ch; ++o) dbias[o] += dys[m * spec.out_ch + o];
        }
        if (dx) {
            float* dxs = dx->ptr() + n * d.h * d.w * d.c;
            if (direct) {
                // dpatches rows are dx rows themselves.
                parallel_for(M, [&](int64_t m0, int64_t m1) {
                    kern::accum_rank1(dys, spec.out_ch, 1, w_rows, dxs, m0, m1, spec.out_ch, K,
                                      /*accumulate=*/false);
                });
            } else {
                parallel_for(M, [&](int64_t m0, int64_t m1) {
                    kern::accum_rank1(dys, spec.out_ch, 1, w_rows, s.dpatches.data(), m0, m1,
                                      spec.out_ch, K, /*accumulate=*/false);
                });
                col2im_add(s.dpatches.data(), d.h, d.w, d.c, spec, oh, ow, pt, pl, dxs);
            }
        }
    }
}

FloatTensor batch_norm(const FloatTensor& x, BatchNormParams& p, BnMode mode,
                       std::vector<float>* saved_mean, std::vector<float>* saved_invstd) {
    const int64_t C = channels_of(x);
    if (C != p.channels())
        throw shape_error("batch_norm: " + std::to_string(C) + " channels vs params " +
                          std::to_string(p.channels()));
    const int64_t rows = x.numel() / C;
    FloatTensor y(x.shape);

    std::vector<float> mean(C), invstd(C);
    if (mode == BnMode::infer) {
        for (int64_t c = 0; c < C; ++c) {
            mean[c] = p.running_mean[c];
            invstd[c] = 1.0f / std::sqrt(p.running_var[c] + p.eps);
        }
    } else {
        // Row-major sweep per channel slice: each task owns [c0,c1) and
        // walks all rows, so reads stay contiguous.
        parallel_for(C, [&](int64_t c0, int64_t c1) {
            std::vector<double> sum(c1 - c0, 0.0), sq(c1 - c0, 0.0);
            for (int64_t r = 0; r < rows; ++r) {
                const float* xr = x.ptr() + r * C;
                for (int64_t c = c0; c < c1; ++c) {
                    const double v = xr[c];
                    sum[c - c0] += v;
                    sq[c - c0] += v * v;
                }
            }
            for (int64_t c = c0; c < c1; ++c) {
                const double mu = sum[c - c0] / rows;
                const double var = std::max(sq[c - c0] / rows - mu * mu, 0.0);
                mean[c] = static_cast<float>(mu);
                invstd[c] = static_cast<float>(1.0 / std::sqrt(var + p.eps));
                p.running_mean[c] = p.momentum * p.running_mean[c] + (1.0f - p.momentum) * static_cast<float>(mu);
                p.running_var[c] = p.momentum * p.running_var[c] + (1.0f - p.momentum) * static_cast<float>(var);
            }
        });
    }
    std::vector<float> scale(C), shift(C);
    for (int64_t c = 0; c < C; ++c) {
        scale[c] = p.gamma[c] * invstd[c];
        shift[c] = p.beta[c] - mean[c] * scale[c];
    }
    parallel_for(rows, [&](int64_t r0, int64_t r1) {
        for (int64_t r = r0; r < r1; ++r) {
            const float* xr = x.ptr() + r * C;
            float* yr = y.ptr() + r * C;
            for (int64_t c = 0; c < C; ++c) yr[c] = scale[c] * xr[c] + shift[c];
        }
    });
    if (saved_mean) *saved_mean = mean;
    if (saved_invstd) *saved_invstd = invstd;
    return y;
}

void batch_norm_backward_infer(const FloatTensor& x, const BatchNormParams& p,
                               const FloatTensor& dy, FloatTensor* dx, float* dgamma,
                               float* dbeta) {
    const int64_t C = channels_of(x);
    const int64_t rows = x.numel() / C;
    if (dx) *dx = FloatTensor(x.shape);
    parallel_for(C, [&](int64_t c0, int64_t c1) {
        const int64_t w = c1 - c0;
        std::vector<double> dg(w, 0.0), db(w, 0.0);
        std::vector<float> scale(w);
        for (int64_t c = c0; c < c1; ++c)
            scale[c - c0] = p.gamma[c] / std::sqrt(p.running_var[c] + p.eps);
        for (int64_t r = 0; r < rows; ++r) {
            const float* xr = x.ptr() + r * C;
            const float* gr = dy.ptr() + r * C;
            float* dxr = dx ? dx->ptr() + r * C : nullptr;
            for (int64_t c = c0; c < c1; ++c) {
                const double g = gr[c];
                const double invstd = 1.0 / std::sqrt(double(p.running_var[c]) + p.eps);
                dg[c - c0] += g * (double(xr[c]) - p.running_mean[c]) * invstd;
                db[c - c0] += g;
                if (dxr) dxr[c] = gr[c] * scale[c - c0];
            }
        }
        for (int64_t c = c0; c < c1; ++c) {
            if (dgamma) dgamma[c] += static_cast<float>(dg[c - c0]);
            if (dbeta) dbeta[c] += static_cast<float>(db[c - c0]);
        }
    });
}

void batch_norm_backward_train(const FloatTensor& x, const BatchNormParams& p,
                               const std::vector<float>& saved_mean,
                               const std::vector<float>& saved_invstd, const FloatTensor& dy,
                               FloatTensor* dx, float* dgamma, float* dbeta) {
    const int64_t C = channels_of(x);
    const int64_t rows = x.numel() / C;
    if (dx) *dx = FloatTensor(x.shape);
    parallel_for(C, [&](int64_t c0, int64_t c1) {
        const int64_t w = c1 - c0;
        std::vector<double> dg(w, 0.0), db(w, 0.0);
        for (int64_t r = 0; r < rows; ++r) {
            const float* xr = x.ptr() + r * C;
            const float* gr = dy.ptr() + r * C;
            for (int64_t c = c0; c < c1; ++c) {
                const double g = gr[c];
                dg[c - c0] += g * (double(xr[c]) - saved_mean[c]) * saved_invstd[c];
                db[c - c0] += g;
            }
        }
        if (dx) {
            // dxhat sums equal dbeta/dgamma sums since xhat is normalized
            std::vector<float> k1(w), k2(w), k3(w);
            for (int64_t c = c0; c < c1; ++c) {
                const double gis = double(p.gamma[c]) * saved_invstd[c];
                k1[c - c0] = static_cast<float>(gis);
                k2[c - c0] = static_cast<float>(gis * db[c - c0] / rows);
                k3[c - c0] = static_cast<float>(gis * dg[c - c0] / rows * saved_invstd[c]);
            }
            for (int64_t r = 0; r < rows; ++r) {
                const float* xr = x.ptr() + r * C;
                const float* gr = dy.ptr() + r * C;
                float* dxr = dx->ptr() + r * C;
                for (int64_t c = c0; c < c1; ++c)
                    dxr[c] = k1[c - c0] * gr[c] - k2[c - c0] -
                             (xr[c] - saved_mean[c]) * k3[c - c0];
            }
        }
        for (int64_t c = c0; c < c1; ++c) {
            if (dgamma) dgamma[c] += static_cast<float>(dg[c - c0]);
            if (dbeta) dbeta[c] += static_cast<float>(db[c - c0]);
        }
    });
}

namespace {

void pool_out_dims(int64_t in, int k, int stride, Padding padding, int64_t* out, int64_t* pad) {
    if (padding == Padding::same) {
        *out = (in + stride - 1) / stride;
        *pad = std::max<int64_t>(((*out - 1) * stride + k - in) / 2, 0);
    } else {
        if (in < k) throw shape_error("max_pool2d: input smaller than window");
        *out = (in - k) / stride + 1;
        *pad = 0;
    }
}

}  // namespace

FloatTensor max_pool2d(const FloatTensor& x, int k, int stride, Padding padding) {
    const ConvDims d = conv_dims(x);
    int64_t oh, ow, pt, pl;
    pool_out_dims(d.h, k, stride, padding, &oh, &pt);
    pool_out_dims(d.w, k, stride, padding, &ow, &pl);
    Shape out_shape = x.rank() == 3 ? Shape{oh, ow, d.c} : Shape{d.n, oh, ow, d.c};
    FloatTensor y(out_shape);
    for (int64_t n = 0; n < d.n; ++n) {
        const float* xs = x.ptr() + n * d.h * d.w * d.c;
        float* ys = y.ptr() + n * oh * ow * d.c;
        parallel_for(oh * ow, [&](int64_t m0, int64_t m1) {
            for (int64_t m = m0; m < m1; ++m) {
                const int64_t oy = m / ow, ox = m % ow;
                float* out = ys + m * d.c;
                for (int64_t c = 0; c < d.c; ++c) out[c] = -std::numeric_limits<float>::infinity();
                for (int64_t ky = 0; ky < k; ++ky) {
                    const int64_t yy = oy * stride - pt + ky;
                    if (yy < 0 || yy >= d.h) continue;
                    for (int64_t kx = 0; kx < k; ++kx) {
                        const int64_t xx = ox * stride - pl + kx;
                        if (xx < 0 || xx >= d.w) continue;
                        const float* src = xs + (yy * d.w + xx) * d.c;
                        for (int64_t c = 0; c < d.c; ++c) out[c] = std::max(out[c], src[c]);
                    }
                }
            }
        });
    }
    return y;
}

FloatTensor max_pool2d_backward(const FloatTensor& x, const FloatTensor& dy, int k, int stride,
                                Padding padding) {
    const ConvDims d = conv_dims(x);
    int64_t oh, ow, pt, pl;
    pool_out_dims(d.h, k, stride, padding, &oh, &pt);
    pool_out_dims(d.w, k, stride, padding, &ow, &pl);
    FloatTensor dx(x.shape);
    for (int64_t n = 0; n < d.n; ++n) {
        const float* xs = x.ptr() + n * d.h * d.w * d.c;
        const float* dys = dy.ptr() + n * oh * ow * d.c;
        float* dxs = dx.ptr() + n * d.h * d.w * d.c;
        parallel_for(d.c, [&](int64_t c0, int64_t c1) {
            for (int64_t m = 0; m < oh * ow; ++m) {
                const int64_t oy = m / ow, ox = m % ow;
                for (int64_t c = c0; c < c1; ++c) {
                    // First maximum in row-major window order wins.
                    float best = -std::numeric_limits<float>::infinity();
                    int64_t best_idx = -1;
                    for (int64_t ky = 0; ky < k; ++ky) {
                        const int64_t yy = oy * stride - pt + ky;
                        if (yy < 0 || yy >= d.h) continue;
                        for (int64_t kx = 0; kx < k; ++kx) {
                            const int64_t xx = ox * stride - pl + kx;
                            if (xx < 0 || xx >= d.w) continue;
                            const float v = xs[(yy * d.w + xx) * d.c + c];
                            if (v > best) {
                                best = v;
                                best_idx = (yy * d.w + xx) * d.c + c;
                            }
                        }
                    }
                    if (best_idx >= 0) dxs[best_idx] += dys[m * d.c + c];
                }
            }
        });
    }
    return dx;
}

FloatTensor global_max_pool(const FloatTensor& x) {
    const ConvDims d = conv_dims(x);
    Shape out_shape = x.rank() == 3 ? Shape{d.c} : Shape{d.n, d.c};
    FloatTensor y(out_shape);
    for (int64_t n = 0; n < d.n; ++n) {
        const float* xs = x.ptr() + n * d.h * d.w * d.c;
        float* ys = y.ptr() + n * d.c;
        for (int64_t c = 0; c < d.c; ++c) ys[c] = -std::numeric_limits<float>::infinity();
        for (int64_t p = 0; p < d.h * d.w; ++p)
            for (int64_t c = 0; c < d.c; ++c) ys[c] = std::max(ys[c], xs[p * d.c + c]);
    }
    return y;
}

FloatTensor global_max_pool_backward(const FloatTensor& x, const FloatTensor& dy) {
    const ConvDims d = conv_dims(x);
    FloatTensor dx(x.shape);
    for (int64_t n = 0; n < d.n; ++n) {
        const float* xs = x.ptr() + n * d.h * d.w * d.c;
        const float* dys = dy.ptr() + n * d.c;
        float* dxs = dx.ptr() + n * d.h * d.w * d.c;
        for (int64_t c = 0; c < d.c; ++c) {
            float best = -std::numeric_limits<float>::infinity();
            int64_t best_p = 0;
            for (int64_t p = 0; p < d.h * d.w; ++p) {
                const float v = xs[p * d.c + c];
                if (v > best) {
                    best = v;
                    best_p = p;
                }
            }
            dxs[best_p * d.c + c] += dys[c];
        }
    }
    return dx;
}

FloatTensor relu(const FloatTensor& x) {
    FloatTensor y(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) y.data[i] = std::max(x.data[i], 0.0f);
    return y;
}

FloatTensor relu_backward(const FloatTensor& x, const FloatTensor& dy) {
    FloatTensor dx(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) dx.data[i] = x.data[i] > 0.0f ? dy.data[i] : 0.0f;
    return dx;
}

FloatTensor dense(const FloatTensor& x, const FloatTensor& w, bool binary,
                  const std::vector<float>* bias) {
    if (w.rank() != 2) throw shape_error("dense: weights must be rank 2");
    const int64_t n = w.dim(1), m = w.dim(0);
    const int64_t batch = x.numel() / n;
    if (x.numel() % n != 0)
        throw shape_error("dense: input " + shape_str(x.shape) + " not divisible by fan-in " +
                          std::to_string(n));
    Shape out_shape = x.rank() == 1 ? Shape{m} : Shape{batch, m};
    FloatTensor y(out_shape);

    if (binary) {
        FloatTensor sx = sign_forward(x);
        const BitTensor xb = pack(FloatTensor({batch, n}, std::move(sx.data)));
        const BitTensor wb = pack(w);
        parallel_for(batch, [&](int64_t b0, int64_t b1) {
            kern::xnor_dot_rows(xb.words.data(), xb.words_per_row(), wb.words.data(),
                                wb.words_per_row(), y.ptr(), b0, b1, n, m);
        });
    } else {
        parallel_for(batch, [&](int64_t b0, int64_t b1) {
            kern::dot_rows(x.ptr(), w.ptr(), y.ptr(), b0, b1, n, m);
        });
    }
    if (bias) {
        for (int64_t b = 0; b < batch; ++b)
            for (int64_t o = 0; o < m; ++o) y.ptr()[b * m + o] += (*bias)[o];
    }
    return y;
}

void dense_backward(const FloatTensor& x, const FloatTensor& w, const FloatTensor& dy,
                    FloatTensor* dx, float* dw, float* dbias) {
    const int64_t n = w.dim(1), m = w.dim(0);
    const int64_t batch = x.numel() / n;
    if (dx) {
        *dx = FloatTensor(x.shape);
        parallel_for(batch, [&](int64_t b0, int64_t b1) {
            kern::accum_rank1(dy.ptr(), m, 1, w.ptr(), dx->ptr(), b0, b1, m, n);
        });
    }
    if (dw) {
        parallel_for(m, [&](int64_t o0, int64_t o1) {
            kern::accum_rank1(dy.ptr(), 1, m, x.ptr(), dw, o0, o1, batch, n);
        });
    }
    if (dbias) {
        for (int64_t b = 0; b < batch; ++b)
            for (int64_t o = 0; o < m; ++o) dbias[o] += dy.ptr()[b * m + o];
    }
}

void adam_step(std::span<float> params, std::span<const float> grads, AdamState& state, float lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw shape_error("adam_step: size mismatch");
    constexpr float beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;
    state.t += 1;
    const float bc1 = 1.0f - std::pow(beta1, static_cast<float>(state.t));
    const float bc2 = 1.0f - std::pow(beta2, static_cast<float>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        const float g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0f - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0f - beta2) * g * g;
        const float mhat = state.m[i] / bc1;
        const float vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

FloatTensor finite_difference_grad(const std::function<double(const FloatTensor&)>& f,
                                   const FloatTensor& x, float h) {
    FloatTensor g(x.shape);
    FloatTensor probe = x;
    for (int64_t i = 0; i < x.numel(); ++i) {
        const float orig = probe.data[i];
        probe.data[i] = orig + h;
        const double fp = f(probe);
        probe.data[i] = orig - h;
        const double fm = f(probe);
        probe.data[i] = orig;
        g.data[i] = static_cast<float>((fp - fm) / (2.0 * static_cast<double>(h)));
    }
    return g;
}

}  // namespace binembed
