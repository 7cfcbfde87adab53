#pragma once

// Independent reference implementations used to pin expected values.
// These deliberately share no code with the library paths they check.

#include <cmath>
#include <complex>
#include <vector>

#include "binembed/ops.hpp"
#include "binembed/tensor.hpp"

namespace test_oracle {

using binembed::ConvSpec;
using binembed::FloatTensor;
using binembed::Padding;

/// Naive nested-loop 2D cross-correlation on an (H,W,C) input with
/// (O,kh,kw,C) weights. 'same' padding fills with pad_value.
inline FloatTensor naive_conv2d(const FloatTensor& x, const FloatTensor& w, const ConvSpec& spec,
                                float pad_value) {
    const int64_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
    int64_t oh, ow, pt, pl;
    if (spec.padding == Padding::same) {
        oh = (H + spec.stride - 1) / spec.stride;
        ow = (W + spec.stride - 1) / spec.stride;
        pt = std::max<int64_t>(((oh - 1) * spec.stride + spec.kernel_h - H), 0) / 2;
        pl = std::max<int64_t>(((ow - 1) * spec.stride + spec.kernel_w - W), 0) / 2;
    } else {
        oh = (H - spec.kernel_h) / spec.stride + 1;
        ow = (W - spec.kernel_w) / spec.stride + 1;
        pt = pl = 0;
    }
    FloatTensor y({oh, ow, spec.out_ch});
    for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox)
            for (int64_t o = 0; o < spec.out_ch; ++o) {
                double acc = 0.0;
                for (int64_t ky = 0; ky < spec.kernel_h; ++ky)
                    for (int64_t kx = 0; kx < spec.kernel_w; ++kx)
                        for (int64_t c = 0; c < C; ++c) {
                            const int64_t yy = oy * spec.stride - pt + ky;
                            const int64_t xx = ox * spec.stride - pl + kx;
                            const double xv = (yy < 0 || yy >= H || xx < 0 || xx >= W)
                                                  ? pad_value
                                                  : x.data[(yy * W + xx) * C + c];
                            const double wv =
                                w.data[((o * spec.kernel_h + ky) * spec.kernel_w + kx) * C + c];
                            acc += xv * wv;
                        }
                y.data[(oy * ow + ox) * spec.out_ch + o] = static_cast<float>(acc);
            }
    return y;
}

/// Scalar-loop float dot product of two sign vectors.
inline int64_t sign_dot(const std::vector<float>& a, const std::vector<float>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i)
        acc += (a[i] >= 0.0f ? 1.0 : -1.0) * (b[i] >= 0.0f ? 1.0 : -1.0);
    return static_cast<int64_t>(std::llround(acc));
}

/// Direct O(n^2) DFT magnitude of one real frame.
inline std::vector<double> direct_dft_magnitude(const std::vector<double>& frame, int n_fft) {
    const int bins = n_fft / 2 + 1;
    std::vector<double> mag(bins, 0.0);
    for (int k = 0; k < bins; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (size_t n = 0; n < frame.size(); ++n) {
            const double ang = -2.0 * M_PI * k * static_cast<double>(n) / n_fft;
            acc += frame[n] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        mag[k] = std::abs(acc);
    }
    return mag;
}

/// Reference Adam trajectory (the documented update rule, re-implemented).
inline double reference_adam_scalar(double p0, double lr, int steps,
                                    double (*grad)(double)) {
    double p = p0, m = 0.0, v = 0.0;
    for (int t = 1; t <= steps; ++t) {
        const double g = grad(p);
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mhat = m / (1.0 - std::pow(0.9, t));
        const double vhat = v / (1.0 - std::pow(0.999, t));
        p -= lr * mhat / (std::sqrt(vhat) + 1e-8);
    }
    return p;
}

}  // namespace test_oracle
