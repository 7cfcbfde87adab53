#pragma once

#include <functional>
#include <optional>

#include "binembed/tensor.hpp"

namespace binembed {

enum class Padding { same, valid };

struct ConvSpec {
    int kernel_h = 1;
    int kernel_w = 1;
    int in_ch = 1;
    int out_ch = 1;
    int stride = 1;
    Padding padding = Padding::same;
    bool binary = false;

    int64_t patch_len() const { return int64_t(kernel_h) * kernel_w * in_ch; }
};

struct BatchNormParams {
    std::vector<float> gamma, beta, running_mean, running_var;
    float eps = 1e-5f;
    float momentum = 0.9f;

    explicit BatchNormParams(int channels = 0)
        : gamma(channels, 1.0f), beta(channels, 0.0f),
          running_mean(channels, 0.0f), running_var(channels, 1.0f) {}
    int channels() const { return static_cast<int>(gamma.size()); }
};

enum class BnMode { train, infer };

/// Spatial dims of a rank-3 (H,W,C) or rank-4 (N,H,W,C) tensor.
struct ConvDims {
    int64_t n, h, w, c;
};
ConvDims conv_dims(const FloatTensor& x);
void conv_out_dims(int64_t in_h, int64_t in_w, const ConvSpec& spec, int64_t* out_h, int64_t* out_w,
                   int64_t* pad_top, int64_t* pad_left);

// ---- binarization -------------------------------------------------------

/// Elementwise sign with sign(0) = +1.
FloatTensor sign_forward(const FloatTensor& x);

/// Clipped straight-through estimator: upstream where |x| <= 1, else 0.
FloatTensor sign_backward(const FloatTensor& upstream, const FloatTensor& x);

// ---- convolution --------------------------------------------------------

/// XNOR-popcount convolution. x must hold only {-1,+1} (checked in debug
/// builds); 'same' padding fills with -1 so the result stays exactly the
/// real-valued convolution of +-1 operands. Weights are packed rows of
/// length kernel_h*kernel_w*in_ch, one row per output channel.
FloatTensor binary_conv2d(const FloatTensor& x, const BitTensor& w, const ConvSpec& spec);

/// Standard real-valued cross-correlation, zero 'same' padding.
FloatTensor real_conv2d(const FloatTensor& x, const FloatTensor& w, const ConvSpec& spec,
                        const std::vector<float>* bias = nullptr);

/// Shared backward for real and binary convolutions. `w_rows` is the
/// (out_ch x patch_len) weight matrix actually used in the forward pass
/// (the sign(latent) values for binary layers). Any of dx/dw/dbias may be
/// null. pad_value must match the forward pass (-1 binary, 0 real).
void conv2d_backward(const FloatTensor& x, const float* w_rows, const ConvSpec& spec,
                     const FloatTensor& dy, float pad_value, FloatTensor* dx, float* dw,
                     float* dbias);

// ---- batch norm ---------------------------------------------------------

/// Channels-innermost batch norm over any rank >= 1. Train mode normalizes
/// with batch statistics and updates running stats in place (momentum 0.9);
/// saved_mean/saved_invstd receive the batch stats when non-null.
FloatTensor batch_norm(const FloatTensor& x, BatchNormParams& p, BnMode mode,
                       std::vector<float>* saved_mean = nullptr,
                       std::vector<float>* saved_invstd = nullptr);

void batch_norm_backward_infer(const FloatTensor& x, const BatchNormParams& p,
                               const FloatTensor& dy, FloatTensor* dx, float* dgamma,
                               float* dbeta);

void batch_norm_backward_train(const FloatTensor& x, const BatchNormParams& p,
                               const std::vector<float>& saved_mean,
                               const std::vector<float>& saved_invstd, const FloatTensor& dy,
                               FloatTensor* dx, float* dgamma, float* dbeta);

// ---- pooling ------------------------------------------------------------

FloatTensor max_pool2d(const FloatTensor& x, int k, int stride, Padding padding = Padding::valid);
FloatTensor max_pool2d_backward(const FloatTensor& x, const FloatTensor& dy, int k, int stride,
                                Padding padding = Padding::valid);

/// (H,W,C) -> (C) or (N,H,W,C) -> (N,C); per-feature-map max.
FloatTensor global_max_pool(const FloatTensor& x);
FloatTensor global_max_pool_backward(const FloatTensor& x, const FloatTensor& dy);

// ---- elementwise --------------------------------------------------------

FloatTensor relu(const FloatTensor& x);
FloatTensor relu_backward(const FloatTensor& x, const FloatTensor& dy);

// ---- dense --------------------------------------------------------------

/// w is (m x n), row-major. In binary mode both sign(x) and sign(w) go
/// through the xnor path and the result is exact integers.
FloatTensor dense(const FloatTensor& x, const FloatTensor& w, bool binary,
                  const std::vector<float>* bias = nullptr);

void dense_backward(const FloatTensor& x, const FloatTensor& w, const FloatTensor& dy,
                    FloatTensor* dx, float* dw, float* dbias);

// ---- optimizer ----------------------------------------------------------

struct AdamState {
    std::vector<float> m, v;
    int64_t t = 0;

    explicit AdamState(size_t n = 0) : m(n, 0.0f), v(n, 0.0f) {}
};

/// Standard Adam (beta1 0.9, beta2 0.999, eps 1e-8, bias-corrected).
void adam_step(std::span<float> params, std::span<const float> grads, AdamState& state, float lr);

// ---- test utility -------------------------------------------------------

/// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h.
FloatTensor finite_difference_grad(const std::function<double(const FloatTensor&)>& f,
                                   const FloatTensor& x, float h);

}  // namespace binembed
