#pragma once

#include <span>
#include <string>

#include "binembed/ops.hpp"

namespace binembed {

enum class LayerKind : uint8_t {
    input = 0,
    conv = 1,
    binary_conv = 2,
    batch_norm = 3,
    sign = 4,
    relu = 5,
    max_pool = 6,
    global_max_pool = 7,
    concat = 8,
    tail_add = 9,
};

const char* layer_kind_name(LayerKind k);

struct Layer {
    std::string name;
    LayerKind kind = LayerKind::input;
    std::vector<int> inputs;  // producer indices, always < own index

    ConvSpec conv;  // conv / binary_conv
    int pool_k = 0, pool_stride = 0;
    Padding pool_pad = Padding::valid;
    int tail_channels = 0;  // tail_add

    // Parameters. Binary convolutions train latent real weights; the packed
    // view used by inference is refreshed from them.
    FloatTensor weights;  // {out_ch, kh, kw, in_ch}
    std::vector<float> bias;
    BatchNormParams bn{0};
    BitTensor packed;

    Shape out_shape;  // per-sample (H,W,C) or (C)

    int64_t weight_count() const { return weights.numel(); }
    int64_t float_param_count() const;

    void repack() {
        if (kind == LayerKind::binary_conv)
            packed = pack(FloatTensor({conv.out_ch, conv.patch_len()}, weights.data));
    }
};

struct LayerGraph {
    std::string arch;      // densenet28 | meliusnet22 | tiny
    std::string tiny_tap;  // set when arch == tiny
    Shape input_shape{98, 64, 1};
    std::vector<Layer> layers;

    int find(const std::string& name) const;
    const Layer& at(const std::string& name) const;
    int64_t embedding_dim() const { return layers.back().out_shape.back(); }

    void repack_all() {
        for (auto& l : layers) l.repack();
    }
};

struct ParamCounts {
    int64_t total = 0;
    int64_t binary = 0;
    int64_t floating = 0;
};
ParamCounts parameter_count(const LayerGraph& g);

/// Flat views over the trainable parameters (latent conv weights, biases,
/// batch-norm gamma/beta), in layer order.
struct ParamView {
    int layer;
    enum class Kind : uint8_t { conv_weights, conv_bias, bn_gamma, bn_beta } kind;
    std::span<float> data;
};
std::vector<ParamView> trainable_params(LayerGraph& g);

struct LayerTape {
    FloatTensor out;
    std::vector<float> bn_mean, bn_invstd;  // train-mode batch stats
};
struct GradTape {
    std::vector<LayerTape> slots;
};

struct GraphGrads {
    struct PerLayer {
        std::vector<float> weights, bias, gamma, beta;
    };
    std::vector<PerLayer> layers;

    static GraphGrads zeros_like(const LayerGraph& g);
    void zero();
};

/// Runs the graph on a (N,H,W,C) or (H,W,C) batch and returns (N,D)
/// embeddings ((D) for single input). With a tap name, stops there and
/// applies global max pooling to the tapped activation. Train mode updates
/// batch-norm running statistics; pass a tape to enable backward.
FloatTensor graph_forward(LayerGraph& g, const FloatTensor& x, BnMode mode,
                          GradTape* tape = nullptr, const std::string& tap = "");

/// Accumulates parameter gradients from d_embedding. Consumes tape
/// activations (slots are released as they are used). Gradients for binary
/// conv weights are straight-through-masked against the latent weights.
void graph_backward(LayerGraph& g, GradTape& tape, const FloatTensor& d_embedding, BnMode mode,
                    GraphGrads& grads);

/// Deterministic He/Glorot initialization of all weights from a seed.
void initialize_weights(LayerGraph& g, uint64_t seed);

}  // namespace binembed
