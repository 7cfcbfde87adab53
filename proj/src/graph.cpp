#include "binembed/graph.hpp"

#include <cmath>
#include <cstring>

#include "binembed/rng.hpp"

namespace binembed {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::input: return "input";
        case LayerKind::conv: return "conv";
        case LayerKind::binary_conv: return "binary-conv";
        case LayerKind::batch_norm: return "batch-normalization";
        case LayerKind::sign: return "sign";
        case LayerKind::relu: return "relu";
        case LayerKind::max_pool: return "max-pool";
        case LayerKind::global_max_pool: return "global-max-pool";
        case LayerKind::concat: return "concat";
        case LayerKind::tail_add: return "tail-add";
    }
    return "unknown";
}

int64_t Layer::float_param_count() const {
    int64_t n = static_cast<int64_t>(bias.size());
    if (kind == LayerKind::conv) n += weights.numel();
    n += 4ll * bn.channels();
    return n;
}

int LayerGraph::find(const std::string& name) const {
    for (size_t i = 0; i < layers.size(); ++i)
        if (layers[i].name == name) return static_cast<int>(i);
    return -1;
}

const Layer& LayerGraph::at(const std::string& name) const {
    const int i = find(name);
    if (i < 0) throw std::out_of_range("no layer named '" + name + "'");
    return layers[i];
}

ParamCounts parameter_count(const LayerGraph& g) {
    ParamCounts c;
    for (const auto& l : g.layers) {
        if (l.kind == LayerKind::binary_conv) c.binary += l.weight_count();
        c.floating += l.float_param_count();
    }
    c.total = c.binary + c.floating;
    return c;
}

std::vector<ParamView> trainable_params(LayerGraph& g) {
    std::vector<ParamView> out;
    for (size_t i = 0; i < g.layers.size(); ++i) {
        auto& l = g.layers[i];
        const int li = static_cast<int>(i);
        if (l.weights.numel() > 0)
            out.push_back({li, ParamView::Kind::conv_weights, std::span<float>(l.weights.data)});
        if (!l.bias.empty()) out.push_back({li, ParamView::Kind::conv_bias, std::span<float>(l.bias)});
        if (l.bn.channels() > 0) {
            out.push_back({li, ParamView::Kind::bn_gamma, std::span<float>(l.bn.gamma)});
            out.push_back({li, ParamView::Kind::bn_beta, std::span<float>(l.bn.beta)});
        }
    }
    return out;
}

GraphGrads GraphGrads::zeros_like(const LayerGraph& g) {
    GraphGrads gg;
    gg.layers.resize(g.layers.size());
    for (size_t i = 0; i < g.layers.size(); ++i) {
        const auto& l = g.layers[i];
        gg.layers[i].weights.assign(static_cast<size_t>(l.weights.numel()), 0.0f);
        gg.layers[i].bias.assign(l.bias.size(), 0.0f);
        gg.layers[i].gamma.assign(static_cast<size_t>(l.bn.channels()), 0.0f);
        gg.layers[i].beta.assign(static_cast<size_t>(l.bn.channels()), 0.0f);
    }
    return gg;
}

void GraphGrads::zero() {
    for (auto& l : layers) {
        std::fill(l.weights.begin(), l.weights.end(), 0.0f);
        std::fill(l.bias.begin(), l.bias.end(), 0.0f);
        std::fill(l.gamma.begin(), l.gamma.end(), 0.0f);
        std::fill(l.beta.begin(), l.beta.end(), 0.0f);
    }
}

namespace {

FloatTensor concat_channels(const std::vector<const FloatTensor*>& xs) {
    const ConvDims d0 = conv_dims(*xs[0]);
    int64_t total_c = 0;
    for (const auto* x : xs) {
        const ConvDims d = conv_dims(*x);
        if (d.n != d0.n || d.h != d0.h || d.w != d0.w)
            throw shape_error("concat: spatial dims differ");
        total_c += d.c;
    }
    Shape out_shape = xs[0]->rank() == 3 ? Shape{d0.h, d0.w, total_c} : Shape{d0.n, d0.h, d0.w, total_c};
    FloatTensor y(out_shape);
    const int64_t px = d0.n * d0.h * d0.w;
    int64_t off = 0;
    for (const auto* x : xs) {
        const int64_t c = x->shape.back();
        for (int64_t p = 0; p < px; ++p)
            std::memcpy(y.ptr() + p * total_c + off, x->ptr() + p * c, c * sizeof(float));
        off += c;
    }
    return y;
}

void add_into(FloatTensor& dst, FloatTensor src) {
    if (dst.numel() == 0) {
        dst = std::move(src);
        return;
    }
    for (int64_t i = 0; i < dst.numel(); ++i) dst.data[i] += src.data[i];
}

}  // namespace

FloatTensor graph_forward(LayerGraph& g, const FloatTensor& x, BnMode mode, GradTape* tape,
                          const std::string& tap) {
    const bool single = x.rank() == 3;
    FloatTensor batch = x;
    if (single) batch.shape = {1, x.dim(0), x.dim(1), x.dim(2)};
    {
        const ConvDims d = conv_dims(batch);
        if (d.h != g.input_shape[0] || d.w != g.input_shape[1] || d.c != g.input_shape[2])
            throw shape_error("graph_forward: input " + shape_str(x.shape) + " does not match " +
                              shape_str(g.input_shape));
    }

    int stop = static_cast<int>(g.layers.size()) - 1;
    bool pool_tap = false;
    if (!tap.empty()) {
        stop = g.find(tap);
        if (stop < 0) throw std::out_of_range("no layer named '" + tap + "'");
        pool_tap = g.layers[stop].kind != LayerKind::global_max_pool;
        if (tape && pool_tap) throw std::logic_error("tapped forward cannot record a tape");
    }

    std::vector<LayerTape> local;
    std::vector<LayerTape>& acts = tape ? tape->slots : local;
    acts.assign(g.layers.size(), {});

    for (int i = 0; i <= stop; ++i) {
        Layer& l = g.layers[i];
        LayerTape& t = acts[i];
        const FloatTensor* in = l.inputs.empty() ? &batch : &acts[l.inputs[0]].out;
        switch (l.kind) {
            case LayerKind::input:
                t.out = batch;
                break;
            case LayerKind::conv:
                t.out = real_conv2d(*in, l.weights, l.conv, l.bias.empty() ? nullptr : &l.bias);
                break;
            case LayerKind::binary_conv:
                if (mode == BnMode::train) l.repack();
                t.out = binary_conv2d(*in, l.packed, l.conv);
                break;
            case LayerKind::batch_norm:
                t.out = batch_norm(*in, l.bn, mode, &t.bn_mean, &t.bn_invstd);
                break;
            case LayerKind::sign:
                t.out = sign_forward(*in);
                break;
            case LayerKind::relu:
                t.out = relu(*in);
                break;
            case LayerKind::max_pool:
                t.out = max_pool2d(*in, l.pool_k, l.pool_stride, l.pool_pad);
                break;
            case LayerKind::global_max_pool:
                t.out = global_max_pool(*in);
                break;
            case LayerKind::concat: {
                std::vector<const FloatTensor*> xs;
                for (int j : l.inputs) xs.push_back(&acts[j].out);
                t.out = concat_channels(xs);
                break;
            }
            case LayerKind::tail_add: {
                const FloatTensor& main = acts[l.inputs[0]].out;
                const FloatTensor& addend = acts[l.inputs[1]].out;
                const int64_t c = main.shape.back();
                const int64_t ct = l.tail_channels;
                if (addend.shape.back() != ct) throw shape_error("tail_add: addend channel mismatch");
                t.out = main;
                const int64_t px = main.numel() / c;
                for (int64_t p = 0; p < px; ++p) {
                    float* dst = t.out.ptr() + p * c + (c - ct);
                    const float* src = addend.ptr() + p * ct;
                    for (int64_t k = 0; k < ct; ++k) dst[k] += src[k];
                }
                break;
            }
        }
        // Free activations nobody later will read (inference only).
        if (!tape && i > 0) {
            for (int j : l.inputs) {
                bool needed = false;
                for (int fut = i + 1; fut <= stop && !needed; ++fut)
                    for (int fj : g.layers[fut].inputs) needed |= (fj == j);
                if (!needed) acts[j].out = FloatTensor{};
            }
        }
    }

    FloatTensor emb = pool_tap ? global_max_pool(acts[stop].out) : std::move(acts[stop].out);
    if (!tape) acts.clear();
    if (single && emb.rank() == 2) emb.shape = {emb.dim(1)};
    return emb;
}

void graph_backward(LayerGraph& g, GradTape& tape, const FloatTensor& d_embedding, BnMode mode,
                    GraphGrads& grads) {
    const int n_layers = static_cast<int>(g.layers.size());
    if (static_cast<int>(tape.slots.size()) != n_layers)
        throw shape_error("graph_backward: tape does not match graph");

    std::vector<FloatTensor> douts(n_layers);
    douts[n_layers - 1] = d_embedding;
    if (g.layers.back().kind == LayerKind::global_max_pool && d_embedding.rank() == 1)
        douts[n_layers - 1].shape = {1, d_embedding.dim(0)};

    for (int i = n_layers - 1; i >= 0; --i) {
        Layer& l = g.layers[i];
        FloatTensor& dout = douts[i];
        if (dout.numel() == 0) continue;  // not on the path to the loss
        const FloatTensor* in = l.inputs.empty() ? nullptr : &tape.slots[l.inputs[0]].out;
        auto& lg = grads.layers[i];

        switch (l.kind) {
            case LayerKind::input:
                break;
            case LayerKind::conv: {
                FloatTensor dx;
                conv2d_backward(*in, l.weights.ptr(), l.conv, dout, 0.0f,
                                l.inputs[0] == 0 ? nullptr : &dx, lg.weights.data(),
                                l.bias.empty() ? nullptr : lg.bias.data());
                if (l.inputs[0] != 0) add_into(douts[l.inputs[0]], std::move(dx));
                break;
            }
            case LayerKind::binary_conv: {
                FloatTensor signed_w = sign_forward(l.weights);
                FloatTensor dx;
                std::vector<float> dws(static_cast<size_t>(l.weights.numel()), 0.0f);
                conv2d_backward(*in, signed_w.ptr(), l.conv, dout, -1.0f,
                                l.inputs[0] == 0 ? nullptr : &dx, dws.data(), nullptr);
                // Straight-through onto the latent weights.
                for (int64_t k = 0; k < l.weights.numel(); ++k)
                    if (std::fabs(l.weights.data[k]) <= 1.0f) lg.weights[k] += dws[k];
                if (l.inputs[0] != 0) add_into(douts[l.inputs[0]], std::move(dx));
                break;
            }
            case LayerKind::batch_norm: {
                FloatTensor dx;
                if (mode == BnMode::train)
                    batch_norm_backward_train(*in, l.bn, tape.slots[i].bn_mean,
                                              tape.slots[i].bn_invstd, dout, &dx, lg.gamma.data(),
                                              lg.beta.data());
                else
                    batch_norm_backward_infer(*in, l.bn, dout, &dx, lg.gamma.data(), lg.beta.data());
                add_into(douts[l.inputs[0]], std::move(dx));
                break;
            }
            case LayerKind::sign:
                add_into(douts[l.inputs[0]], sign_backward(dout, *in));
                break;
            case LayerKind::relu:
                add_into(douts[l.inputs[0]], relu_backward(*in, dout));
                break;
            case LayerKind::max_pool:
                add_into(douts[l.inputs[0]],
                         max_pool2d_backward(*in, dout, l.pool_k, l.pool_stride, l.pool_pad));
                break;
            case LayerKind::global_max_pool:
                add_into(douts[l.inputs[0]], global_max_pool_backward(*in, dout));
                break;
            case LayerKind::concat: {
                const int64_t total_c = l.out_shape.back();
                const int64_t px = dout.numel() / total_c;
                int64_t off = 0;
                for (int j : l.inputs) {
                    const FloatTensor& src = tape.slots[j].out;
                    const int64_t c = src.shape.back();
                    FloatTensor slice(src.shape);
                    for (int64_t p = 0; p < px; ++p)
                        std::memcpy(slice.ptr() + p * c, dout.ptr() + p * total_c + off,
                                    c * sizeof(float));
                    add_into(douts[j], std::move(slice));
                    off += c;
                }
                break;
            }
            case LayerKind::tail_add: {
                const int64_t c = l.out_shape.back();
                const int64_t ct = l.tail_channels;
                const int64_t px = dout.numel() / c;
                FloatTensor dadd(tape.slots[l.inputs[1]].out.shape);
                for (int64_t p = 0; p < px; ++p)
                    std::memcpy(dadd.ptr() + p * ct, dout.ptr() + p * c + (c - ct),
                                ct * sizeof(float));
                add_into(douts[l.inputs[1]], std::move(dadd));
                add_into(douts[l.inputs[0]], dout);
                break;
            }
        }
        dout = FloatTensor{};
        tape.slots[i].out = FloatTensor{};  // release as consumed
    }
}

void initialize_weights(LayerGraph& g, uint64_t seed) {
    Rng rng(seed);
    for (auto& l : g.layers) {
        if (l.kind == LayerKind::conv || l.kind == LayerKind::binary_conv) {
            const double fan_in = static_cast<double>(l.conv.patch_len());
            const double fan_out =
                static_cast<double>(l.conv.kernel_h) * l.conv.kernel_w * l.conv.out_ch;
            const double std = l.kind == LayerKind::conv
                                   ? std::sqrt(2.0 / fan_in)                 // He
                                   : std::sqrt(2.0 / (fan_in + fan_out));    // Glorot
            for (auto& w : l.weights.data) w = static_cast<float>(rng.normal(0.0, std));
            std::fill(l.bias.begin(), l.bias.end(), 0.0f);
        }
        if (l.bn.channels() > 0) {
            std::fill(l.bn.gamma.begin(), l.bn.gamma.end(), 1.0f);
            std::fill(l.bn.beta.begin(), l.bn.beta.end(), 0.0f);
            std::fill(l.bn.running_mean.begin(), l.bn.running_mean.end(), 0.0f);
            std::fill(l.bn.running_var.begin(), l.bn.running_var.end(), 1.0f);
        }
    }
    g.repack_all();
}

}  // namespace binembed
