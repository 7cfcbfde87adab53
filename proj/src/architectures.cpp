#include "binembed/architectures.hpp"

#include <cmath>
#include <map>

namespace binembed {

namespace {

constexpr uint64_t kBuilderSeed = 0xb14e5eedULL;

// Appends layers, assigning "<kind>-<ordinal>" names (1-based, per kind)
// and tracking per-sample output shapes.
class Builder {
  public:
    explicit Builder(Shape input_shape) {
        g_.input_shape = input_shape;
        Layer in;
        in.kind = LayerKind::input;
        in.name = next_name(LayerKind::input);
        in.out_shape = input_shape;
        g_.layers.push_back(std::move(in));
        last_ = 0;
    }

    int last() const { return last_; }
    Shape shape_of(int i) const { return g_.layers[i].out_shape; }
    int64_t channels(int i) const { return g_.layers[i].out_shape.back(); }

    int conv(int from, int k, int stride, int out_ch, bool binary, bool bias,
             const std::string& name_override = "") {
        const Shape in_shape = shape_of(from);
        Layer l;
        l.kind = binary ? LayerKind::binary_conv : LayerKind::conv;
        l.name = name_override.empty() ? next_name(l.kind) : name_override;
        l.inputs = {from};
        l.conv = {k, k, static_cast<int>(in_shape[2]), out_ch, stride, Padding::same, binary};
        l.weights = FloatTensor({out_ch, k, k, in_shape[2]});
        if (bias) l.bias.assign(out_ch, 0.0f);
        int64_t oh, ow, pt, pl;
        conv_out_dims(in_shape[0], in_shape[1], l.conv, &oh, &ow, &pt, &pl);
        l.out_shape = {oh, ow, out_ch};
        return push(std::move(l));
    }

    int batch_norm(int from) {
        Layer l;
        l.kind = LayerKind::batch_norm;
        l.name = next_name(l.kind);
        l.inputs = {from};
        l.bn = BatchNormParams(static_cast<int>(channels(from)));
        l.out_shape = shape_of(from);
        return push(std::move(l));
    }

    int sign(int from) { return simple(LayerKind::sign, from); }
    int relu(int from) { return simple(LayerKind::relu, from); }

    int max_pool(int from, int k, int stride) {
        const Shape in_shape = shape_of(from);
        Layer l;
        l.kind = LayerKind::max_pool;
        l.name = next_name(l.kind);
        l.inputs = {from};
        l.pool_k = k;
        l.pool_stride = stride;
        l.pool_pad = Padding::same;
        l.out_shape = {(in_shape[0] + stride - 1) / stride, (in_shape[1] + stride - 1) / stride,
                       in_shape[2]};
        return push(std::move(l));
    }

    int global_max_pool(int from) {
        Layer l;
        l.kind = LayerKind::global_max_pool;
        l.name = next_name(l.kind);
        l.inputs = {from};
        l.out_shape = {shape_of(from)[2]};
        return push(std::move(l));
    }

    int concat(int a, int b) {
        Layer l;
        l.kind = LayerKind::concat;
        l.name = next_name(l.kind);
        l.inputs = {a, b};
        Shape s = shape_of(a);
        s[2] += channels(b);
        l.out_shape = s;
        return push(std::move(l));
    }

    int tail_add(int main, int addend) {
        Layer l;
        l.kind = LayerKind::tail_add;
        l.name = next_name(l.kind);
        l.inputs = {main, addend};
        l.tail_channels = static_cast<int>(channels(addend));
        l.out_shape = shape_of(main);
        return push(std::move(l));
    }

    LayerGraph take(std::string arch) {
        g_.arch = std::move(arch);
        initialize_weights(g_, kBuilderSeed);
        return std::move(g_);
    }

  private:
    int simple(LayerKind kind, int from) {
        Layer l;
        l.kind = kind;
        l.name = next_name(kind);
        l.inputs = {from};
        l.out_shape = shape_of(from);
        return push(std::move(l));
    }

    int push(Layer l) {
        g_.layers.push_back(std::move(l));
        last_ = static_cast<int>(g_.layers.size()) - 1;
        return last_;
    }

    std::string next_name(LayerKind kind) {
        return std::string(layer_kind_name(kind)) + "-" + std::to_string(++counters_[kind]);
    }

    LayerGraph g_;
    std::map<LayerKind, int> counters_;
    int last_ = 0;
};

// BN -> sign -> binary 3x3 conv (growth channels) -> concat with input.
int densely_connected_block(Builder& b, int x, int growth) {
    int y = b.batch_norm(x);
    y = b.sign(y);
    y = b.conv(y, 3, 1, growth, /*binary=*/true, /*bias=*/false);
    return b.concat(x, y);
}

// Reduction rounded to a multiple of 32, as in the cited DenseNet recipe.
int reduced_channels(int64_t c, double reduction) {
    return static_cast<int>(std::lround(static_cast<double>(c) / reduction / 32.0)) * 32;
}

}  // namespace

LayerGraph build_densenet28() {
    Builder b({98, 64, 1});
    constexpr int kGrowth = 64;
    const int block_layers[4] = {6, 6, 6, 5};
    const double reductions[3] = {2.7, 2.7, 2.2};

    // Real stem: 7x7/2 conv, 3x3/2 max pool, then one 3x3 conv.
    int x = b.conv(0, 7, 2, 64, false, true);
    x = b.relu(x);
    x = b.max_pool(x, 3, 2);
    x = b.conv(x, 3, 1, 64, false, true);
    x = b.relu(x);

    for (int block = 0; block < 4; ++block) {
        for (int i = 0; i < block_layers[block]; ++i) x = densely_connected_block(b, x, kGrowth);
        if (block < 3) {
            const int out_ch = reduced_channels(b.channels(x), reductions[block]);
            const std::string pw_name = "section-" + std::to_string(block + 1) + "-transition-pw";
            x = b.batch_norm(x);
            x = b.max_pool(x, 2, 2);
            if (block == 0) {
                // First transition is real-valued; later ones binary.
                x = b.relu(x);
                x = b.conv(x, 1, 1, out_ch, false, false, pw_name);
            } else {
                x = b.sign(x);
                x = b.conv(x, 1, 1, out_ch, true, false, pw_name);
            }
        }
    }
    x = b.batch_norm(x);
    x = b.relu(x);
    b.global_max_pool(x);
    return b.take("densenet28");
}

LayerGraph build_meliusnet22() {
    Builder b({98, 64, 1});
    constexpr int kGrowth = 64;
    const int section_pairs[4] = {4, 5, 4, 4};
    const int transition_ch[3] = {160, 224, 256};

    // Three-conv real stem.
    int x = b.conv(0, 3, 2, 32, false, false);
    x = b.batch_norm(x);
    x = b.relu(x);
    x = b.conv(x, 3, 1, 32, false, false);
    x = b.batch_norm(x);
    x = b.relu(x);
    x = b.conv(x, 3, 1, 64, false, false);
    x = b.batch_norm(x);
    x = b.relu(x);
    x = b.max_pool(x, 3, 2);

    for (int section = 0; section < 4; ++section) {
        for (int pair = 0; pair < section_pairs[section]; ++pair) {
            // Dense block widens by kGrowth channels...
            x = densely_connected_block(b, x, kGrowth);
            // ...and the improvement block refines the channels just added.
            int y = b.batch_norm(x);
            y = b.sign(y);
            y = b.conv(y, 3, 1, kGrowth, true, false);
            x = b.tail_add(x, y);
        }
        if (section < 3) {
            const std::string pw_name = "section-" + std::to_string(section + 1) + "-transition-pw";
            x = b.batch_norm(x);
            x = b.max_pool(x, 2, 2);
            if (section == 0) {
                x = b.relu(x);
                x = b.conv(x, 1, 1, transition_ch[section], false, false, pw_name);
            } else {
                x = b.sign(x);
                x = b.conv(x, 1, 1, transition_ch[section], true, false, pw_name);
            }
        }
    }
    x = b.batch_norm(x);
    x = b.relu(x);
    b.global_max_pool(x);
    return b.take("meliusnet22");
}

LayerGraph truncate_at_tap(const LayerGraph& base, const std::string& tap) {
    const int stop = base.find(tap);
    if (stop < 0) throw std::out_of_range("no layer named '" + tap + "' in " + base.arch);

    LayerGraph g;
    g.arch = "tiny";
    g.tiny_tap = tap;
    g.input_shape = base.input_shape;
    g.layers.assign(base.layers.begin(), base.layers.begin() + stop + 1);

    if (g.layers.back().kind != LayerKind::global_max_pool) {
        Layer pool;
        pool.kind = LayerKind::global_max_pool;
        pool.name = "global-max-pool-tap";
        pool.inputs = {stop};
        pool.out_shape = {g.layers[stop].out_shape.back()};
        g.layers.push_back(std::move(pool));
    }
    return g;
}

LayerGraph build_tiny(const std::string& tap) { return truncate_at_tap(build_densenet28(), tap); }

LayerGraph build_by_name(const std::string& arch) {
    if (arch == "densenet28") return build_densenet28();
    if (arch == "meliusnet22") return build_meliusnet22();
    if (arch == "tiny") return build_tiny();
    if (arch.rfind("tiny:", 0) == 0) return build_tiny(arch.substr(5));
    throw std::invalid_argument("unknown architecture '" + arch +
                                "' (expected densenet28, meliusnet22, tiny or tiny:<tap>)");
}

}  // namespace binembed
