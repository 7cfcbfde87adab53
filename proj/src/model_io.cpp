#include "binembed/model_io.hpp"

#include <cstring>
#include <fstream>

#include <zlib.h>

namespace binembed {

namespace {

constexpr char kMagic[4] = {'B', 'R', 'I', 'L'};
constexpr uint32_t kVersion = 1;

enum class BlobKind : uint8_t {
    packed_weights = 1,
    float_weights = 2,
    bias = 3,
    bn_gamma = 4,
    bn_beta = 5,
    bn_running_mean = 6,
    bn_running_var = 7,
};

const char* blob_kind_name(BlobKind k) {
    switch (k) {
        case BlobKind::packed_weights: return "packed-weights";
        case BlobKind::float_weights: return "weights";
        case BlobKind::bias: return "bias";
        case BlobKind::bn_gamma: return "gamma";
        case BlobKind::bn_beta: return "beta";
        case BlobKind::bn_running_mean: return "running-mean";
        case BlobKind::bn_running_var: return "running-var";
    }
    return "?";
}

struct BlobRef {
    BlobKind kind;
    const void* data;
    uint64_t bytes;
};

std::vector<BlobRef> layer_blobs(const Layer& l) {
    std::vector<BlobRef> blobs;
    if (l.kind == LayerKind::binary_conv)
        blobs.push_back({BlobKind::packed_weights, l.packed.words.data(), l.packed.words.size() * 8});
    else if (l.kind == LayerKind::conv)
        blobs.push_back({BlobKind::float_weights, l.weights.ptr(), uint64_t(l.weights.numel()) * 4});
    if (!l.bias.empty()) blobs.push_back({BlobKind::bias, l.bias.data(), l.bias.size() * 4});
    if (l.bn.channels() > 0) {
        blobs.push_back({BlobKind::bn_gamma, l.bn.gamma.data(), l.bn.gamma.size() * 4});
        blobs.push_back({BlobKind::bn_beta, l.bn.beta.data(), l.bn.beta.size() * 4});
        blobs.push_back({BlobKind::bn_running_mean, l.bn.running_mean.data(), l.bn.running_mean.size() * 4});
        blobs.push_back({BlobKind::bn_running_var, l.bn.running_var.data(), l.bn.running_var.size() * 4});
    }
    return blobs;
}

class Writer {
  public:
    void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>(v >> (8 * i)));
    }
    void f32(float v) {
        uint32_t u;
        std::memcpy(&u, &v, 4);
        u32(u);
    }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
    }
    void raw(const void* p, size_t n) {
        const char* c = static_cast<const char*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    size_t size() const { return buf_.size(); }
    const std::vector<char>& bytes() const { return buf_; }

  private:
    std::vector<char> buf_;
};

class Reader {
  public:
    Reader(const char* data, size_t size) : p_(data), end_(data + size) {}
    uint8_t u8() { return static_cast<uint8_t>(*take(1)); }
    uint32_t u32() {
        const char* p = take(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(static_cast<unsigned char>(p[i])) << (8 * i);
        return v;
    }
    uint64_t u64() {
        const char* p = take(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(static_cast<unsigned char>(p[i])) << (8 * i);
        return v;
    }
    float f32() {
        const uint32_t u = u32();
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }
    std::string str() {
        const uint32_t n = u32();
        return std::string(take(n), n);
    }
    const char* take(size_t n) {
        if (p_ + n > end_) throw truncated_file_error("model file truncated");
        const char* p = p_;
        p_ += n;
        return p;
    }

  private:
    const char* p_;
    const char* end_;
};

uint32_t blob_crc(const void* data, uint64_t bytes) {
    return static_cast<uint32_t>(
        crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(bytes)));
}

Writer serialize(const LayerGraph& g) {
    Writer w;
    w.raw(kMagic, 4);
    w.u32(kVersion);
    w.str(g.arch);
    w.str(g.tiny_tap);
    for (int i = 0; i < 3; ++i) w.u32(static_cast<uint32_t>(g.input_shape[i]));
    w.u32(static_cast<uint32_t>(g.layers.size()));

    uint64_t offset = 0;  // relative to blob region
    for (const auto& l : g.layers) {
        w.str(l.name);
        w.u8(static_cast<uint8_t>(l.kind));
        w.u32(static_cast<uint32_t>(l.inputs.size()));
        for (int in : l.inputs) w.u32(static_cast<uint32_t>(in));
        w.u32(l.conv.kernel_h);
        w.u32(l.conv.kernel_w);
        w.u32(l.conv.in_ch);
        w.u32(l.conv.out_ch);
        w.u32(l.conv.stride);
        w.u8(l.conv.padding == Padding::same ? 0 : 1);
        w.u8(l.conv.binary ? 1 : 0);
        w.u32(l.pool_k);
        w.u32(l.pool_stride);
        w.u8(l.pool_pad == Padding::same ? 0 : 1);
        w.u32(l.tail_channels);
        w.f32(l.bn.eps);
        w.f32(l.bn.momentum);
        w.u32(static_cast<uint32_t>(l.out_shape.size()));
        for (int64_t d : l.out_shape) w.u32(static_cast<uint32_t>(d));
        const auto blobs = layer_blobs(l);
        w.u32(static_cast<uint32_t>(blobs.size()));
        for (const auto& blob : blobs) {
            w.u8(static_cast<uint8_t>(blob.kind));
            w.u64(offset);
            w.u64(blob.bytes);
            w.u32(blob_crc(blob.data, blob.bytes));
            offset += blob.bytes;
        }
    }
    for (const auto& l : g.layers)
        for (const auto& blob : layer_blobs(l)) w.raw(blob.data, blob.bytes);
    return w;
}

}  // namespace

void save_model(const LayerGraph& g, const std::string& path) {
    const Writer w = serialize(g);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw model_io_error("cannot open for writing: " + path);
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.size()));
    if (!out) throw model_io_error("write failed: " + path);
}

LayerGraph load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw model_io_error("cannot open model file: " + path);
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(buf.data(), buf.size());

    char magic[4];
    std::memcpy(magic, r.take(4), 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw bad_magic_error(path + ": not a model file (bad magic)");
    const uint32_t version = r.u32();
    if (version != kVersion)
        throw bad_version_error(path + ": unsupported version " + std::to_string(version));

    LayerGraph g;
    g.arch = r.str();
    g.tiny_tap = r.str();
    g.input_shape = {r.u32(), r.u32(), r.u32()};
    const uint32_t n_layers = r.u32();

    struct PendingBlob {
        size_t layer;
        BlobKind kind;
        uint64_t offset, bytes;
        uint32_t crc;
    };
    std::vector<PendingBlob> pending;

    g.layers.resize(n_layers);
    for (uint32_t i = 0; i < n_layers; ++i) {
        Layer& l = g.layers[i];
        l.name = r.str();
        l.kind = static_cast<LayerKind>(r.u8());
        const uint32_t n_inputs = r.u32();
        for (uint32_t k = 0; k < n_inputs; ++k) l.inputs.push_back(static_cast<int>(r.u32()));
        l.conv.kernel_h = static_cast<int>(r.u32());
        l.conv.kernel_w = static_cast<int>(r.u32());
        l.conv.in_ch = static_cast<int>(r.u32());
        l.conv.out_ch = static_cast<int>(r.u32());
        l.conv.stride = static_cast<int>(r.u32());
        l.conv.padding = r.u8() == 0 ? Padding::same : Padding::valid;
        l.conv.binary = r.u8() != 0;
        l.pool_k = static_cast<int>(r.u32());
        l.pool_stride = static_cast<int>(r.u32());
        l.pool_pad = r.u8() == 0 ? Padding::same : Padding::valid;
        l.tail_channels = static_cast<int>(r.u32());
        const float eps = r.f32();
        const float momentum = r.f32();
        const uint32_t shape_len = r.u32();
        for (uint32_t k = 0; k < shape_len; ++k) l.out_shape.push_back(r.u32());
        const uint32_t n_blobs = r.u32();
        for (uint32_t k = 0; k < n_blobs; ++k) {
            PendingBlob b;
            b.layer = i;
            b.kind = static_cast<BlobKind>(r.u8());
            b.offset = r.u64();
            b.bytes = r.u64();
            b.crc = r.u32();
            pending.push_back(b);
        }
        if (l.kind == LayerKind::conv || l.kind == LayerKind::binary_conv)
            l.weights = FloatTensor({l.conv.out_ch, l.conv.kernel_h, l.conv.kernel_w, l.conv.in_ch});
        bool has_bn = false;
        for (const auto& b : pending)
            if (b.layer == i && b.kind == BlobKind::bn_gamma) has_bn = true;
        if (has_bn) {
            l.bn = BatchNormParams(static_cast<int>(l.out_shape.back()));
            l.bn.eps = eps;
            l.bn.momentum = momentum;
        }
    }

    const char* blob_region = r.take(0);
    for (const auto& b : pending) {
        const char* src = blob_region + b.offset;
        if (src + b.bytes > buf.data() + buf.size())
            throw truncated_file_error(path + ": blob past end of file");
        if (blob_crc(src, b.bytes) != b.crc) {
            throw crc_error(path + ": CRC mismatch in layer '" + g.layers[b.layer].name + "' blob " +
                            blob_kind_name(b.kind));
        }
        Layer& l = g.layers[b.layer];
        auto as_floats = [&](std::vector<float>& dst) {
            dst.resize(b.bytes / 4);
            std::memcpy(dst.data(), src, b.bytes);
        };
        switch (b.kind) {
            case BlobKind::packed_weights: {
                l.packed = BitTensor({l.conv.out_ch, l.conv.patch_len()});
                if (l.packed.words.size() * 8 != b.bytes)
                    throw model_io_error(path + ": packed blob size mismatch in '" + l.name + "'");
                std::memcpy(l.packed.words.data(), src, b.bytes);
                FloatTensor signs = unpack(l.packed);
                l.weights.data = std::move(signs.data);
                break;
            }
            case BlobKind::float_weights:
                if (uint64_t(l.weights.numel()) * 4 != b.bytes)
                    throw model_io_error(path + ": weight blob size mismatch in '" + l.name + "'");
                std::memcpy(l.weights.ptr(), src, b.bytes);
                break;
            case BlobKind::bias: as_floats(l.bias); break;
            case BlobKind::bn_gamma: as_floats(l.bn.gamma); break;
            case BlobKind::bn_beta: as_floats(l.bn.beta); break;
            case BlobKind::bn_running_mean: as_floats(l.bn.running_mean); break;
            case BlobKind::bn_running_var: as_floats(l.bn.running_var); break;
        }
    }
    return g;
}

SizeReport size_report(const LayerGraph& g) {
    const ParamCounts counts = parameter_count(g);
    SizeReport r;
    r.param_count_total = counts.total;
    r.param_count_binary = counts.binary;
    r.param_count_float = counts.floating;

    // Actual serialized layout: everything that is not exact weight payload
    // (table, descriptors, packed-row padding) counts as header.
    const Writer w = serialize(g);
    const int64_t file_bytes = static_cast<int64_t>(w.size());
    const int64_t weight_bytes = counts.binary / 8 + counts.floating * 4;
    r.header_bytes = file_bytes - weight_bytes;

    r.float_size_mb = static_cast<double>(counts.total) * 4.0 / (1 << 20);
    r.quantized_weights_mb = static_cast<double>(weight_bytes) / (1 << 20);
    r.quantized_size_mb = static_cast<double>(weight_bytes + r.header_bytes) / (1 << 20);
    return r;
}

}  // namespace binembed
