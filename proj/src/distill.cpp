#include "binembed/distill.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>

#include "binembed/model_io.hpp"
#include "binembed/parallel.hpp"
#include "binembed/rng.hpp"

namespace binembed {

void write_embedding_file(const std::string& path, int dim,
                          const std::vector<EmbeddingRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw distill_error("cannot write embedding file: " + path);
    auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    auto u64 = [&](uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    out.write("BREM", 4);
    u32(1);
    u32(static_cast<uint32_t>(dim));
    u64(records.size());
    for (const auto& r : records) {
        if (static_cast<int>(r.values.size()) != dim)
            throw distill_error("embedding record has wrong dimension");
        u64(r.key);
        out.write(reinterpret_cast<const char*>(r.values.data()), int64_t(dim) * 4);
    }
    if (!out) throw distill_error("write failed: " + path);
}

std::unordered_map<uint64_t, std::vector<float>> read_embedding_file(const std::string& path,
                                                                     int* dim_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw distill_error("cannot open embedding file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "BREM", 4) != 0)
        throw distill_error(path + ": not an embedding file (bad magic)");
    uint32_t version = 0, dim = 0;
    uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&dim), 4);
    in.read(reinterpret_cast<char*>(&count), 8);
    if (!in || version != 1)
        throw distill_error(path + ": unsupported embedding file version");
    std::unordered_map<uint64_t, std::vector<float>> table;
    table.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        uint64_t key = 0;
        std::vector<float> v(dim);
        in.read(reinterpret_cast<char*>(&key), 8);
        in.read(reinterpret_cast<char*>(v.data()), int64_t(dim) * 4);
        if (!in) throw distill_error(path + ": truncated embedding file");
        table.emplace(key, std::move(v));
    }
    if (dim_out) *dim_out = static_cast<int>(dim);
    return table;
}

FileTeacher::FileTeacher(const std::string& path) { table_ = read_embedding_file(path, &dim_); }

std::vector<float> FileTeacher::embed(const Waveform&, uint64_t key) const {
    const auto it = table_.find(key);
    if (it == table_.end())
        throw distill_error("no teacher embedding for segment key " + std::to_string(key));
    return it->second;
}

// Teacher target: seeded projection of the per-bin time average of the
// log-mel, shifted/scaled so targets are O(1) and reachable by the head
// within a desk-scale step budget.
SyntheticTeacher::SyntheticTeacher(uint64_t seed, int dim) : dim_(dim) {
    Rng rng(seed);
    proj_.resize(static_cast<size_t>(dim) * frontend::kMelBins);
    const double scale = 1.0 / std::sqrt(static_cast<double>(frontend::kMelBins));
    for (auto& v : proj_) v = static_cast<float>(rng.normal(0.0, scale));
    offset_.resize(dim);
    for (auto& v : offset_) v = static_cast<float>(rng.normal(0.0, 0.5));
}

std::vector<float> SyntheticTeacher::embed(const Waveform& segment, uint64_t) const {
    const LogMelSpectrogram mel = log_mel(segment);
    std::vector<double> feat(frontend::kMelBins, 0.0);
    for (int64_t t = 0; t < mel.frames; ++t)
        for (int64_t b = 0; b < mel.bins; ++b) feat[b] += mel.frame(t)[b];
    // Normalize features to roughly [-2, 3]: log-mel sits in [log(1e-6), ~3].
    for (auto& f : feat) f = (f / mel.frames + 8.0) / 4.0;

    std::vector<float> out(dim_);
    for (int i = 0; i < dim_; ++i) {
        double acc = offset_[i];
        const float* row = proj_.data() + int64_t(i) * frontend::kMelBins;
        for (int b = 0; b < frontend::kMelBins; ++b) acc += row[b] * feat[b];
        out[i] = static_cast<float>(acc);
    }
    return out;
}

RegressorHead RegressorHead::make(int in_dim, int out_dim, bool binary, uint64_t seed) {
    RegressorHead h;
    h.binary = binary;
    h.weights = FloatTensor({out_dim, in_dim});
    h.bias.assign(out_dim, 0.0f);
    Rng rng(seed);
    const double std = std::sqrt(2.0 / (in_dim + out_dim));
    for (auto& w : h.weights.data) w = static_cast<float>(rng.normal(0.0, std));
    return h;
}

uint64_t segment_key(const std::string& clip_id, int64_t start) {
    const std::string s = clip_id + "#" + std::to_string(start);
    return fnv1a64(s.data(), s.size());
}

SegmentIndex build_segment_index(const Manifest& m, const std::string& split) {
    SegmentIndex idx;
    for (const auto& e : m.entries) {
        if (!split.empty() && e.split != split) continue;
        int64_t samples16k = 0;
        try {
            Waveform w = read_wav(e.path);
            samples16k = w.sample_rate == frontend::kSampleRate
                             ? static_cast<int64_t>(w.samples.size())
                             : static_cast<int64_t>(resample_linear(w, frontend::kSampleRate).samples.size());
        } catch (const std::exception& ex) {
            std::cerr << "warning: skipping unreadable clip " << e.path << ": " << ex.what() << "\n";
            idx.skipped.push_back(e.path);
            continue;
        }
        const int clip = static_cast<int>(idx.clips.size());
        idx.clips.push_back(e);
        const int64_t full = samples16k / kSegmentSamples;
        if (full == 0) {
            idx.segments.push_back({clip, 0, segment_key(e.id, 0)});  // zero-padded
        } else {
            for (int64_t s = 0; s < full; ++s)
                idx.segments.push_back({clip, s * kSegmentSamples, segment_key(e.id, s * kSegmentSamples)});
        }
    }
    return idx;
}

const Waveform& ClipCache::get(const std::string& path) const {
    auto it = cache_.find(path);
    if (it != cache_.end()) return it->second;
    Waveform w = read_wav(path);
    if (w.sample_rate != frontend::kSampleRate) w = resample_linear(w, frontend::kSampleRate);
    return cache_.emplace(path, std::move(w)).first->second;
}

Waveform ClipCache::slice_segment(const Waveform& clip, int64_t start, int64_t len) {
    Waveform seg;
    seg.sample_rate = clip.sample_rate;
    seg.samples.assign(static_cast<size_t>(len), 0.0f);
    const int64_t avail = std::min<int64_t>(len, static_cast<int64_t>(clip.samples.size()) - start);
    for (int64_t i = 0; i < avail; ++i) seg.samples[i] = clip.samples[start + i];
    return seg;
}

double distill_loss(const FloatTensor& s, const FloatTensor& t) {
    if (s.shape != t.shape)
        throw shape_error("distill_loss: shapes differ " + shape_str(s.shape) + " vs " +
                          shape_str(t.shape));
    const int64_t n = s.rank() == 2 ? s.dim(0) : 1;
    double acc = 0.0;
    for (int64_t i = 0; i < s.numel(); ++i) {
        const double d = double(t.data[i]) - double(s.data[i]);
        acc += d * d;
    }
    return 0.5 * acc / n;
}

namespace {

struct HeadGrads {
    std::vector<float> weights, bias;
};

// Forward + backward through the regressor head. Returns predictions and
// fills d_emb and head gradients given dPred.
FloatTensor head_forward(const RegressorHead& h, const FloatTensor& emb) {
    return dense(emb, h.weights, h.binary, &h.bias);
}

void head_backward(const RegressorHead& h, const FloatTensor& emb, const FloatTensor& dpred,
                   FloatTensor* d_emb, HeadGrads& hg) {
    if (!h.binary) {
        dense_backward(emb, h.weights, dpred, d_emb, hg.weights.data(), hg.bias.data());
        return;
    }
    // Binary head: y = sign(emb) x sign(W) + b; straight-through on both.
    const FloatTensor se = sign_forward(emb);
    const FloatTensor sw = sign_forward(h.weights);
    FloatTensor d_se;
    std::vector<float> dws(hg.weights.size(), 0.0f);
    dense_backward(se, sw, dpred, &d_se, dws.data(), hg.bias.data());
    for (size_t k = 0; k < dws.size(); ++k)
        if (std::fabs(h.weights.data[k]) <= 1.0f) hg.weights[k] += dws[k];
    if (d_emb) *d_emb = sign_backward(d_se, emb);
}

}  // namespace

DistillResult train_distill(LayerGraph& g, RegressorHead& head, const TeacherOracle& teacher,
                            const SegmentIndex& idx, const DistillConfig& cfg) {
    if (teacher.dim() != head.out_dim())
        throw distill_error("teacher dim " + std::to_string(teacher.dim()) +
                            " does not match head output " + std::to_string(head.out_dim()));
    if (g.embedding_dim() != head.in_dim())
        throw distill_error("student embedding dim does not match head input");
    if (idx.segments.empty()) throw distill_error("segment index is empty");
    if (cfg.batch_size < 1 || cfg.steps < 0) throw distill_error("invalid distill config");

    const int64_t n_seg = static_cast<int64_t>(idx.segments.size());
    const int64_t out_dim = head.out_dim();

    // Segments are few at desk scale: cache per-segment features and targets.
    ClipCache clips;
    std::vector<FloatTensor> features(n_seg);
    std::vector<std::vector<float>> targets(n_seg);
    std::vector<bool> cached(n_seg, false);
    auto segment_features = [&](int64_t si) -> void {
        if (cached[si]) return;
        const Segment& seg = idx.segments[si];
        const Waveform wav =
            ClipCache::slice_segment(clips.get(idx.clips[seg.clip].path), seg.start);
        features[si] = model_input(wav);  // teacher sees the full second, the student 980 ms
        targets[si] = teacher.embed(wav, seg.key);
        if (static_cast<int64_t>(targets[si].size()) != out_dim)
            throw distill_error("teacher returned wrong dimension");
        cached[si] = true;
    };

    // Optimizer state per trainable tensor, plus the head.
    auto params = trainable_params(g);
    std::vector<AdamState> opt;
    opt.reserve(params.size());
    for (const auto& p : params) opt.emplace_back(p.data.size());
    AdamState opt_head_w(head.weights.data.size()), opt_head_b(head.bias.size());

    GraphGrads grads = GraphGrads::zeros_like(g);
    HeadGrads hg{std::vector<float>(head.weights.data.size(), 0.0f),
                 std::vector<float>(head.bias.size(), 0.0f)};

    Rng shuffle_rng(cfg.seed);
    std::vector<int64_t> order(n_seg);
    for (int64_t i = 0; i < n_seg; ++i) order[i] = i;
    int64_t cursor = n_seg;  // trigger shuffle on first use

    DistillResult result;
    result.loss_trace.reserve(static_cast<size_t>(cfg.steps));

    const int64_t in_h = g.input_shape[0], in_w = g.input_shape[1];
    for (int64_t step = 0; step < cfg.steps; ++step) {
        if (cursor >= n_seg) {
            shuffle_rng.shuffle(order);
            cursor = 0;
        }
        const int64_t take = std::min<int64_t>(cfg.batch_size, n_seg - cursor);
        std::vector<int64_t> batch(order.begin() + cursor, order.begin() + cursor + take);
        cursor += take;

        FloatTensor x({take, in_h, in_w, 1});
        FloatTensor t({take, out_dim});
        for (int64_t b = 0; b < take; ++b) {
            segment_features(batch[b]);
            std::memcpy(x.ptr() + b * in_h * in_w, features[batch[b]].ptr(),
                        sizeof(float) * in_h * in_w);
            std::memcpy(t.ptr() + b * out_dim, targets[batch[b]].data(), sizeof(float) * out_dim);
        }

        GradTape tape;
        const FloatTensor emb = graph_forward(g, x, BnMode::train, &tape);
        const FloatTensor pred = head_forward(head, emb);
        const double loss = distill_loss(pred, t);
        result.loss_trace.emplace_back(step, loss);
        if (!std::isfinite(loss)) {
            if (!cfg.diagnostic_checkpoint.empty()) {
                g.repack_all();
                save_model(g, cfg.diagnostic_checkpoint);
            }
            throw numeric_error("non-finite loss at step " + std::to_string(step) +
                                (cfg.diagnostic_checkpoint.empty()
                                     ? ""
                                     : "; checkpoint written to " + cfg.diagnostic_checkpoint));
        }
        if (cfg.log_every > 0 && step % cfg.log_every == 0)
            std::cerr << "distill step " << step << " loss " << loss << "\n";

        // dLoss/dPred = (pred - t) / batch
        FloatTensor dpred({take, out_dim});
        for (int64_t i = 0; i < dpred.numel(); ++i)
            dpred.data[i] = (pred.data[i] - t.data[i]) / static_cast<float>(take);

        grads.zero();
        std::fill(hg.weights.begin(), hg.weights.end(), 0.0f);
        std::fill(hg.bias.begin(), hg.bias.end(), 0.0f);
        FloatTensor demb;
        head_backward(head, emb, dpred, &demb, hg);
        graph_backward(g, tape, demb, BnMode::train, grads);

        for (size_t pi = 0; pi < params.size(); ++pi) {
            const auto& p = params[pi];
            const auto& lg = grads.layers[p.layer];
            const float* gptr = nullptr;
            switch (p.kind) {
                case ParamView::Kind::conv_weights: gptr = lg.weights.data(); break;
                case ParamView::Kind::conv_bias: gptr = lg.bias.data(); break;
                case ParamView::Kind::bn_gamma: gptr = lg.gamma.data(); break;
                case ParamView::Kind::bn_beta: gptr = lg.beta.data(); break;
            }
            adam_step(p.data, std::span<const float>(gptr, p.data.size()), opt[pi],
                      cfg.learning_rate);
            // Keep binary latents in the straight-through window.
            if (p.kind == ParamView::Kind::conv_weights &&
                g.layers[p.layer].kind == LayerKind::binary_conv) {
                for (float& w : p.data) w = std::clamp(w, -1.0f, 1.0f);
            }
        }
        adam_step(std::span<float>(head.weights.data), std::span<const float>(hg.weights),
                  opt_head_w, cfg.learning_rate);
        adam_step(std::span<float>(head.bias), std::span<const float>(hg.bias), opt_head_b,
                  cfg.learning_rate);
        ++result.steps_run;
    }
    g.repack_all();
    return result;
}

void export_student(LayerGraph& g, const std::string& path) {
    g.repack_all();
    save_model(g, path);
}

void write_loss_csv(const std::string& path, const DistillResult& r) {
    std::ofstream out(path);
    if (!out) throw distill_error("cannot write loss csv: " + path);
    out << "step,loss\n";
    for (const auto& [step, loss] : r.loss_trace) out << step << "," << loss << "\n";
}

}  // namespace binembed
