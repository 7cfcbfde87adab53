#include "binembed/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "binembed/parallel.hpp"
#include "binembed/rng.hpp"

namespace binembed {

namespace {

int label_index(const std::vector<std::string>& classes, const std::string& label) {
    const auto it = std::lower_bound(classes.begin(), classes.end(), label);
    if (it == classes.end() || *it != label) return -1;
    return static_cast<int>(it - classes.begin());
}

// Embeddings for one segment per clip at the given offsets, parallel
// across clips (forward is pure given frozen weights).
FloatTensor batch_embeddings(LayerGraph& encoder, const std::vector<const Waveform*>& clips,
                             const std::vector<int64_t>& offsets) {
    const int64_t n = static_cast<int64_t>(clips.size());
    const int64_t dim = encoder.embedding_dim();
    FloatTensor out({n, dim});
    parallel_for(n, [&](int64_t b0, int64_t b1) {
        for (int64_t i = b0; i < b1; ++i) {
            const Waveform seg = ClipCache::slice_segment(*clips[i], offsets[i]);
            const FloatTensor emb = graph_forward(encoder, model_input(seg), BnMode::infer);
            std::copy(emb.data.begin(), emb.data.end(), out.ptr() + i * dim);
        }
    });
    return out;
}

}  // namespace

LinearProbe train_probe(LayerGraph& encoder, const Manifest& m, const ProbeConfig& cfg) {
    const auto train = m.split("train");
    if (train.empty()) throw probe_error("train split is empty");
    for (const auto& e : train)
        if (e.label.empty()) throw probe_error("unlabeled clip in train split: " + e.path);

    LinearProbe probe;
    probe.classes = m.class_labels("train");
    const int64_t n_classes = static_cast<int64_t>(probe.classes.size());
    const int64_t dim = encoder.embedding_dim();
    const int64_t n_clips = static_cast<int64_t>(train.size());
    const int batch = cfg.resolve_batch(train.size());

    probe.weights = FloatTensor({n_classes, dim});
    probe.bias.assign(n_classes, 0.0f);
    Rng init_rng(cfg.seed);
    const double std0 = std::sqrt(2.0 / (dim + n_classes));
    for (auto& w : probe.weights.data) w = static_cast<float>(init_rng.normal(0.0, std0));

    ClipCache cache;
    std::vector<const Waveform*> clips(n_clips);
    std::vector<int> labels(n_clips);
    for (int64_t i = 0; i < n_clips; ++i) {
        clips[i] = &cache.get(train[i].path);
        labels[i] = label_index(probe.classes, train[i].label);
    }

    AdamState opt_w(probe.weights.data.size()), opt_b(probe.bias.size());
    std::vector<float> dw(probe.weights.data.size()), db(probe.bias.size());
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

    std::vector<int64_t> order(n_clips);
    for (int64_t i = 0; i < n_clips; ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // One fresh random one-second segment per clip.
        std::vector<int64_t> offsets(n_clips);
        for (int64_t i = 0; i < n_clips; ++i) {
            const int64_t len = static_cast<int64_t>(clips[i]->samples.size());
            const int64_t span = std::max<int64_t>(len - kSegmentSamples, 0);
            offsets[i] = span > 0 ? static_cast<int64_t>(rng.below(span + 1)) : 0;
        }
        const FloatTensor embs = batch_embeddings(encoder, clips, offsets);
        rng.shuffle(order);

        for (int64_t start = 0; start < n_clips; start += batch) {
            const int64_t take = std::min<int64_t>(batch, n_clips - start);
            std::fill(dw.begin(), dw.end(), 0.0f);
            std::fill(db.begin(), db.end(), 0.0f);
            for (int64_t b = 0; b < take; ++b) {
                const int64_t i = order[start + b];
                const float* e = embs.ptr() + i * dim;
                // softmax cross-entropy: dz = softmax(z) - onehot(y)
                std::vector<double> z(n_classes);
                double zmax = -1e300;
                for (int64_t c = 0; c < n_classes; ++c) {
                    double acc = probe.bias[c];
                    const float* wr = probe.weights.ptr() + c * dim;
                    for (int64_t k = 0; k < dim; ++k) acc += double(wr[k]) * e[k];
                    z[c] = acc;
                    zmax = std::max(zmax, acc);
                }
                double denom = 0.0;
                for (int64_t c = 0; c < n_classes; ++c) denom += std::exp(z[c] - zmax);
                for (int64_t c = 0; c < n_classes; ++c) {
                    const double p = std::exp(z[c] - zmax) / denom;
                    const float dz = static_cast<float>((p - (labels[i] == c ? 1.0 : 0.0)) / take);
                    db[c] += dz;
                    float* dwr = dw.data() + c * dim;
                    for (int64_t k = 0; k < dim; ++k) dwr[k] += dz * e[k];
                }
            }
            adam_step(std::span<float>(probe.weights.data), std::span<const float>(dw), opt_w,
                      cfg.learning_rate);
            adam_step(std::span<float>(probe.bias), std::span<const float>(db), opt_b,
                      cfg.learning_rate);
        }
    }
    return probe;
}

ClipPrediction evaluate_clip(LayerGraph& encoder, const LinearProbe& p, const Waveform& clip) {
    if (clip.samples.empty()) throw probe_error("evaluate_clip: empty clip");
    Waveform c16 = clip;
    if (c16.sample_rate != frontend::kSampleRate) c16 = resample_linear(clip, frontend::kSampleRate);

    const int64_t len = static_cast<int64_t>(c16.samples.size());
    const int64_t n_seg = std::max<int64_t>((len + kSegmentSamples - 1) / kSegmentSamples, 1);
    const int64_t n_classes = p.weights.dim(0);
    const int64_t dim = p.weights.dim(1);

    std::vector<double> sum(n_classes, 0.0);
    for (int64_t s = 0; s < n_seg; ++s) {
        const Waveform seg = ClipCache::slice_segment(c16, s * kSegmentSamples);
        const FloatTensor emb = graph_forward(encoder, model_input(seg), BnMode::infer);
        for (int64_t c = 0; c < n_classes; ++c) {
            double acc = p.bias[c];
            const float* wr = p.weights.ptr() + c * dim;
            for (int64_t k = 0; k < dim; ++k) acc += double(wr[k]) * emb.data[k];
            sum[c] += acc;
        }
    }
    ClipPrediction out;
    out.scores.resize(n_classes);
    int64_t best = 0;
    for (int64_t c = 0; c < n_classes; ++c) {
        out.scores[c] = static_cast<float>(sum[c] / n_seg);
        if (out.scores[c] > out.scores[best]) best = c;  // first index wins ties
    }
    out.predicted_label = p.classes.empty() ? std::to_string(best) : p.classes[best];
    return out;
}

ProbeEvaluation evaluate_probe(LayerGraph& encoder, const LinearProbe& p, const Manifest& m) {
    const auto test = m.split("test");
    if (test.empty()) throw probe_error("test split is empty");
    for (const auto& e : test)
        if (e.label.empty()) throw probe_error("unlabeled clip in test split: " + e.path);

    ProbeEvaluation ev;
    ev.predictions.resize(test.size());
    parallel_for(static_cast<int64_t>(test.size()), [&](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            const Waveform clip = read_wav(test[i].path);
            ClipPrediction pred = evaluate_clip(encoder, p, clip);
            pred.clip_path = test[i].path;
            pred.true_label = test[i].label;
            ev.predictions[i] = std::move(pred);
        }
    });
    int64_t correct = 0;
    for (const auto& pr : ev.predictions)
        if (pr.predicted_label == pr.true_label) ++correct;
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(ev.predictions.size());
    return ev;
}

double accuracy(LayerGraph& encoder, const LinearProbe& p, const Manifest& m) {
    return evaluate_probe(encoder, p, m).accuracy;
}

void write_prediction_csv(const std::string& path, const ProbeEvaluation& ev,
                          const std::vector<std::string>& classes) {
    std::ofstream out(path);
    if (!out) throw probe_error("cannot write prediction csv: " + path);
    out << "clip_path,true_label,predicted_label";
    for (const auto& c : classes) out << ",score_" << c;
    out << "\n";
    for (const auto& p : ev.predictions) {
        out << p.clip_path << "," << p.true_label << "," << p.predicted_label;
        for (float s : p.scores) out << "," << s;
        out << "\n";
    }
}

}  // namespace binembed
