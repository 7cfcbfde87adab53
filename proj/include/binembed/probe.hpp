#pragma once

#include "binembed/distill.hpp"
#include "binembed/graph.hpp"
#include "binembed/manifest.hpp"

namespace binembed {

struct probe_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ProbeConfig {
    int batch_size = 0;  // 0 = auto: 64, or 32 below 10k training clips
    float learning_rate = 1e-3f;
    int epochs = 100;
    uint64_t seed = 42;

    int resolve_batch(size_t train_clips) const {
        if (batch_size > 0) return batch_size;
        return train_clips < 10000 ? 32 : 64;
    }
};

struct LinearProbe {
    FloatTensor weights;  // {classes, embed_dim}
    std::vector<float> bias;
    std::vector<std::string> classes;  // sorted label set
};

/// Trains a softmax linear classifier on frozen-encoder embeddings of one
/// fresh random one-second segment per clip per epoch. The encoder is
/// bit-identical before and after.
LinearProbe train_probe(LayerGraph& encoder, const Manifest& m, const ProbeConfig& cfg);

struct ClipPrediction {
    std::string clip_path;
    std::string true_label;
    std::string predicted_label;
    std::vector<float> scores;  // averaged per-class logits
};

/// Splits the clip into non-overlapping one-second segments (last one
/// zero-padded), averages per-segment logits, argmax with first-index
/// tie-break.
ClipPrediction evaluate_clip(LayerGraph& encoder, const LinearProbe& p, const Waveform& clip);

struct ProbeEvaluation {
    double accuracy = 0.0;
    std::vector<ClipPrediction> predictions;
};

/// Full-clip evaluation over the labeled test split.
ProbeEvaluation evaluate_probe(LayerGraph& encoder, const LinearProbe& p, const Manifest& m);

/// Mean per-clip correctness on the test split.
double accuracy(LayerGraph& encoder, const LinearProbe& p, const Manifest& m);

/// clip_path,true_label,predicted_label,<one score column per class>
void write_prediction_csv(const std::string& path, const ProbeEvaluation& ev,
                          const std::vector<std::string>& classes);

}  // namespace binembed
