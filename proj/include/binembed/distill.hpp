#pragma once

#include <functional>
#include <memory>
#include <unordered_map>

#include "binembed/frontend.hpp"
#include "binembed/graph.hpp"
#include "binembed/manifest.hpp"

namespace binembed {

struct distill_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct numeric_error : distill_error {
    using distill_error::distill_error;
};

/// Maps a one-second waveform segment to a fixed-dimension embedding.
/// Implementations must be deterministic per segment.
class TeacherOracle {
  public:
    virtual ~TeacherOracle() = default;
    virtual int dim() const = 0;
    virtual std::vector<float> embed(const Waveform& segment, uint64_t key) const = 0;
};

// ---- embedding file (FileTeacher backing store) --------------------------
// Binary, little-endian: magic "BREM", u32 version=1, u32 dim, u64 count,
// then count records of (u64 segment-key hash, dim float32).

struct EmbeddingRecord {
    uint64_t key;
    std::vector<float> values;
};
void write_embedding_file(const std::string& path, int dim,
                          const std::vector<EmbeddingRecord>& records);
std::unordered_map<uint64_t, std::vector<float>> read_embedding_file(const std::string& path,
                                                                     int* dim_out);

/// Precomputed embeddings keyed by segment hash.
class FileTeacher : public TeacherOracle {
  public:
    explicit FileTeacher(const std::string& path);
    int dim() const override { return dim_; }
    std::vector<float> embed(const Waveform& segment, uint64_t key) const override;

  private:
    std::unordered_map<uint64_t, std::vector<float>> table_;
    int dim_ = 0;
};

/// Frozen seeded projection of time-averaged log-mel features.
class SyntheticTeacher : public TeacherOracle {
  public:
    explicit SyntheticTeacher(uint64_t seed, int dim = 1024);
    int dim() const override { return dim_; }
    std::vector<float> embed(const Waveform& segment, uint64_t key) const override;

  private:
    int dim_;
    std::vector<float> proj_;  // dim x kMelBins
    std::vector<float> offset_;
};

/// Wraps an arbitrary callable (tests, self-distillation).
class FunctionTeacher : public TeacherOracle {
  public:
    using Fn = std::function<std::vector<float>(const Waveform&)>;
    FunctionTeacher(int dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}
    int dim() const override { return dim_; }
    std::vector<float> embed(const Waveform& segment, uint64_t) const override {
        return fn_(segment);
    }

  private:
    int dim_;
    Fn fn_;
};

// ---- regressor head -------------------------------------------------------

/// Linear layer matching the teacher dimensionality; discarded after
/// distillation. Binary mode runs sign(x) x sign(W) through the xnor path.
struct RegressorHead {
    FloatTensor weights;  // {out_dim, in_dim}
    std::vector<float> bias;
    bool binary = false;

    static RegressorHead make(int in_dim, int out_dim, bool binary, uint64_t seed);
    int64_t in_dim() const { return weights.dim(1); }
    int64_t out_dim() const { return weights.dim(0); }
};

// ---- segmenting -----------------------------------------------------------

constexpr int64_t kSegmentSamples = 16000;  // one second at 16 kHz

struct Segment {
    int clip = 0;          // index into SegmentIndex::clips
    int64_t start = 0;     // sample offset at 16 kHz
    uint64_t key = 0;      // fnv1a64("<clip id>#<start>")
};

struct SegmentIndex {
    std::vector<ManifestEntry> clips;
    std::vector<Segment> segments;
    std::vector<std::string> skipped;  // unreadable clips (warned, not fatal)
};

uint64_t segment_key(const std::string& clip_id, int64_t start);

/// Non-overlapping one-second windows: floor(duration) per clip at offsets
/// 0s,1s,...; clips shorter than one second get a single zero-padded
/// segment. Clips are resampled to 16 kHz when needed.
SegmentIndex build_segment_index(const Manifest& m, const std::string& split = "train");

/// Decoded clips resampled to 16 kHz, loaded once.
class ClipCache {
  public:
    const Waveform& get(const std::string& path) const;
    static Waveform slice_segment(const Waveform& clip, int64_t start,
                                  int64_t len = kSegmentSamples);

  private:
    mutable std::unordered_map<std::string, Waveform> cache_;
};

// ---- loss -----------------------------------------------------------------

/// 0.5*||t - s||^2; for (N,D) inputs the mean over N of per-example losses.
double distill_loss(const FloatTensor& s, const FloatTensor& t);

// ---- training -------------------------------------------------------------

struct DistillConfig {
    int batch_size = 512;
    float learning_rate = 1e-3f;
    int64_t steps = 234000;
    uint64_t seed = 42;
    double segment_seconds = 1.0;
    int log_every = 100;                // stderr progress cadence
    std::string diagnostic_checkpoint;  // written if the loss goes non-finite

    static DistillConfig desk_preset() {
        DistillConfig c;
        c.batch_size = 32;
        c.steps = 2000;
        return c;
    }
};

struct DistillResult {
    std::vector<std::pair<int64_t, double>> loss_trace;  // (step, batch loss)
    int64_t steps_run = 0;
};

/// Runs cfg.steps Adam steps of 0.5*||t - head(student(x))||^2 over
/// seeded shuffled passes of the segment index. The head is trained jointly
/// and excluded from any export. Throws numeric_error on non-finite loss.
DistillResult train_distill(LayerGraph& g, RegressorHead& head, const TeacherOracle& teacher,
                            const SegmentIndex& idx, const DistillConfig& cfg);

/// Saves the head-stripped student (the head never lives in the graph).
void export_student(LayerGraph& g, const std::string& path);

void write_loss_csv(const std::string& path, const DistillResult& r);

}  // namespace binembed
