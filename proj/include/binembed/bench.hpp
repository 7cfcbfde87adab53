#pragma once

#include "binembed/graph.hpp"
#include "binembed/manifest.hpp"
#include "binembed/probe.hpp"

namespace binembed {

struct LatencyResult {
    double mean_ms = 0.0, std_ms = 0.0, min_ms = 0.0, max_ms = 0.0;
    int runs = 0;
    int warmup_runs = 0;
    int threads_during_timed = 0;
    std::string host;
    std::vector<double> samples_ms;  // per-run dump; statistics recompute from it
};

/// Strictly single-threaded timed forwards of one fixed seeded 98x64 input
/// (monotonic clock, `warmup` untimed runs first).
LatencyResult latency_bench(LayerGraph& g, int runs = 150, int warmup = 10, uint64_t seed = 42);

struct SweepRow {
    std::string layer_name;
    int64_t embedding_dim = 0;
    double accuracy = 0.0;
    double latency_ms = 0.0;
    int64_t param_count = 0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<std::string> errors;  // per-tap failures; sweep continues
};

/// Eligible taps: every batch-norm layer, every transition pointwise conv,
/// and the final layer. Each tap gets a truncated model, a freshly trained
/// probe on the manifest, and a latency measurement.
SweepResult layer_sweep(const LayerGraph& g, const Manifest& m, const ProbeConfig& cfg,
                        int bench_runs = 150, int bench_warmup = 10);

std::vector<std::string> eligible_taps(const LayerGraph& g);

void write_sweep_csv(const std::string& path, const SweepResult& r);
void write_sweep_svg(const std::string& path, const SweepResult& r);

}  // namespace binembed
