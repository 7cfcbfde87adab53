#pragma once

#include <string>

#include "binembed/manifest.hpp"
#include "binembed/wav.hpp"

namespace binembed {

// Seeded synthetic audio for desk-scale runs: pure/harmonic tones, shaped
// noise, and linear chirps are linearly separable for a frozen encoder
// plus probe.

/// 3-class labeled task (tone / noise / chirp), stratified 70/30
/// train/test split. Writes WAVs plus manifest.jsonl into dir and
/// returns the manifest path.
std::string make_probe_task(const std::string& dir, int clips = 150, uint64_t seed = 7);

/// Unlabeled mixed-content corpus for desk distillation.
std::string make_distill_corpus(const std::string& dir, int clips = 120, uint64_t seed = 7);

/// One synthetic clip without touching disk (test helper).
Waveform synth_clip(const std::string& kind, double seconds, uint64_t seed);

}  // namespace binembed
