#pragma once

#include "binembed/graph.hpp"

namespace binembed {

// Student models consume 98x64x1 log-mel inputs. Internals follow the
// cited binary DenseNet / MeliusNet designs except where the published
// parameter-count and quantized-size figures force a different
// binary/real split (first transition real, later transitions binary,
// two-conv real stem for the DenseNet variant).

/// Binary DenseNet-28: four dense blocks of [6,6,6,5] binary 3x3 layers,
/// growth 64, transitions reducing by ~2.7/2.7/2.2 to multiples of 32;
/// 576-d embedding via global max pooling. ~4.6M parameters.
LayerGraph build_densenet28();

/// MeliusNet-22: four sections of [4,5,4,4] dense+improvement pairs,
/// transitions to 160/224/256 channels; 512-d embedding. ~6.5M parameters.
LayerGraph build_meliusnet22();

/// Truncates DenseNet-28 at the named layer and appends global max
/// pooling. The default tap "batch-normalization-12" yields the ~1.5M
/// parameter intermediate model.
LayerGraph build_tiny(const std::string& tap = "batch-normalization-12");

/// Same truncation applied to an arbitrary base graph (layer sweep).
LayerGraph truncate_at_tap(const LayerGraph& base, const std::string& tap);

LayerGraph build_by_name(const std::string& arch);

}  // namespace binembed
