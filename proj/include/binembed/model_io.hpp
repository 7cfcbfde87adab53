#pragma once

#include <string>

#include "binembed/graph.hpp"

namespace binembed {

struct model_io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct bad_magic_error : model_io_error {
    using model_io_error::model_io_error;
};
struct bad_version_error : model_io_error {
    using model_io_error::model_io_error;
};
struct crc_error : model_io_error {
    using model_io_error::model_io_error;
};
struct truncated_file_error : model_io_error {
    using model_io_error::model_io_error;
};

/// Model container: magic "BRIL", version 1, little-endian layer table with
/// blob offsets, then one CRC32-checked blob per parameter tensor. Binary
/// convolution weights are stored as their packed words (1 bit/weight plus
/// row padding); everything else as float32. save(load(f)) is byte-identical.
void save_model(const LayerGraph& g, const std::string& path);
LayerGraph load_model(const std::string& path);

struct SizeReport {
    int64_t param_count_total = 0;
    int64_t param_count_binary = 0;
    int64_t param_count_float = 0;
    double float_size_mb = 0.0;          // 4*total / 2^20
    double quantized_size_mb = 0.0;      // (binary/8 + 4*float + header) / 2^20
    double quantized_weights_mb = 0.0;   // header excluded (paper-comparison band)
    int64_t header_bytes = 0;            // table + blob descriptors + row padding
};

SizeReport size_report(const LayerGraph& g);

}  // namespace binembed
