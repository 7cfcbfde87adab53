#pragma once

#include <string>
#include <vector>

namespace binembed {

/// One JSON-lines record: {"path": ..., "label": optional, "split": "train"|"test"}.
struct ManifestEntry {
    std::string path;   // resolved against the manifest's directory
    std::string id;     // path exactly as written; stable key across moves
    std::string label;  // empty when unlabeled
    std::string split;  // "train" or "test"
};

struct Manifest {
    std::vector<ManifestEntry> entries;

    std::vector<ManifestEntry> split(const std::string& which) const;
    std::vector<std::string> class_labels(const std::string& split) const;  // sorted unique
};

Manifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const Manifest& m);

}  // namespace binembed
