#include "binembed/manifest.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace binembed {

std::vector<ManifestEntry> Manifest::split(const std::string& which) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
        if (e.split == which) out.push_back(e);
    return out;
}

std::vector<std::string> Manifest::class_labels(const std::string& split) const {
    std::set<std::string> labels;
    for (const auto& e : entries)
        if ((split.empty() || e.split == split) && !e.label.empty()) labels.insert(e.label);
    return {labels.begin(), labels.end()};
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);
    const auto base = std::filesystem::path(path).parent_path();

    Manifest m;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        ManifestEntry e;
        if (!j.contains("path") || !j["path"].is_string())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": missing \"path\"");
        e.path = j["path"].get<std::string>();
        e.id = e.path;
        if (!std::filesystem::path(e.path).is_absolute()) e.path = (base / e.path).string();
        if (j.contains("label") && !j["label"].is_null()) e.label = j["label"].get<std::string>();
        e.split = j.value("split", "train");
        if (e.split != "train" && e.split != "test")
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": split must be train|test");
        m.entries.push_back(std::move(e));
    }
    return m;
}

void save_manifest(const std::string& path, const Manifest& m) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    const auto base = std::filesystem::path(path).parent_path();
    for (const auto& e : m.entries) {
        nlohmann::json j;
        j["path"] = e.id.empty() ? std::filesystem::proximate(e.path, base).string() : e.id;
        if (!e.label.empty()) j["label"] = e.label;
        j["split"] = e.split;
        out << j.dump() << "\n";
    }
}

}  // namespace binembed
