#include "binembed/synthdata.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>

#include "binembed/rng.hpp"

namespace binembed {

namespace {

using std::numbers::pi;
constexpr int kRate = 16000;

Waveform make_tone(double seconds, Rng& rng) {
    Waveform w;
    w.sample_rate = kRate;
    w.samples.resize(static_cast<size_t>(seconds * kRate));
    const double f0 = rng.uniform(200.0, 1800.0);
    const int harmonics = 1 + static_cast<int>(rng.below(3));
    const double am_rate = rng.uniform(1.0, 4.0);
    const double am_depth = rng.uniform(0.0, 0.3);
    std::vector<double> amp(harmonics);
    for (int h = 0; h < harmonics; ++h) amp[h] = rng.uniform(0.2, 0.5) / (h + 1);
    for (size_t i = 0; i < w.samples.size(); ++i) {
        const double t = static_cast<double>(i) / kRate;
        double v = 0.0;
        for (int h = 0; h < harmonics; ++h) v += amp[h] * std::sin(2.0 * pi * f0 * (h + 1) * t);
        v *= 1.0 - am_depth * (0.5 + 0.5 * std::sin(2.0 * pi * am_rate * t));
        w.samples[i] = static_cast<float>(v);
    }
    return w;
}

Waveform make_noise(double seconds, Rng& rng) {
    Waveform w;
    w.sample_rate = kRate;
    w.samples.resize(static_cast<size_t>(seconds * kRate));
    // One-pole lowpass with a random tilt so clips differ spectrally.
    const double a = rng.uniform(0.0, 0.9);
    const double gain = rng.uniform(0.1, 0.3);
    double prev = 0.0;
    for (auto& s : w.samples) {
        const double white = rng.uniform(-1.0, 1.0);
        prev = a * prev + (1.0 - a) * white;
        s = static_cast<float>(gain * prev / (1.0 - a * 0.5));
    }
    return w;
}

Waveform make_chirp(double seconds, Rng& rng) {
    Waveform w;
    w.sample_rate = kRate;
    w.samples.resize(static_cast<size_t>(seconds * kRate));
    const double f0 = rng.uniform(100.0, 500.0);
    const double f1 = rng.uniform(2000.0, 6000.0);
    const double amp = rng.uniform(0.3, 0.6);
    const double k = (f1 - f0) / seconds;
    for (size_t i = 0; i < w.samples.size(); ++i) {
        const double t = static_cast<double>(i) / kRate;
        w.samples[i] = static_cast<float>(amp * std::sin(2.0 * pi * (f0 * t + 0.5 * k * t * t)));
    }
    return w;
}

}  // namespace

Waveform synth_clip(const std::string& kind, double seconds, uint64_t seed) {
    Rng rng(seed);
    if (kind == "tone") return make_tone(seconds, rng);
    if (kind == "noise") return make_noise(seconds, rng);
    if (kind == "chirp") return make_chirp(seconds, rng);
    throw std::invalid_argument("synth_clip: unknown kind '" + kind + "'");
}

std::string make_probe_task(const std::string& dir, int clips, uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const char* kinds[3] = {"tone", "noise", "chirp"};
    const int per_class = clips / 3;

    Manifest m;
    Rng rng(seed);
    for (int k = 0; k < 3; ++k) {
        for (int i = 0; i < per_class; ++i) {
            const double seconds = rng.uniform(1.5, 3.5);
            const uint64_t clip_seed = rng.next_u64();
            const Waveform w = synth_clip(kinds[k], seconds, clip_seed);
            const std::string name =
                std::string(kinds[k]) + "_" + std::to_string(i) + ".wav";
            write_wav_pcm16((fs::path(dir) / name).string(), w);
            ManifestEntry e;
            e.path = (fs::path(dir) / name).string();
            e.id = name;
            e.label = kinds[k];
            e.split = i < (per_class * 7) / 10 ? "train" : "test";
            m.entries.push_back(std::move(e));
        }
    }
    const std::string manifest_path = (fs::path(dir) / "manifest.jsonl").string();
    save_manifest(manifest_path, m);
    return manifest_path;
}

std::string make_distill_corpus(const std::string& dir, int clips, uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const char* kinds[3] = {"tone", "noise", "chirp"};

    Manifest m;
    Rng rng(seed ^ 0xd15711ULL);
    for (int i = 0; i < clips; ++i) {
        const double seconds = rng.uniform(2.0, 3.0);
        const std::string kind = kinds[rng.below(3)];
        const uint64_t clip_seed = rng.next_u64();
        const Waveform w = synth_clip(kind, seconds, clip_seed);
        const std::string name = "clip_" + std::to_string(i) + ".wav";
        write_wav_pcm16((fs::path(dir) / name).string(), w);
        ManifestEntry e;
        e.path = (fs::path(dir) / name).string();
        e.id = name;
        e.split = "train";
        m.entries.push_back(std::move(e));
    }
    const std::string manifest_path = (fs::path(dir) / "manifest.jsonl").string();
    save_manifest(manifest_path, m);
    return manifest_path;
}

}  // namespace binembed
