#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace binembed {

struct audio_error : std::runtime_error {
    explicit audio_error(const std::string& what) : std::runtime_error(what) {}
};

struct Waveform {
    std::vector<float> samples;  // in [-1, 1]
    int sample_rate = 0;

    double seconds() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

/// Reads PCM-16 or IEEE float-32 WAV (plain or WAVE_FORMAT_EXTENSIBLE).
/// Stereo is averaged to mono; other channel counts and encodings are
/// rejected with audio_error.
Waveform read_wav(const std::string& path);

void write_wav_pcm16(const std::string& path, const Waveform& w);
void write_wav_float32(const std::string& path, const Waveform& w);

}  // namespace binembed
