#pragma once

#include "binembed/tensor.hpp"
#include "binembed/wav.hpp"

namespace binembed {

// Frontend contract: 16 kHz input, 25 ms Hann window, 10 ms hop, 512-point
// transform, 64 HTK-mel bins spanning 60..7800 Hz, natural log floored at
// 1e-6. 980 ms of audio maps to exactly 98 frames.
namespace frontend {
constexpr int kSampleRate = 16000;
constexpr int kWindow = 400;
constexpr int kHop = 160;
constexpr int kFftSize = 512;
constexpr int kFftBins = kFftSize / 2 + 1;  // 257
constexpr int kMelBins = 64;
constexpr double kMelLoHz = 60.0;
constexpr double kMelHiHz = 7800.0;
constexpr float kLogFloor = 1e-6f;
constexpr int kModelFrames = 98;                          // 980 ms
constexpr int kModelSamples = kModelFrames * kHop;        // 15680
}  // namespace frontend

struct LogMelSpectrogram {
    int64_t frames = 0;
    int64_t bins = frontend::kMelBins;
    std::vector<float> data;  // frames x bins, row-major

    const float* frame(int64_t t) const { return data.data() + t * bins; }
    FloatTensor as_tensor() const { return FloatTensor({frames, bins}, data); }
};

/// HTK mel scale: 2595 * log10(1 + f/700).
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Hann-windowed magnitude STFT with reflect center padding (window/2 per
/// side). Frame count is ceil(len/hop). Requires sample_rate == 16000.
FloatTensor stft_magnitude(const Waveform& w);

/// Triangular filters, centers uniformly spaced in HTK mel between f_lo and
/// f_hi; returns (n_fft/2+1) x n_mels.
FloatTensor mel_filterbank(int sample_rate, int n_fft, int n_mels, double f_lo, double f_hi);

/// log(max(stft_magnitude * filterbank, 1e-6)), frames x 64.
LogMelSpectrogram log_mel(const Waveform& w);

/// Linear-interpolation resampler; output length = round(len * target/source).
Waveform resample_linear(const Waveform& w, int target_rate);

/// Student-model input from a (nominally one-second) segment: log-mel of
/// the first 980 ms, zero-padded if shorter, as a (98,64,1) tensor.
FloatTensor model_input(const Waveform& segment);

}  // namespace binembed
