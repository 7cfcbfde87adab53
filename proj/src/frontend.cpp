#include "binembed/frontend.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace binembed {

namespace {

using std::numbers::pi;

// Iterative radix-2 FFT at the fixed 512-point transform size.
// Twiddles and the bit-reversal permutation are computed once.
struct Fft512 {
    static constexpr int N = frontend::kFftSize;
    std::array<int, N> rev{};
    std::array<double, N> cos_tab{}, sin_tab{};

    Fft512() {
        int bits = 0;
        while ((1 << bits) < N) ++bits;
        for (int i = 0; i < N; ++i) {
            int r = 0;
            for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1) << (bits - 1 - b);
            rev[i] = r;
        }
        for (int i = 0; i < N; ++i) {
            cos_tab[i] = std::cos(-2.0 * pi * i / N);
            sin_tab[i] = std::sin(-2.0 * pi * i / N);
        }
    }

    void forward(double* re, double* im) const {
        for (int i = 0; i < N; ++i) {
            const int j = rev[i];
            if (j > i) {
                std::swap(re[i], re[j]);
                std::swap(im[i], im[j]);
            }
        }
        for (int len = 2; len <= N; len <<= 1) {
            const int step = N / len;
            for (int start = 0; start < N; start += len) {
                for (int k = 0; k < len / 2; ++k) {
                    const double wr = cos_tab[k * step];
                    const double wi = sin_tab[k * step];
                    const int a = start + k;
                    const int b = a + len / 2;
                    const double tr = re[b] * wr - im[b] * wi;
                    const double ti = re[b] * wi + im[b] * wr;
                    re[b] = re[a] - tr;
                    im[b] = im[a] - ti;
                    re[a] += tr;
                    im[a] += ti;
                }
            }
        }
    }
};

const Fft512& fft512() {
    static const Fft512 f;
    return f;
}

// Periodic Hann window of length kWindow.
const std::array<double, frontend::kWindow>& hann_window() {
    static const auto w = [] {
        std::array<double, frontend::kWindow> a{};
        for (int n = 0; n < frontend::kWindow; ++n)
            a[n] = 0.5 - 0.5 * std::cos(2.0 * pi * n / frontend::kWindow);
        return a;
    }();
    return w;
}

// Mirror (edge not repeated) index for reflect padding.
int64_t reflect_index(int64_t p, int64_t len) {
    if (len == 1) return 0;
    const int64_t period = 2 * (len - 1);
    int64_t m = p % period;
    if (m < 0) m += period;
    return m < len ? m : period - m;
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

FloatTensor stft_magnitude(const Waveform& w) {
    using namespace frontend;
    if (w.sample_rate != kSampleRate)
        throw audio_error("unsupported sample rate " + std::to_string(w.sample_rate) +
                          " Hz (expected 16000; resample first)");
    const int64_t len = static_cast<int64_t>(w.samples.size());
    if (len < 1) throw audio_error("empty waveform");

    const int64_t pad = kWindow / 2;
    const int64_t frames = (len + kHop - 1) / kHop;  // ceil(len/hop)
    FloatTensor out({frames, kFftBins});

    const auto& window = hann_window();
    const auto& fft = fft512();
    std::array<double, kFftSize> re{}, im{};

    for (int64_t t = 0; t < frames; ++t) {
        const int64_t start = t * kHop - pad;
        for (int n = 0; n < kWindow; ++n)
            re[n] = static_cast<double>(w.samples[reflect_index(start + n, len)]) * window[n];
        for (int n = kWindow; n < kFftSize; ++n) re[n] = 0.0;
        im.fill(0.0);
        fft.forward(re.data(), im.data());
        float* row = out.ptr() + t * kFftBins;
        for (int k = 0; k < kFftBins; ++k)
            row[k] = static_cast<float>(std::sqrt(re[k] * re[k] + im[k] * im[k]));
    }
    return out;
}

FloatTensor mel_filterbank(int sample_rate, int n_fft, int n_mels, double f_lo, double f_hi) {
    if (!(f_lo >= 0.0 && f_lo < f_hi && f_hi <= sample_rate / 2.0))
        throw std::invalid_argument("mel_filterbank: invalid frequency range [" +
                                    std::to_string(f_lo) + ", " + std::to_string(f_hi) + "]");
    const int n_bins = n_fft / 2 + 1;
    FloatTensor fb({n_bins, n_mels});

    std::vector<double> hz_pts(n_mels + 2);
    const double mel_lo = hz_to_mel(f_lo), mel_hi = hz_to_mel(f_hi);
    for (int i = 0; i < n_mels + 2; ++i)
        hz_pts[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));

    for (int k = 0; k < n_bins; ++k) {
        const double f = static_cast<double>(k) * sample_rate / n_fft;
        for (int m = 0; m < n_mels; ++m) {
            const double left = hz_pts[m], center = hz_pts[m + 1], right = hz_pts[m + 2];
            double v = 0.0;
            if (f > left && f < right)
                v = f <= center ? (f - left) / (center - left) : (right - f) / (right - center);
            fb.ptr()[k * n_mels + m] = static_cast<float>(std::max(v, 0.0));
        }
    }
    return fb;
}

LogMelSpectrogram log_mel(const Waveform& w) {
    using namespace frontend;
    static const FloatTensor fb = mel_filterbank(kSampleRate, kFftSize, kMelBins, kMelLoHz, kMelHiHz);

    const FloatTensor mag = stft_magnitude(w);
    const int64_t frames = mag.dim(0);

    LogMelSpectrogram out;
    out.frames = frames;
    out.bins = kMelBins;
    out.data.assign(static_cast<size_t>(frames * kMelBins), 0.0f);
    for (int64_t t = 0; t < frames; ++t) {
        const float* mrow = mag.ptr() + t * kFftBins;
        float* orow = out.data.data() + t * kMelBins;
        for (int m = 0; m < kMelBins; ++m) {
            double acc = 0.0;
            for (int k = 0; k < kFftBins; ++k) acc += double(mrow[k]) * double(fb.ptr()[k * kMelBins + m]);
            orow[m] = std::log(std::max(static_cast<float>(acc), kLogFloor));
        }
    }
    return out;
}

FloatTensor model_input(const Waveform& segment) {
    using namespace frontend;
    Waveform head;
    head.sample_rate = kSampleRate;
    head.samples.assign(kModelSamples, 0.0f);
    const size_t n = std::min<size_t>(segment.samples.size(), kModelSamples);
    std::copy_n(segment.samples.begin(), n, head.samples.begin());
    const LogMelSpectrogram mel = log_mel(head);
    return FloatTensor({mel.frames, mel.bins, 1}, mel.data);
}

Waveform resample_linear(const Waveform& w, int target_rate) {
    if (target_rate <= 0) throw audio_error("resample_linear: target rate must be positive");
    if (target_rate == w.sample_rate) return w;

    const int64_t src_len = static_cast<int64_t>(w.samples.size());
    const int64_t out_len =
        static_cast<int64_t>(std::llround(static_cast<double>(src_len) * target_rate / w.sample_rate));
    Waveform out;
    out.sample_rate = target_rate;
    out.samples.resize(out_len);
    if (src_len == 0) return out;

    const double step = static_cast<double>(w.sample_rate) / target_rate;
    for (int64_t i = 0; i < out_len; ++i) {
        const double pos = i * step;
        int64_t i0 = static_cast<int64_t>(pos);
        if (i0 >= src_len - 1) {
            out.samples[i] = w.samples[src_len - 1];
            continue;
        }
        const double frac = pos - i0;
        out.samples[i] =
            static_cast<float>((1.0 - frac) * w.samples[i0] + frac * w.samples[i0 + 1]);
    }
    return out;
}

}  // namespace binembed
