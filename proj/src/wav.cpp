#include "binembed/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace binembed {

namespace {

constexpr uint16_t kFormatPcm = 0x0001;
constexpr uint16_t kFormatFloat = 0x0003;
constexpr uint16_t kFormatExtensible = 0xFFFE;

uint32_t rd_u32(const unsigned char* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}
uint16_t rd_u16(const unsigned char* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }

void wr_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<char*>(b), 4);
}
void wr_u16(std::ostream& os, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<char*>(b), 2);
}

void write_header(std::ostream& os, uint16_t format, uint16_t bits, int sample_rate,
                  uint32_t data_bytes) {
    const uint16_t channels = 1;
    const uint32_t byte_rate = uint32_t(sample_rate) * channels * bits / 8;
    os.write("RIFF", 4);
    wr_u32(os, 36 + data_bytes);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    wr_u32(os, 16);
    wr_u16(os, format);
    wr_u16(os, channels);
    wr_u32(os, uint32_t(sample_rate));
    wr_u32(os, byte_rate);
    wr_u16(os, uint16_t(channels * bits / 8));
    wr_u16(os, bits);
    os.write("data", 4);
    wr_u32(os, data_bytes);
}

}  // namespace

Waveform read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw audio_error("cannot open WAV file: " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
        std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
        throw audio_error("not a RIFF/WAVE file: " + path);

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t sample_rate = 0;
    const unsigned char* data = nullptr;
    size_t data_len = 0;
    bool have_fmt = false;

    size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        const char* id = reinterpret_cast<const char*>(buf.data() + pos);
        const uint32_t len = rd_u32(buf.data() + pos + 4);
        pos += 8;
        if (pos + len > buf.size()) throw audio_error("truncated chunk in WAV file: " + path);
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) throw audio_error("malformed fmt chunk: " + path);
            format = rd_u16(buf.data() + pos);
            channels = rd_u16(buf.data() + pos + 2);
            sample_rate = rd_u32(buf.data() + pos + 4);
            bits = rd_u16(buf.data() + pos + 14);
            if (format == kFormatExtensible) {
                if (len < 40) throw audio_error("malformed extensible fmt chunk: " + path);
                format = rd_u16(buf.data() + pos + 24);  // first two bytes of SubFormat GUID
            }
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = buf.data() + pos;
            data_len = len;
        }
        pos += len + (len & 1);  // chunks are word-aligned
    }
    if (!have_fmt || data == nullptr) throw audio_error("missing fmt or data chunk: " + path);
    if (channels != 1 && channels != 2)
        throw audio_error(path + ": unsupported channel count " + std::to_string(channels) +
                          " (mono or stereo only)");

    const bool pcm16 = format == kFormatPcm && bits == 16;
    const bool f32 = format == kFormatFloat && bits == 32;
    if (!pcm16 && !f32)
        throw audio_error(path + ": unsupported encoding (format tag " + std::to_string(format) +
                          ", " + std::to_string(bits) + "-bit); only PCM-16 and float-32 are supported");

    const size_t bytes_per_sample = bits / 8;
    const size_t frame_bytes = bytes_per_sample * channels;
    const size_t frames = data_len / frame_bytes;

    Waveform w;
    w.sample_rate = static_cast<int>(sample_rate);
    w.samples.resize(frames);
    for (size_t f = 0; f < frames; ++f) {
        float acc = 0.0f;
        for (size_t c = 0; c < channels; ++c) {
            const unsigned char* s = data + f * frame_bytes + c * bytes_per_sample;
            if (pcm16) {
                const int16_t v = static_cast<int16_t>(rd_u16(s));
                acc += static_cast<float>(v) / 32768.0f;
            } else {
                float v;
                uint32_t u = rd_u32(s);
                std::memcpy(&v, &u, 4);
                acc += v;
            }
        }
        w.samples[f] = acc / static_cast<float>(channels);
    }
    return w;
}

void write_wav_pcm16(const std::string& path, const Waveform& w) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw audio_error("cannot write WAV file: " + path);
    write_header(os, kFormatPcm, 16, w.sample_rate, uint32_t(w.samples.size() * 2));
    for (float v : w.samples) {
        const float clamped = std::clamp(v, -1.0f, 1.0f);
        const int q = static_cast<int>(std::lrintf(clamped * 32767.0f));
        wr_u16(os, static_cast<uint16_t>(static_cast<int16_t>(q)));
    }
    if (!os) throw audio_error("write failed: " + path);
}

void write_wav_float32(const std::string& path, const Waveform& w) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw audio_error("cannot write WAV file: " + path);
    write_header(os, kFormatFloat, 32, w.sample_rate, uint32_t(w.samples.size() * 4));
    for (float v : w.samples) {
        uint32_t u;
        std::memcpy(&u, &v, 4);
        wr_u32(os, u);
    }
    if (!os) throw audio_error("write failed: " + path);
}

}  // namespace binembed
