#pragma once

// Minimal RIFF/WAVE reader and writer: PCM16 and IEEE float32, interleaved
// multichannel, little-endian. Samples are normalized to +-1.0.

#include <cstdint>
#include <cstring>
#include <algorithm>
#include <iterator>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dsp.hpp"

namespace spatialbeam {

enum class WavFormat { Pcm16, Float32 };

namespace detail {

inline void put_u32(std::vector<char>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u16(std::vector<char>& b, std::uint16_t v) {
    b.push_back(static_cast<char>(v & 0xFF));
    b.push_back(static_cast<char>(v >> 8));
}
inline std::uint32_t get_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}
inline std::uint16_t get_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

}  // namespace detail

inline std::vector<char> encode_wav(const MultiChannelWaveform& wave, WavFormat fmt = WavFormat::Float32) {
    wave.validate();
    const std::uint16_t channels = static_cast<std::uint16_t>(wave.channels());
    const std::uint16_t bits = fmt == WavFormat::Pcm16 ? 16 : 32;
    const std::uint16_t tag = fmt == WavFormat::Pcm16 ? 1 : 3;
    const std::uint32_t frames = static_cast<std::uint32_t>(wave.length());
    const std::uint32_t data_bytes = frames * channels * (bits / 8);

    std::vector<char> b;
    b.reserve(44 + data_bytes);
    b.insert(b.end(), {'R', 'I', 'F', 'F'});
    detail::put_u32(b, 36 + data_bytes);
    b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    detail::put_u32(b, 16);
    detail::put_u16(b, tag);
    detail::put_u16(b, channels);
    detail::put_u32(b, static_cast<std::uint32_t>(wave.sample_rate));
    detail::put_u32(b, static_cast<std::uint32_t>(wave.sample_rate) * channels * (bits / 8));
    detail::put_u16(b, static_cast<std::uint16_t>(channels * (bits / 8)));
    detail::put_u16(b, bits);
    b.insert(b.end(), {'d', 'a', 't', 'a'});
    detail::put_u32(b, data_bytes);
    for (std::uint32_t n = 0; n < frames; ++n) {
        for (std::uint16_t m = 0; m < channels; ++m) {
            const double v = wave.samples[m][n];
            if (fmt == WavFormat::Pcm16) {
                const long r = std::clamp(std::lround(v * 32768.0), -32768L, 32767L);
                const auto q = static_cast<std::int16_t>(r);
                detail::put_u16(b, static_cast<std::uint16_t>(q));
            } else {
                const float f = static_cast<float>(v);
                std::uint32_t bits32;
                std::memcpy(&bits32, &f, 4);
                detail::put_u32(b, bits32);
            }
        }
    }
    return b;
}

inline MultiChannelWaveform decode_wav(const std::vector<char>& bytes) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::size_t n = bytes.size();
    if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
        throw Error("not a RIFF/WAVE file");
    std::uint16_t tag = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::uint32_t data_len = 0;
    std::size_t pos = 12;
    while (pos + 8 <= n) {
        const std::uint32_t len = detail::get_u32(p + pos + 4);
        const unsigned char* body = p + pos + 8;
        if (pos + 8 + len > n) throw Error("truncated WAV chunk");
        if (std::memcmp(p + pos, "fmt ", 4) == 0) {
            if (len < 16) throw Error("short fmt chunk");
            tag = detail::get_u16(body);
            channels = detail::get_u16(body + 2);
            rate = detail::get_u32(body + 4);
            bits = detail::get_u16(body + 14);
            if (tag == 0xFFFE && len >= 26) tag = detail::get_u16(body + 24);  // WAVE_FORMAT_EXTENSIBLE
        } else if (std::memcmp(p + pos, "data", 4) == 0) {
            data = body;
            data_len = len;
        }
        pos += 8 + len + (len & 1);
    }
    if (!data || channels == 0) throw Error("WAV missing fmt or data chunk");
    const bool pcm16 = tag == 1 && bits == 16;
    const bool f32 = tag == 3 && bits == 32;
    if (!pcm16 && !f32) throw Error("unsupported WAV encoding (need PCM16 or float32)");
    const std::size_t frame_bytes = std::size_t(channels) * (bits / 8);
    const std::size_t frames = data_len / frame_bytes;
    MultiChannelWaveform wave(channels, frames, static_cast<int>(rate));
    for (std::size_t i = 0; i < frames; ++i)
        for (std::size_t m = 0; m < channels; ++m) {
            const unsigned char* s = data + i * frame_bytes + m * (bits / 8);
            if (pcm16) {
                wave.samples[m][i] = static_cast<std::int16_t>(detail::get_u16(s)) / 32768.0;
            } else {
                const std::uint32_t u = detail::get_u32(s);
                float f;
                std::memcpy(&f, &u, 4);
                wave.samples[m][i] = f;
            }
        }
    return wave;
}

inline void write_wav(const std::filesystem::path& path, const MultiChannelWaveform& wave,
                      WavFormat fmt = WavFormat::Float32) {
    const auto bytes = encode_wav(wave, fmt);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error("failed writing " + path.string());
}

inline MultiChannelWaveform read_wav(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_wav(bytes);
}

}  // namespace spatialbeam
