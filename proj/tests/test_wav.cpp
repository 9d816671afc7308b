#include <gtest/gtest.h>

#include <filesystem>

#include "spatialbeam/wav.hpp"

using namespace spatialbeam;

namespace {

MultiChannelWaveform ramp_wave() {
    MultiChannelWaveform w(3, 50, 8000);
    for (std::size_t m = 0; m < 3; ++m)
        for (std::size_t i = 0; i < 50; ++i) w.samples[m][i] = (static_cast<double>(i) - 25.0) / 26.0 * (m + 1) / 3.0;
    return w;
}

}  // namespace

TEST(Wav, Float32RoundTrip) {
    const auto w = ramp_wave();
    const auto back = decode_wav(encode_wav(w, WavFormat::Float32));
    ASSERT_EQ(back.channels(), 3u);
    ASSERT_EQ(back.length(), 50u);
    EXPECT_EQ(back.sample_rate, 8000);
    for (std::size_t m = 0; m < 3; ++m)
        for (std::size_t i = 0; i < 50; ++i)
            EXPECT_EQ(back.samples[m][i], static_cast<double>(static_cast<float>(w.samples[m][i])));
}

TEST(Wav, Pcm16RoundTripWithinQuantization) {
    const auto w = ramp_wave();
    const auto back = decode_wav(encode_wav(w, WavFormat::Pcm16));
    for (std::size_t m = 0; m < 3; ++m)
        for (std::size_t i = 0; i < 50; ++i) EXPECT_NEAR(back.samples[m][i], w.samples[m][i], 0.5 / 32768.0 + 1e-15);
}

TEST(Wav, Pcm16FullScaleClamps) {
    MultiChannelWaveform w(1, 3, 16000);
    w.samples[0] = {1.0, -1.0, 2.0};
    const auto back = decode_wav(encode_wav(w, WavFormat::Pcm16));
    EXPECT_EQ(back.samples[0][0], 32767.0 / 32768.0);
    EXPECT_EQ(back.samples[0][1], -1.0);
    EXPECT_EQ(back.samples[0][2], 32767.0 / 32768.0);
}

TEST(Wav, HeaderLayout) {
    MultiChannelWaveform w(2, 10, 16000);
    const auto b = encode_wav(w, WavFormat::Pcm16);
    EXPECT_EQ(b.size(), 44u + 10 * 2 * 2);
    EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "RIFF");
    EXPECT_EQ(std::string(b.begin() + 8, b.begin() + 12), "WAVE");
}

TEST(Wav, RejectsGarbage) {
    std::vector<char> junk(64, 'x');
    EXPECT_THROW(decode_wav(junk), Error);
    auto b = encode_wav(ramp_wave(), WavFormat::Pcm16);
    b[34] = 24;  // bits per sample
    EXPECT_THROW(decode_wav(b), Error);
}

TEST(Wav, FileRoundTrip) {
    const auto p = std::filesystem::temp_directory_path() / "sb_wav_roundtrip.wav";
    write_wav(p, ramp_wave());
    EXPECT_EQ(read_wav(p).length(), 50u);
    EXPECT_THROW(read_wav(p.string() + ".missing"), Error);
}
