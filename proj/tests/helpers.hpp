#pragma once

// Test-only helpers: an independent WAV writer (no code shared with the
// library's decoder), tone/noise generators, and a temp-dir guard.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace testutil {

inline void put_u16(std::ofstream& out, std::uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    out.write(b, 2);
}

inline void put_u32(std::ofstream& out, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

/// Writes an interleaved 16-bit PCM WAV file.
inline void write_wav_pcm16(const std::string& path, const std::vector<std::int16_t>& samples,
                            int channels, int rate) {
    std::ofstream out(path, std::ios::binary);
    const std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * 2);
    out.write("RIFF", 4);
    put_u32(out, 36 + data_len);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put_u32(out, 16);
    put_u16(out, 1);  // PCM
    put_u16(out, static_cast<std::uint16_t>(channels));
    put_u32(out, static_cast<std::uint32_t>(rate));
    put_u32(out, static_cast<std::uint32_t>(rate * channels * 2));
    put_u16(out, static_cast<std::uint16_t>(channels * 2));
    put_u16(out, 16);
    out.write("data", 4);
    put_u32(out, data_len);
    out.write(reinterpret_cast<const char*>(samples.data()), data_len);
}

/// Writes an interleaved IEEE float32 WAV file.
inline void write_wav_float32(const std::string& path, const std::vector<float>& samples,
                              int channels, int rate) {
    std::ofstream out(path, std::ios::binary);
    const std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * 4);
    out.write("RIFF", 4);
    put_u32(out, 36 + data_len);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put_u32(out, 16);
    put_u16(out, 3);  // IEEE float
    put_u16(out, static_cast<std::uint16_t>(channels));
    put_u32(out, static_cast<std::uint32_t>(rate));
    put_u32(out, static_cast<std::uint32_t>(rate * channels * 4));
    put_u16(out, static_cast<std::uint16_t>(channels * 4));
    put_u16(out, 32);
    out.write("data", 4);
    put_u32(out, data_len);
    out.write(reinterpret_cast<const char*>(samples.data()), data_len);
}

inline std::vector<double> make_tone(double freq, int rate, double seconds, double amp = 0.5,
                                     double phase = 0.0) {
    const std::size_t n = static_cast<std::size_t>(std::llround(seconds * rate));
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / rate + phase);
    }
    return x;
}

inline std::vector<std::int16_t> to_pcm16(const std::vector<double>& x) {
    std::vector<std::int16_t> s(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        s[i] = static_cast<std::int16_t>(std::lround(x[i] * 32767.0));
    }
    return s;
}

/// Temp directory removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("serm_" + tag + "_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string str(const std::string& name) const { return (path / name).string(); }
};

}  // namespace testutil
