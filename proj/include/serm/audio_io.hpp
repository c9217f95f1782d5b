#pragma once

/**
 * WAV decoding, resampling, and dataset manifest construction for the
 * SAVEE and RAVDESS emotional-speech corpora (calm class excluded).
 */

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "serm/errors.hpp"

namespace serm::audio {

// ---------------------------------------------------------------------------
// Domain types

struct AudioClip {
    std::vector<double> samples;  // mono, amplitudes in [-1, 1]
    int sample_rate = 0;          // Hz
    std::string source_path;

    double duration_s() const {
        return static_cast<double>(samples.size()) / sample_rate;
    }
};

// Fixed integer codes 0..6, alphabetical. Calm is deliberately absent.
enum class Emotion : int {
    anger = 0,
    disgust = 1,
    fear = 2,
    happy = 3,
    neutral = 4,
    sad = 5,
    surprise = 6,
};

inline constexpr int kNumEmotions = 7;

inline const char* emotion_name(Emotion e) {
    static constexpr const char* names[] = {"anger",   "disgust", "fear", "happy",
                                            "neutral", "sad",     "surprise"};
    return names[static_cast<int>(e)];
}

inline std::optional<Emotion> emotion_from_name(const std::string& name) {
    for (int i = 0; i < kNumEmotions; ++i) {
        if (name == emotion_name(static_cast<Emotion>(i))) {
            return static_cast<Emotion>(i);
        }
    }
    return std::nullopt;
}

enum class Gender { male, female };

inline const char* gender_name(Gender g) { return g == Gender::male ? "male" : "female"; }

enum class Dataset { savee, ravdess };

inline const char* dataset_name(Dataset d) { return d == Dataset::savee ? "savee" : "ravdess"; }

struct ManifestEntry {
    std::string path;
    Emotion emotion;
    Gender gender;
    std::string speaker_id;
    Dataset dataset;
};

struct Manifest {
    std::vector<ManifestEntry> entries;  // sorted by path
    std::array<std::size_t, kNumEmotions> class_counts{};
    std::size_t skipped_calm = 0;          // RAVDESS emotion code 02
    std::size_t skipped_unrecognized = 0;  // readme/license/odd filenames
};

struct ParsedLabel {
    Emotion emotion;
    Gender gender;
    std::string speaker_id;
};

// ---------------------------------------------------------------------------
// WAV decoding

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
           std::uint32_t(p[3]) << 24;
}

inline std::uint16_t read_u16le(const unsigned char* p) {
    return std::uint16_t(p[0] | p[1] << 8);
}

}  // namespace detail

/// Decodes a RIFF/WAVE file. Accepts 16-bit PCM and 32-bit IEEE float,
/// 1 or 2 channels. Stereo is averaged to mono; integer samples are
/// scaled to [-1, 1] by dividing by 32768.
inline AudioClip load_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw MalformedWav("cannot open file: " + path);
    }
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw MalformedWav("not a RIFF/WAVE file: " + path);
    }

    int format = 0, channels = 0, bits = 0, rate = 0;
    bool have_fmt = false;
    const unsigned char* data = nullptr;
    std::size_t data_len = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
        std::uint32_t chunk_len = detail::read_u32le(bytes.data() + pos + 4);
        std::size_t body = pos + 8;
        if (body + chunk_len > bytes.size()) {
            throw MalformedWav("chunk overruns file: " + path);
        }
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (chunk_len < 16) {
                throw MalformedWav("fmt chunk too small: " + path);
            }
            format = detail::read_u16le(bytes.data() + body);
            channels = detail::read_u16le(bytes.data() + body + 2);
            rate = static_cast<int>(detail::read_u32le(bytes.data() + body + 4));
            bits = detail::read_u16le(bytes.data() + body + 14);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = bytes.data() + body;
            data_len = chunk_len;
        }
        pos = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
    }

    if (!have_fmt || data == nullptr) {
        throw MalformedWav("missing fmt or data chunk: " + path);
    }
    if (channels < 1 || channels > 2 || rate <= 0) {
        throw UnsupportedEncoding("unsupported channel count or rate: " + path);
    }
    const bool pcm16 = (format == 1 && bits == 16);
    const bool float32 = (format == 3 && bits == 32);
    if (!pcm16 && !float32) {
        throw UnsupportedEncoding("only PCM16 and float32 are supported: " + path);
    }
    const std::size_t bytes_per = pcm16 ? 2 : 4;
    const std::size_t n_values = data_len / bytes_per;
    const std::size_t n_frames = n_values / channels;
    if (n_frames == 0) {
        throw EmptyAudio("zero data bytes: " + path);
    }

    AudioClip clip;
    clip.sample_rate = rate;
    clip.source_path = path;
    clip.samples.resize(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) {
            const unsigned char* p = data + (i * channels + c) * bytes_per;
            if (pcm16) {
                std::int16_t v;
                std::memcpy(&v, p, 2);
                acc += static_cast<double>(v) / 32768.0;
            } else {
                float v;
                std::memcpy(&v, p, 4);
                acc += std::clamp(static_cast<double>(v), -1.0, 1.0);
            }
        }
        clip.samples[i] = acc / channels;
    }
    return clip;
}

/// Linear-interpolation resampling. Identity when rates match.
inline AudioClip resample_linear(const AudioClip& clip, int target_rate) {
    if (target_rate <= 0) {
        throw ConfigError("resample_linear: target_rate must be positive");
    }
    if (target_rate == clip.sample_rate) {
        return clip;
    }
    const std::size_t n_in = clip.samples.size();
    const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
    std::size_t n_out = static_cast<std::size_t>(std::llround(static_cast<double>(n_in) * ratio));
    n_out = std::max<std::size_t>(n_out, 1);

    AudioClip out;
    out.sample_rate = target_rate;
    out.source_path = clip.source_path;
    out.samples.resize(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
        double pos = static_cast<double>(i) / ratio;
        std::size_t i0 = std::min(static_cast<std::size_t>(pos), n_in - 1);
        std::size_t i1 = std::min(i0 + 1, n_in - 1);
        double frac = pos - static_cast<double>(i0);
        out.samples[i] = clip.samples[i0] * (1.0 - frac) + clip.samples[i1] * frac;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Filename label grammars

/// SAVEE: stem is `<prefix><2 digits>` with prefix in {a,d,f,h,n,sa,su};
/// the parent directory names the speaker. All SAVEE speakers are male.
inline ParsedLabel parse_savee(const std::string& path) {
    std::filesystem::path p(path);
    std::string stem = p.stem().string();

    std::size_t split = 0;
    while (split < stem.size() && std::isalpha(static_cast<unsigned char>(stem[split]))) {
        ++split;
    }
    std::string prefix = stem.substr(0, split);
    std::string digits = stem.substr(split);
    bool two_digits = digits.size() == 2 &&
                      std::isdigit(static_cast<unsigned char>(digits[0])) &&
                      std::isdigit(static_cast<unsigned char>(digits[1]));

    static const std::map<std::string, Emotion> table = {
        {"a", Emotion::anger}, {"d", Emotion::disgust},  {"f", Emotion::fear},
        {"h", Emotion::happy}, {"n", Emotion::neutral},  {"sa", Emotion::sad},
        {"su", Emotion::surprise}};
    auto it = table.find(prefix);
    if (!two_digits || it == table.end()) {
        throw UnrecognizedFilename("not a SAVEE filename: " + path);
    }
    return {it->second, Gender::male, p.parent_path().filename().string()};
}

/// RAVDESS: stem is 7 dash-separated 2-digit fields
/// (modality-channel-emotion-intensity-statement-repetition-actor).
/// Returns nullopt for the calm class (emotion field 02), which is excluded.
inline std::optional<ParsedLabel> parse_ravdess(const std::string& path) {
    std::filesystem::path p(path);
    std::string stem = p.stem().string();

    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t dash = stem.find('-', start);
        fields.push_back(stem.substr(start, dash == std::string::npos ? dash : dash - start));
        if (dash == std::string::npos) break;
        start = dash + 1;
    }
    auto is_2digit = [](const std::string& s) {
        return s.size() == 2 && std::isdigit(static_cast<unsigned char>(s[0])) &&
               std::isdigit(static_cast<unsigned char>(s[1]));
    };
    if (fields.size() != 7 || !std::all_of(fields.begin(), fields.end(), is_2digit)) {
        throw UnrecognizedFilename("not a RAVDESS filename: " + path);
    }

    static const std::map<std::string, Emotion> table = {
        {"01", Emotion::neutral}, {"03", Emotion::happy},   {"04", Emotion::sad},
        {"05", Emotion::anger},   {"06", Emotion::fear},    {"07", Emotion::disgust},
        {"08", Emotion::surprise}};
    const std::string& code = fields[2];
    if (code == "02") {
        return std::nullopt;  // calm, excluded
    }
    auto it = table.find(code);
    if (it == table.end()) {
        throw UnrecognizedFilename("unknown RAVDESS emotion code " + code + ": " + path);
    }
    int actor = std::stoi(fields[6]);
    Gender gender = (actor % 2 == 1) ? Gender::male : Gender::female;
    return ParsedLabel{it->second, gender, fields[6]};
}

namespace detail {

inline bool looks_like_ravdess(const std::string& stem) {
    return std::count(stem.begin(), stem.end(), '-') == 6;
}

}  // namespace detail

/// Scans directory trees for .wav files and builds a sorted manifest.
/// Calm files and unparseable filenames are skipped and counted.
inline Manifest build_manifest(const std::vector<std::string>& roots) {
    Manifest m;
    std::vector<std::string> wavs;
    for (const auto& root : roots) {
        std::error_code ec;
        for (auto it = std::filesystem::recursive_directory_iterator(root, ec);
             it != std::filesystem::recursive_directory_iterator(); it.increment(ec)) {
            if (ec) break;
            if (!it->is_regular_file()) continue;
            std::string ext = it->path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            if (ext == ".wav") {
                wavs.push_back(it->path().string());
            }
        }
    }
    std::sort(wavs.begin(), wavs.end());

    for (const auto& path : wavs) {
        std::string stem = std::filesystem::path(path).stem().string();
        try {
            if (detail::looks_like_ravdess(stem)) {
                auto parsed = parse_ravdess(path);
                if (!parsed) {
                    ++m.skipped_calm;
                    continue;
                }
                m.entries.push_back(
                    {path, parsed->emotion, parsed->gender, parsed->speaker_id, Dataset::ravdess});
            } else {
                auto parsed = parse_savee(path);
                m.entries.push_back(
                    {path, parsed.emotion, parsed.gender, parsed.speaker_id, Dataset::savee});
            }
        } catch (const UnrecognizedFilename&) {
            ++m.skipped_unrecognized;
        }
    }
    if (m.entries.empty()) {
        throw NoFilesFound("no parseable .wav files under the given roots");
    }
    for (const auto& e : m.entries) {
        ++m.class_counts[static_cast<std::size_t>(e.emotion)];
    }
    return m;
}

/// Manifest CSV: `path,emotion,gender,speaker,dataset`, rows sorted by path.
inline void write_manifest_csv(const Manifest& m, std::ostream& out) {
    out << "path,emotion,gender,speaker,dataset\n";
    for (const auto& e : m.entries) {
        out << e.path << ',' << emotion_name(e.emotion) << ',' << gender_name(e.gender) << ','
            << e.speaker_id << ',' << dataset_name(e.dataset) << '\n';
    }
}

inline Manifest read_manifest_csv(std::istream& in) {
    Manifest m;
    std::string line;
    if (!std::getline(in, line) || line.rfind("path,emotion,gender,speaker,dataset", 0) != 0) {
        throw DataError("manifest CSV: missing or bad header");
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::size_t start = 0;
        // path may not contain commas in this format; split on all commas
        while (true) {
            std::size_t c = line.find(',', start);
            cols.push_back(line.substr(start, c == std::string::npos ? c : c - start));
            if (c == std::string::npos) break;
            start = c + 1;
        }
        if (cols.size() != 5) {
            throw DataError("manifest CSV: bad row: " + line);
        }
        auto emo = emotion_from_name(cols[1]);
        if (!emo) {
            throw DataError("manifest CSV: unknown emotion: " + cols[1]);
        }
        ManifestEntry e;
        e.path = cols[0];
        e.emotion = *emo;
        e.gender = cols[2] == "female" ? Gender::female : Gender::male;
        e.speaker_id = cols[3];
        e.dataset = cols[4] == "ravdess" ? Dataset::ravdess : Dataset::savee;
        m.entries.push_back(e);
        ++m.class_counts[static_cast<std::size_t>(e.emotion)];
    }
    if (m.entries.empty()) {
        throw NoFilesFound("manifest CSV has no rows");
    }
    return m;
}

}  // namespace serm::audio
