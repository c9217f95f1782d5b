#pragma once

/**
 * Per-clip feature assembly (the per-frame sequence plus whole-signal
 * globals), Fisher-score feature selection, and z-score normalization.
 */

#include <array>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "serm/audio_io.hpp"
#include "serm/dsp.hpp"
#include "serm/errors.hpp"

namespace serm::feat {

// Per-frame channel layout: 13 MFCC, 3 peak frequencies, 3 peak magnitudes,
// frame energy, fine pitch delta.
inline constexpr std::size_t kTMax = 70;
inline constexpr std::size_t kNumMfcc = 13;
inline constexpr std::size_t kNumPeaks = 3;
inline constexpr std::size_t kChannels = kNumMfcc + 2 * kNumPeaks + 2;  // 21
inline constexpr std::size_t kNumGlobals = 10;
inline constexpr std::size_t kFlatDim = kTMax * kChannels + kNumGlobals;  // 1480

struct DspParams {
    std::size_t frame_len = 2048;
    std::size_t hop = 1024;
    std::size_t n_filters = 26;
    std::size_t n_mfcc = kNumMfcc;
    double fmin = 0.0;
    double fmax = 11025.0;
    double flatness_hz = 10.0;
};

struct ClipFeatures {
    std::vector<double> sequence;  // row-major [kTMax x kChannels]
    std::array<double, kNumGlobals> globals{};  // avg_energy, mean, std, max,
                                                // min, skew, kurt, 3 segment means
    audio::Emotion label{};
    audio::Gender gender{};
};

struct FeatureMatrix {
    std::vector<double> rows;  // row-major [n x dim]
    std::size_t n = 0;
    std::size_t dim = 0;
    std::vector<audio::Emotion> labels;
    std::vector<audio::Gender> genders;
    std::vector<std::string> column_names;

    std::span<const double> row(std::size_t i) const { return {rows.data() + i * dim, dim}; }
    std::span<double> row(std::size_t i) { return {rows.data() + i * dim, dim}; }
};

struct SelectionReport {
    std::vector<double> scores;
    std::vector<std::size_t> selected;  // descending by score, ties by lower index
    std::size_t k = 0;
};

// ---------------------------------------------------------------------------
// Assembly

/// Runs the dsp pipeline on one clip and packs the fixed-size feature set.
/// Sequences shorter than kTMax frames are zero-padded; longer ones are
/// truncated at the tail.
inline ClipFeatures assemble(const audio::AudioClip& clip, audio::Emotion label,
                             audio::Gender gender, const DspParams& p) {
    auto frames = dsp::frame_signal(clip, p.frame_len, p.hop);
    auto spectra = dsp::power_spectra(frames);
    auto bank = dsp::mel_filterbank(p.n_filters, p.frame_len,
                                    clip.sample_rate, p.fmin, p.fmax);
    auto coeffs = dsp::mfcc(spectra, bank, p.n_mfcc);

    std::vector<double> dominant(frames.n_frames);
    for (std::size_t f = 0; f < frames.n_frames; ++f) {
        dominant[f] = dsp::dominant_frequency(spectra.row(f), spectra.bin_hz);
    }

    std::vector<double> fine(frames.n_frames, 0.0);
    double segment_means[3];
    if (frames.n_frames >= 3) {
        auto trend = dsp::pitch_trend(dominant, p.flatness_hz);
        fine = trend.fine_deltas;
        for (int s = 0; s < 3; ++s) segment_means[s] = trend.segment_means[s];
    } else {
        const double m = std::accumulate(dominant.begin(), dominant.end(), 0.0) /
                         static_cast<double>(frames.n_frames);
        segment_means[0] = segment_means[1] = segment_means[2] = m;
    }

    ClipFeatures cf;
    cf.label = label;
    cf.gender = gender;
    cf.sequence.assign(kTMax * kChannels, 0.0);
    const std::size_t t_used = std::min<std::size_t>(frames.n_frames, kTMax);
    for (std::size_t t = 0; t < t_used; ++t) {
        double* row = cf.sequence.data() + t * kChannels;
        for (std::size_t c = 0; c < p.n_mfcc; ++c) {
            row[c] = coeffs[t * p.n_mfcc + c];
        }
        auto peaks = dsp::top_peaks(spectra.row(t), kNumPeaks, spectra.bin_hz);
        for (std::size_t i = 0; i < kNumPeaks; ++i) {
            row[kNumMfcc + i] = peaks[i].freq_hz;
            row[kNumMfcc + kNumPeaks + i] = peaks[i].power;
        }
        auto frame = frames.frame(t);
        double e = 0.0;
        for (double v : frame) e += v * v;
        row[kNumMfcc + 2 * kNumPeaks] = e / static_cast<double>(p.frame_len);
        row[kNumMfcc + 2 * kNumPeaks + 1] = fine[t];
    }

    try {
        auto st = dsp::signal_stats(clip);
        cf.globals = {st.avg_energy, st.mean, st.std_dev, st.max, st.min,
                      st.skewness, st.kurtosis, segment_means[0], segment_means[1],
                      segment_means[2]};
    } catch (const DegenerateSignal&) {
        // constant signal: skewness/kurtosis undefined, reported as 0
        const double v = clip.samples.empty() ? 0.0 : clip.samples[0];
        cf.globals = {v * v, v, 0.0, v, v, 0.0, 0.0,
                      segment_means[0], segment_means[1], segment_means[2]};
    }
    return cf;
}

inline std::vector<std::string> flat_column_names() {
    static const char* channel_names[kChannels] = {
        "mfcc00", "mfcc01", "mfcc02", "mfcc03", "mfcc04", "mfcc05", "mfcc06",
        "mfcc07", "mfcc08", "mfcc09", "mfcc10", "mfcc11", "mfcc12",
        "peak_hz0", "peak_hz1", "peak_hz2", "peak_pw0", "peak_pw1", "peak_pw2",
        "energy", "pitch_delta"};
    static const char* global_names[kNumGlobals] = {
        "g_avg_energy", "g_mean", "g_std", "g_max", "g_min",
        "g_skewness", "g_kurtosis", "g_pitch_seg0", "g_pitch_seg1", "g_pitch_seg2"};
    std::vector<std::string> names;
    names.reserve(kFlatDim);
    char buf[48];
    for (std::size_t t = 0; t < kTMax; ++t) {
        for (std::size_t c = 0; c < kChannels; ++c) {
            std::snprintf(buf, sizeof(buf), "t%02zu_%s", t, channel_names[c]);
            names.emplace_back(buf);
        }
    }
    for (std::size_t g = 0; g < kNumGlobals; ++g) {
        names.emplace_back(global_names[g]);
    }
    return names;
}

/// Flattened (sequence || globals) view of one clip.
inline std::vector<double> flatten(const ClipFeatures& cf) {
    std::vector<double> v;
    v.reserve(kFlatDim);
    v.insert(v.end(), cf.sequence.begin(), cf.sequence.end());
    v.insert(v.end(), cf.globals.begin(), cf.globals.end());
    return v;
}

inline FeatureMatrix to_matrix(const std::vector<ClipFeatures>& clips) {
    FeatureMatrix m;
    m.n = clips.size();
    m.dim = kFlatDim;
    m.column_names = flat_column_names();
    m.rows.reserve(m.n * m.dim);
    for (const auto& cf : clips) {
        auto v = flatten(cf);
        m.rows.insert(m.rows.end(), v.begin(), v.end());
        m.labels.push_back(cf.label);
        m.genders.push_back(cf.gender);
    }
    return m;
}

inline ClipFeatures from_row(const FeatureMatrix& m, std::size_t i) {
    ClipFeatures cf;
    auto r = m.row(i);
    cf.sequence.assign(r.begin(), r.begin() + kTMax * kChannels);
    std::copy(r.begin() + kTMax * kChannels, r.end(), cf.globals.begin());
    cf.label = m.labels[i];
    cf.gender = m.genders[i];
    return cf;
}

// ---------------------------------------------------------------------------
// Fisher-score feature selection

/// score_j = sum_c n_c (mu_cj - mu_j)^2 / sum_c n_c var_cj (population
/// variances). Zero within-class variance with nonzero between-class
/// variance scores +inf; zero everywhere scores 0.
inline std::vector<double> fisher_score(const FeatureMatrix& m) {
    std::array<std::vector<std::size_t>, audio::kNumEmotions> by_class;
    for (std::size_t i = 0; i < m.n; ++i) {
        by_class[static_cast<std::size_t>(m.labels[i])].push_back(i);
    }
    std::size_t n_classes = 0;
    for (const auto& idx : by_class) {
        if (!idx.empty()) {
            if (idx.size() < 2) {
                throw InsufficientClasses("fisher_score: every class needs >= 2 samples");
            }
            ++n_classes;
        }
    }
    if (n_classes < 2) {
        throw InsufficientClasses("fisher_score: need >= 2 classes");
    }

    std::vector<double> scores(m.dim);
    for (std::size_t j = 0; j < m.dim; ++j) {
        double global_mean = 0.0;
        for (std::size_t i = 0; i < m.n; ++i) {
            global_mean += m.rows[i * m.dim + j];
        }
        global_mean /= static_cast<double>(m.n);

        double between = 0.0, within = 0.0;
        for (const auto& idx : by_class) {
            if (idx.empty()) continue;
            const double nc = static_cast<double>(idx.size());
            double mu = 0.0;
            for (std::size_t i : idx) mu += m.rows[i * m.dim + j];
            mu /= nc;
            double var = 0.0;
            for (std::size_t i : idx) {
                const double d = m.rows[i * m.dim + j] - mu;
                var += d * d;
            }
            var /= nc;
            between += nc * (mu - global_mean) * (mu - global_mean);
            within += nc * var;
        }
        if (within > 0.0) {
            scores[j] = between / within;
        } else {
            scores[j] = between > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
        }
    }
    return scores;
}

/// Indices of the k largest scores, descending, ties by lower index.
inline SelectionReport select_top_k(const std::vector<double>& scores, std::size_t k) {
    if (k < 1 || k > scores.size()) {
        throw BadK("select_top_k: k out of range");
    }
    std::vector<std::size_t> idx(scores.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    idx.resize(k);
    return {scores, std::move(idx), k};
}

// ---------------------------------------------------------------------------
// Normalization

struct Normalizer {
    std::vector<double> means;
    std::vector<double> stds;  // floored at 1e-8

    void apply(FeatureMatrix& m) const {
        for (std::size_t i = 0; i < m.n; ++i) {
            auto r = m.row(i);
            for (std::size_t j = 0; j < m.dim; ++j) {
                r[j] = (r[j] - means[j]) / stds[j];
            }
        }
    }
};

/// Column statistics from the training split only (population divisor).
inline Normalizer fit_normalizer(const FeatureMatrix& train) {
    Normalizer nz;
    nz.means.assign(train.dim, 0.0);
    nz.stds.assign(train.dim, 0.0);
    for (std::size_t i = 0; i < train.n; ++i) {
        auto r = train.row(i);
        for (std::size_t j = 0; j < train.dim; ++j) nz.means[j] += r[j];
    }
    for (std::size_t j = 0; j < train.dim; ++j) nz.means[j] /= static_cast<double>(train.n);
    for (std::size_t i = 0; i < train.n; ++i) {
        auto r = train.row(i);
        for (std::size_t j = 0; j < train.dim; ++j) {
            const double d = r[j] - nz.means[j];
            nz.stds[j] += d * d;
        }
    }
    for (std::size_t j = 0; j < train.dim; ++j) {
        nz.stds[j] = std::max(std::sqrt(nz.stds[j] / static_cast<double>(train.n)), 1e-8);
    }
    return nz;
}

// ---------------------------------------------------------------------------
// Feature store CSV (9 significant digits)

inline void write_features_csv(const FeatureMatrix& m, std::ostream& out) {
    for (std::size_t j = 0; j < m.dim; ++j) {
        out << m.column_names[j] << ',';
    }
    out << "label,gender\n";
    char buf[32];
    for (std::size_t i = 0; i < m.n; ++i) {
        auto r = m.row(i);
        for (std::size_t j = 0; j < m.dim; ++j) {
            std::snprintf(buf, sizeof(buf), "%.9g", r[j]);
            out << buf << ',';
        }
        out << audio::emotion_name(m.labels[i]) << ',' << audio::gender_name(m.genders[i])
            << '\n';
    }
}

inline FeatureMatrix read_features_csv(std::istream& in) {
    FeatureMatrix m;
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("features CSV: empty file");
    }
    {
        std::size_t start = 0;
        while (true) {
            std::size_t c = line.find(',', start);
            m.column_names.push_back(line.substr(start, c == std::string::npos ? c : c - start));
            if (c == std::string::npos) break;
            start = c + 1;
        }
    }
    if (m.column_names.size() < 3 || m.column_names.back() != "gender" ||
        m.column_names[m.column_names.size() - 2] != "label") {
        throw DataError("features CSV: header must end with label,gender");
    }
    m.column_names.resize(m.column_names.size() - 2);
    m.dim = m.column_names.size();

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t start = 0;
        std::vector<std::string> cols;
        cols.reserve(m.dim + 2);
        while (true) {
            std::size_t c = line.find(',', start);
            cols.push_back(line.substr(start, c == std::string::npos ? c : c - start));
            if (c == std::string::npos) break;
            start = c + 1;
        }
        if (cols.size() != m.dim + 2) {
            throw DataError("features CSV: row width mismatch");
        }
        for (std::size_t j = 0; j < m.dim; ++j) {
            m.rows.push_back(std::stod(cols[j]));
        }
        auto emo = audio::emotion_from_name(cols[m.dim]);
        if (!emo) {
            throw DataError("features CSV: unknown emotion: " + cols[m.dim]);
        }
        m.labels.push_back(*emo);
        m.genders.push_back(cols[m.dim + 1] == "female" ? audio::Gender::female
                                                        : audio::Gender::male);
        ++m.n;
    }
    return m;
}

}  // namespace serm::feat
