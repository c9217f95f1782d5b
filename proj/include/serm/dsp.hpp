#pragma once

/**
 * Signal-processing primitives: framing, radix-2 FFT, power spectra,
 * spectral peaks, Mel filterbank, MFCC, signal statistics, and pitch
 * trend features on coarse and fine time scales.
 */

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "serm/audio_io.hpp"
#include "serm/errors.hpp"

namespace serm::dsp {

inline constexpr double kLogFloor = 1e-10;  // filterbank energy floor before ln

inline bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

// ---------------------------------------------------------------------------
// Framing

struct FrameMatrix {
    std::vector<double> frames;  // row-major [n_frames x frame_len], windowed
    std::size_t n_frames = 0;
    std::size_t frame_len = 0;
    std::size_t hop = 0;
    int sample_rate = 0;

    std::span<const double> frame(std::size_t i) const {
        return {frames.data() + i * frame_len, frame_len};
    }
};

struct PowerSpectra {
    std::vector<double> power;  // row-major [n_frames x (frame_len/2 + 1)]
    std::size_t n_frames = 0;
    std::size_t width = 0;  // frame_len/2 + 1
    double bin_hz = 0.0;    // sample_rate / frame_len

    std::span<const double> row(std::size_t i) const {
        return {power.data() + i * width, width};
    }
};

/// Slices the clip into hop-strided frames, zero-padded at the tail,
/// with a Hamming window applied to every frame.
inline FrameMatrix frame_signal(const audio::AudioClip& clip, std::size_t frame_len,
                                std::size_t hop) {
    if (!is_power_of_two(frame_len)) {
        throw BadFrameParams("frame_len must be a power of two");
    }
    if (hop == 0) {
        throw BadFrameParams("hop must be positive");
    }
    const std::size_t n = clip.samples.size();
    const std::size_t n_frames = std::max<std::size_t>(1, (n + hop - 1) / hop);

    std::vector<double> window(frame_len);
    for (std::size_t i = 0; i < frame_len; ++i) {
        window[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                           static_cast<double>(frame_len - 1));
    }

    FrameMatrix fm;
    fm.n_frames = n_frames;
    fm.frame_len = frame_len;
    fm.hop = hop;
    fm.sample_rate = clip.sample_rate;
    fm.frames.assign(n_frames * frame_len, 0.0);
    for (std::size_t f = 0; f < n_frames; ++f) {
        const std::size_t base = f * hop;
        double* row = fm.frames.data() + f * frame_len;
        for (std::size_t i = 0; i < frame_len && base + i < n; ++i) {
            row[i] = clip.samples[base + i] * window[i];
        }
    }
    return fm;
}

// ---------------------------------------------------------------------------
// FFT

/// Unnormalized forward DFT, iterative radix-2 with bit-reversal permutation.
/// The input is zero-padded to length n.
inline std::vector<std::complex<double>> fft(std::span<const double> frame, std::size_t n) {
    if (!is_power_of_two(n)) {
        throw BadFrameParams("fft size must be a power of two");
    }
    if (frame.size() > n) {
        throw BadFrameParams("fft input longer than transform size");
    }
    std::vector<std::complex<double>> x(n, 0.0);
    for (std::size_t i = 0; i < frame.size(); ++i) {
        x[i] = frame[i];
    }

    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) {
            j ^= bit;
        }
        j |= bit;
        if (i < j) {
            std::swap(x[i], x[j]);
        }
    }

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = x[i + k];
                std::complex<double> v = x[i + k + len / 2] * w;
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    return x;
}

/// One-sided power spectrum |X[k]|^2 for k in 0..n/2 inclusive, unnormalized.
inline std::vector<double> power_spectrum(const std::vector<std::complex<double>>& spectrum) {
    const std::size_t half = spectrum.size() / 2;
    std::vector<double> p(half + 1);
    for (std::size_t k = 0; k <= half; ++k) {
        p[k] = std::norm(spectrum[k]);
    }
    return p;
}

/// FFT + one-sided power spectrum of every frame.
inline PowerSpectra power_spectra(const FrameMatrix& fm) {
    PowerSpectra ps;
    ps.n_frames = fm.n_frames;
    ps.width = fm.frame_len / 2 + 1;
    ps.bin_hz = static_cast<double>(fm.sample_rate) / static_cast<double>(fm.frame_len);
    ps.power.resize(ps.n_frames * ps.width);
    for (std::size_t f = 0; f < fm.n_frames; ++f) {
        auto spec = fft(fm.frame(f), fm.frame_len);
        auto p = power_spectrum(spec);
        std::copy(p.begin(), p.end(), ps.power.begin() + f * ps.width);
    }
    return ps;
}

// ---------------------------------------------------------------------------
// Spectral peaks and dominant frequency

struct Peak {
    double freq_hz;
    double power;
};

/// The k largest-power bins, descending by power, ties broken by lower bin.
inline std::vector<Peak> top_peaks(std::span<const double> power, std::size_t k, double bin_hz) {
    if (k > power.size()) {
        throw ConfigError("top_peaks: k exceeds spectrum size");
    }
    std::vector<std::size_t> idx(power.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return power[a] > power[b]; });
    std::vector<Peak> peaks;
    peaks.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        peaks.push_back({static_cast<double>(idx[i]) * bin_hz, power[idx[i]]});
    }
    return peaks;
}

/// Frequency of the maximum-power bin, DC excluded, lowest index on ties.
inline double dominant_frequency(std::span<const double> power_row, double bin_hz) {
    if (power_row.empty()) {
        throw DataError("dominant_frequency: empty row");
    }
    std::size_t best = power_row.size() > 1 ? 1 : 0;
    for (std::size_t i = best + 1; i < power_row.size(); ++i) {
        if (power_row[i] > power_row[best]) {
            best = i;
        }
    }
    return static_cast<double>(best) * bin_hz;
}

// ---------------------------------------------------------------------------
// Mel scale and filterbank

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }

inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

struct MelFilterbank {
    std::vector<double> weights;  // row-major [n_filters x width]
    std::size_t n_filters = 0;
    std::size_t width = 0;  // frame_len/2 + 1
    double fmin = 0.0;
    double fmax = 0.0;

    std::span<const double> row(std::size_t j) const {
        return {weights.data() + j * width, width};
    }
};

/// Triangular filters with peak value 1, equally spaced on the Mel scale,
/// evaluated at FFT bin center frequencies.
inline MelFilterbank mel_filterbank(std::size_t n_filters, std::size_t frame_len, int sample_rate,
                                    double fmin, double fmax) {
    if (n_filters < 1 || !(fmin < fmax) || fmax > sample_rate / 2.0 || fmin < 0.0) {
        throw BadBankParams("mel_filterbank: invalid parameters");
    }
    const std::size_t width = frame_len / 2 + 1;
    const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(frame_len);

    // n_filters + 2 points equally spaced in mel
    std::vector<double> point_hz(n_filters + 2);
    const double mel_lo = hz_to_mel(fmin);
    const double mel_hi = hz_to_mel(fmax);
    for (std::size_t i = 0; i < point_hz.size(); ++i) {
        const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                        static_cast<double>(n_filters + 1);
        point_hz[i] = mel_to_hz(mel);
    }

    MelFilterbank bank;
    bank.n_filters = n_filters;
    bank.width = width;
    bank.fmin = fmin;
    bank.fmax = fmax;
    bank.weights.assign(n_filters * width, 0.0);
    for (std::size_t j = 0; j < n_filters; ++j) {
        const double left = point_hz[j];
        const double center = point_hz[j + 1];
        const double right = point_hz[j + 2];
        double* row = bank.weights.data() + j * width;
        double row_sum = 0.0;
        for (std::size_t b = 0; b < width; ++b) {
            const double f = static_cast<double>(b) * bin_hz;
            double w = 0.0;
            if (f > left && f < center) {
                w = (f - left) / (center - left);
            } else if (f == center) {
                w = 1.0;
            } else if (f > center && f < right) {
                w = (right - f) / (right - center);
            }
            row[b] = w;
            row_sum += w;
        }
        if (row_sum <= 0.0) {
            throw BadBankParams("mel_filterbank: filter " + std::to_string(j) +
                                " has no support (adjacent mel points collapse)");
        }
    }
    return bank;
}

// ---------------------------------------------------------------------------
// DCT and MFCC

/// Orthonormal DCT-II: c[k] = s(k) * sum_n x[n] cos(pi (n+1/2) k / M),
/// s(0) = sqrt(1/M), s(k>0) = sqrt(2/M).
inline std::vector<double> dct2_ortho(std::span<const double> x) {
    const std::size_t m = x.size();
    std::vector<double> c(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
        double acc = 0.0;
        for (std::size_t n = 0; n < m; ++n) {
            acc += x[n] * std::cos(std::numbers::pi * (static_cast<double>(n) + 0.5) *
                                   static_cast<double>(k) / static_cast<double>(m));
        }
        const double scale =
            (k == 0) ? std::sqrt(1.0 / static_cast<double>(m)) : std::sqrt(2.0 / static_cast<double>(m));
        c[k] = scale * acc;
    }
    return c;
}

/// Inverse of dct2_ortho (orthonormal DCT-III).
inline std::vector<double> dct3_ortho(std::span<const double> c) {
    const std::size_t m = c.size();
    std::vector<double> x(m, 0.0);
    for (std::size_t n = 0; n < m; ++n) {
        double acc = std::sqrt(1.0 / static_cast<double>(m)) * c[0];
        for (std::size_t k = 1; k < m; ++k) {
            acc += std::sqrt(2.0 / static_cast<double>(m)) * c[k] *
                   std::cos(std::numbers::pi * (static_cast<double>(n) + 0.5) *
                            static_cast<double>(k) / static_cast<double>(m));
        }
        x[n] = acc;
    }
    return x;
}

/// Per frame: filterbank energies -> ln (floored) -> orthonormal DCT-II,
/// keeping the first n_coeffs coefficients. Returns [n_frames x n_coeffs].
inline std::vector<double> mfcc(const PowerSpectra& power, const MelFilterbank& bank,
                                std::size_t n_coeffs) {
    if (bank.width != power.width) {
        throw DimensionMismatch("mfcc: filterbank width does not match spectra width");
    }
    if (n_coeffs > bank.n_filters) {
        throw DimensionMismatch("mfcc: n_coeffs exceeds filter count");
    }
    std::vector<double> out(power.n_frames * n_coeffs);
    std::vector<double> log_e(bank.n_filters);
    for (std::size_t f = 0; f < power.n_frames; ++f) {
        auto p = power.row(f);
        for (std::size_t j = 0; j < bank.n_filters; ++j) {
            auto w = bank.row(j);
            double e = 0.0;
            for (std::size_t b = 0; b < bank.width; ++b) {
                e += w[b] * p[b];
            }
            log_e[j] = std::log(std::max(e, kLogFloor));
        }
        auto c = dct2_ortho(log_e);
        std::copy(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(n_coeffs),
                  out.begin() + static_cast<std::ptrdiff_t>(f * n_coeffs));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Signal statistics

struct SignalStats {
    double avg_energy;
    double mean;
    double std_dev;
    double max;
    double min;
    double skewness;
    double kurtosis;  // excess
};

/// Whole-signal statistics: average energy, mean/std/max/min (population
/// divisor N), skewness m3/m2^1.5, excess kurtosis m4/m2^2 - 3.
inline SignalStats signal_stats(const audio::AudioClip& clip) {
    const auto& x = clip.samples;
    const std::size_t n = x.size();
    if (n < 2) {
        throw DataError("signal_stats: need at least 2 samples");
    }
    double sum = 0.0, energy = 0.0;
    double mx = x[0], mn = x[0];
    for (double v : x) {
        sum += v;
        energy += v * v;
        mx = std::max(mx, v);
        mn = std::min(mn, v);
    }
    const double mean = sum / static_cast<double>(n);
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : x) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= static_cast<double>(n);
    m3 /= static_cast<double>(n);
    m4 /= static_cast<double>(n);
    if (m2 == 0.0) {
        throw DegenerateSignal("signal_stats: zero variance");
    }
    SignalStats s;
    s.avg_energy = energy / static_cast<double>(n);
    s.mean = mean;
    s.std_dev = std::sqrt(m2);
    s.max = mx;
    s.min = mn;
    s.skewness = m3 / std::pow(m2, 1.5);
    s.kurtosis = m4 / (m2 * m2) - 3.0;
    return s;
}

// ---------------------------------------------------------------------------
// Pitch trend

enum class CoarseTrend { rising, falling, flat };

struct PitchTrend {
    CoarseTrend coarse;
    double segment_means[3];          // beginning / middle / ending thirds, Hz
    std::vector<double> fine_deltas;  // signed Hz, one per frame
};

/// Coarse trend over signal thirds plus per-frame dominant-frequency deltas.
/// The first frame copies the forward difference; flat when the spread of
/// segment means is below flatness_threshold or the middle third dominates.
inline PitchTrend pitch_trend(std::span<const double> dominant_freqs, double flatness_threshold) {
    const std::size_t n = dominant_freqs.size();
    if (n < 3) {
        throw TooFewFrames("pitch_trend: need at least 3 frames");
    }
    PitchTrend t;

    // near-equal thirds, remainder to the earlier thirds
    const std::size_t base = n / 3;
    const std::size_t rem = n % 3;
    std::size_t pos = 0;
    for (int seg = 0; seg < 3; ++seg) {
        const std::size_t len = base + (static_cast<std::size_t>(seg) < rem ? 1 : 0);
        double acc = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            acc += dominant_freqs[pos + i];
        }
        t.segment_means[seg] = acc / static_cast<double>(len);
        pos += len;
    }

    const double lo = std::min({t.segment_means[0], t.segment_means[1], t.segment_means[2]});
    const double hi = std::max({t.segment_means[0], t.segment_means[1], t.segment_means[2]});
    if (hi - lo < flatness_threshold) {
        t.coarse = CoarseTrend::flat;
    } else if (t.segment_means[2] >= t.segment_means[0] && t.segment_means[2] >= t.segment_means[1]) {
        t.coarse = CoarseTrend::rising;
    } else if (t.segment_means[0] >= t.segment_means[1] && t.segment_means[0] >= t.segment_means[2]) {
        t.coarse = CoarseTrend::falling;
    } else {
        t.coarse = CoarseTrend::flat;  // middle third dominates
    }

    t.fine_deltas.resize(n);
    t.fine_deltas[0] = dominant_freqs[1] - dominant_freqs[0];
    for (std::size_t i = 1; i < n; ++i) {
        t.fine_deltas[i] = dominant_freqs[i] - dominant_freqs[i - 1];
    }
    return t;
}

}  // namespace serm::dsp
