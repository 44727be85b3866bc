#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "sfanc/fft.hpp"
#include "sfanc/signal.hpp"

namespace sfanc {

struct MelParams {
    int fft_size = 1024;
    int hop = 256;
    int n_mels = 64;
    double fmin_hz = 50.0;
    double fmax_hz = 0.0;  // 0 -> sample_rate / 2

    void validate(int sample_rate) const {
        if (!is_power_of_two(static_cast<std::size_t>(fft_size))) {
            throw std::invalid_argument("MelParams: fft_size must be a power of two");
        }
        if (hop <= 0 || n_mels < 1) {
            throw std::invalid_argument("MelParams: bad hop or band count");
        }
        const double fmax = fmax_hz > 0.0 ? fmax_hz : sample_rate / 2.0;
        if (!(fmin_hz >= 0.0) || !(fmin_hz < fmax) || fmax > sample_rate / 2.0) {
            throw std::invalid_argument("MelParams: bad frequency range");
        }
    }
};

/// Log-power Mel spectrogram, values in dB. Row-major by band:
/// value(band, frame) = values[band * n_frames + frame].
struct MelSpectrogram {
    int n_mels = 0;
    int n_frames = 0;
    std::vector<double> values;
    MelParams params;
    int sample_rate = 0;

    double at(int band, int frame) const {
        return values[static_cast<std::size_t>(band) * n_frames + frame];
    }
};

namespace detail {

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

/// Peak-one triangular filters on the Mel scale, returned as a dense
/// (n_mels x n_bins) weight matrix.
inline std::vector<double> mel_filterbank(const MelParams& p, int sample_rate) {
    const int n_bins = p.fft_size / 2 + 1;
    const double fmax = p.fmax_hz > 0.0 ? p.fmax_hz : sample_rate / 2.0;
    const double mel_lo = hz_to_mel(p.fmin_hz);
    const double mel_hi = hz_to_mel(fmax);
    std::vector<double> centers(static_cast<std::size_t>(p.n_mels) + 2);
    for (std::size_t i = 0; i < centers.size(); ++i) {
        centers[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                            (p.n_mels + 1));
    }
    std::vector<double> w(static_cast<std::size_t>(p.n_mels) * n_bins, 0.0);
    const double hz_per_bin = static_cast<double>(sample_rate) / p.fft_size;
    for (int m = 0; m < p.n_mels; ++m) {
        const double f0 = centers[static_cast<std::size_t>(m)];
        const double f1 = centers[static_cast<std::size_t>(m) + 1];
        const double f2 = centers[static_cast<std::size_t>(m) + 2];
        for (int k = 0; k < n_bins; ++k) {
            const double f = k * hz_per_bin;
            double g = 0.0;
            if (f > f0 && f < f1) {
                g = (f - f0) / (f1 - f0);
            } else if (f >= f1 && f < f2) {
                g = (f2 - f) / (f2 - f1);
            }
            w[static_cast<std::size_t>(m) * n_bins + k] = g;
        }
    }
    return w;
}

}  // namespace detail

/// Hann-windowed STFT -> power -> Mel filterbank -> 10 log10 with a
/// -120 dB floor. Scaling the input by c shifts every value by exactly
/// 20 log10(c) while above the floor.
inline MelSpectrogram mel_spectrogram(const Signal& sig, const MelParams& p) {
    p.validate(sig.sample_rate);
    const auto fft_size = static_cast<std::size_t>(p.fft_size);
    if (sig.samples.size() < fft_size) {
        throw std::invalid_argument("mel_spectrogram: signal shorter than fft_size");
    }
    const int n_frames =
        1 + static_cast<int>((sig.samples.size() - fft_size) /
                             static_cast<std::size_t>(p.hop));
    const int n_bins = p.fft_size / 2 + 1;
    const auto bank = detail::mel_filterbank(p, sig.sample_rate);

    std::vector<double> window(fft_size);
    for (std::size_t i = 0; i < fft_size; ++i) {
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi *
                                         static_cast<double>(i) /
                                         static_cast<double>(fft_size - 1));
    }

    constexpr double kPowerFloor = 1e-12;
    MelSpectrogram out;
    out.n_mels = p.n_mels;
    out.n_frames = n_frames;
    out.params = p;
    out.sample_rate = sig.sample_rate;
    out.values.assign(static_cast<std::size_t>(p.n_mels) * n_frames, 0.0);

    std::vector<double> frame(fft_size);
    for (int f = 0; f < n_frames; ++f) {
        const std::size_t off = static_cast<std::size_t>(f) * p.hop;
        for (std::size_t i = 0; i < fft_size; ++i) {
            frame[i] = sig.samples[off + i] * window[i];
        }
        const auto power = power_spectrum(frame);
        for (int m = 0; m < p.n_mels; ++m) {
            double acc = 0.0;
            const double* row = bank.data() + static_cast<std::size_t>(m) * n_bins;
            for (int k = 0; k < n_bins; ++k) acc += row[k] * power[static_cast<std::size_t>(k)];
            out.values[static_cast<std::size_t>(m) * n_frames + f] =
                10.0 * std::log10(std::max(acc, kPowerFloor));
        }
    }
    return out;
}

}  // namespace sfanc
