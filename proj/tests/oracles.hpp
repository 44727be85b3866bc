#pragma once

// Test-only oracles, written independently of the library code paths they
// check: a recursive FFT for spectral assertions and a brute-force
// convolution.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "sfanc/signal.hpp"

namespace oracle {

/// Recursive radix-2 FFT (independent of the library's iterative one).
inline std::vector<std::complex<double>> fft(std::vector<std::complex<double>> a) {
    const std::size_t n = a.size();
    if (n <= 1) return a;
    std::vector<std::complex<double>> even(n / 2), odd(n / 2);
    for (std::size_t i = 0; i < n / 2; ++i) {
        even[i] = a[2 * i];
        odd[i] = a[2 * i + 1];
    }
    even = fft(std::move(even));
    odd = fft(std::move(odd));
    for (std::size_t k = 0; k < n / 2; ++k) {
        const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) /
                           static_cast<double>(n);
        const auto t = std::polar(1.0, ang) * odd[k];
        a[k] = even[k] + t;
        a[k + n / 2] = even[k] - t;
    }
    return a;
}

inline std::vector<double> magnitude_spectrum(const std::vector<double>& x) {
    std::size_t n = 1;
    while (n < x.size()) n <<= 1;
    std::vector<std::complex<double>> buf(n, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) buf[i] = x[i];
    buf = fft(std::move(buf));
    std::vector<double> mag(n / 2 + 1);
    for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::abs(buf[k]);
    return mag;
}

/// Dominant frequency in Hz via FFT peak plus parabolic interpolation.
inline double dominant_frequency(const sfanc::Signal& sig) {
    const auto mag = magnitude_spectrum(sig.samples);
    std::size_t peak = 1;
    for (std::size_t k = 1; k + 1 < mag.size(); ++k) {
        if (mag[k] > mag[peak]) peak = k;
    }
    double frac = 0.0;
    if (peak > 0 && peak + 1 < mag.size()) {
        const double a = mag[peak - 1], b = mag[peak], c = mag[peak + 1];
        const double denom = a - 2.0 * b + c;
        if (std::abs(denom) > 1e-12) frac = 0.5 * (a - c) / denom;
    }
    const auto n_fft = 2 * (mag.size() - 1);
    return (static_cast<double>(peak) + frac) * sig.sample_rate /
           static_cast<double>(n_fft);
}

/// Fraction of spectral energy inside [lo, hi] Hz.
inline double band_energy_fraction(const sfanc::Signal& sig, double lo, double hi) {
    const auto mag = magnitude_spectrum(sig.samples);
    const auto n_fft = 2 * (mag.size() - 1);
    const double hz_per_bin = static_cast<double>(sig.sample_rate) /
                              static_cast<double>(n_fft);
    double total = 0.0, in_band = 0.0;
    for (std::size_t k = 0; k < mag.size(); ++k) {
        const double p = mag[k] * mag[k];
        total += p;
        const double f = static_cast<double>(k) * hz_per_bin;
        if (f >= lo && f <= hi) in_band += p;
    }
    return total > 0.0 ? in_band / total : 0.0;
}

/// O(n*m) double-loop convolution.
inline std::vector<double> convolve_naive(const std::vector<double>& a,
                                          const std::vector<double>& b) {
    std::vector<double> out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            out[i + j] += a[i] * b[j];
        }
    }
    return out;
}

inline sfanc::Signal tone(double freq_hz, double duration_s, int rate,
                          double amplitude = 1.0) {
    sfanc::Signal sig;
    sig.sample_rate = rate;
    const auto n = static_cast<std::size_t>(std::llround(duration_s * rate));
    sig.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        sig.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * freq_hz *
                                              static_cast<double>(i) / rate);
    }
    return sig;
}

}  // namespace oracle
