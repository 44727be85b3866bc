#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "sfanc/signal.hpp"

namespace sfanc {

namespace detail {

/// Zeroth-order modified Bessel function of the first kind (power series).
inline double bessel_i0(double x) {
    const double half = x * 0.5;
    double term = 1.0, sum = 1.0;
    for (int k = 1; k < 64; ++k) {
        term *= (half / k) * (half / k);
        sum += term;
        if (term < sum * 1e-17) break;
    }
    return sum;
}

inline double sinc(double x) {
    if (std::abs(x) < 1e-12) return 1.0;
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

/// Kaiser window over r in [0, 1], tabulated once and linearly
/// interpolated. beta ~ 7.86 gives about 80 dB of sidelobe rejection.
class KaiserTable {
public:
    static constexpr double kBeta = 7.857;

    KaiserTable() {
        const double i0b = bessel_i0(kBeta);
        for (std::size_t i = 0; i < kSize; ++i) {
            const double r = static_cast<double>(i) / (kSize - 1);
            table_[i] = bessel_i0(kBeta * std::sqrt(1.0 - r * r)) / i0b;
        }
    }

    double operator()(double r) const {
        r = std::abs(r);
        if (r >= 1.0) return 0.0;
        const double pos = r * (kSize - 1);
        const auto i = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(i);
        return table_[i] + frac * (table_[i + 1] - table_[i]);
    }

private:
    static constexpr std::size_t kSize = 8192;
    std::array<double, kSize + 1> table_{};
};

inline const KaiserTable& kaiser_table() {
    static const KaiserTable t;
    return t;
}

}  // namespace detail

/// Windowed-sinc resampling to a new rate. The cutoff tracks the lower of
/// the two Nyquist limits so downsampling does not alias.
inline Signal resample(const Signal& sig, int new_rate) {
    if (new_rate <= 0) {
        throw std::invalid_argument("resample: rate must be positive");
    }
    if (new_rate == sig.sample_rate || sig.samples.empty()) {
        Signal out = sig;
        out.sample_rate = new_rate;
        return out;
    }

    const double old_rate = static_cast<double>(sig.sample_rate);
    const double ratio = old_rate / static_cast<double>(new_rate);
    const std::size_t n_in = sig.samples.size();
    const auto n_out = static_cast<std::size_t>(
        std::llround(static_cast<double>(n_in) / ratio));

    // Cutoff as a fraction of the input Nyquist; < 1 when downsampling.
    const double scale = std::min(1.0, 1.0 / ratio);
    const double half_width = 24.0 / scale;  // in input samples
    const auto& win = detail::kaiser_table();

    Signal out;
    out.sample_rate = new_rate;
    out.samples.resize(n_out);
    for (std::size_t m = 0; m < n_out; ++m) {
        const double p = static_cast<double>(m) * ratio;
        const auto k_lo = static_cast<long long>(std::ceil(p - half_width));
        const auto k_hi = static_cast<long long>(std::floor(p + half_width));
        double acc = 0.0;
        for (long long k = std::max(0LL, k_lo);
             k <= std::min(static_cast<long long>(n_in) - 1, k_hi); ++k) {
            const double t = p - static_cast<double>(k);
            acc += sig.samples[static_cast<std::size_t>(k)] * scale *
                   detail::sinc(scale * t) * win(t / half_width);
        }
        out.samples[m] = acc;
    }
    return out;
}

}  // namespace sfanc
