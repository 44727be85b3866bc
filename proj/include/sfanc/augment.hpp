#pragma once

#include <cmath>
#include <stdexcept>

#include "sfanc/resample.hpp"
#include "sfanc/signal.hpp"

namespace sfanc {

/// Stretches (factor > 1) or compresses (factor < 1) the clip duration by
/// resampling and relabeling the rate, so pitch moves by 1/factor.
inline Signal time_scale(const Signal& sig, double factor) {
    if (!(factor > 0.0)) {
        throw std::invalid_argument("time_scale: factor must be positive");
    }
    if (factor == 1.0) return sig;
    const int inner_rate = static_cast<int>(std::lround(sig.sample_rate * factor));
    if (inner_rate <= 0) throw std::invalid_argument("time_scale: factor too small");
    Signal out = resample(sig, inner_rate);
    out.sample_rate = sig.sample_rate;
    return out;
}

/// Shifts pitch by 2^(semitones/12) at (almost) constant duration. The
/// shift itself is a resample-and-relabel; the duration is then restored
/// by tiling the clip (pitch up leaves it short) or trimming it (pitch
/// down leaves it long). The wrap splice is harmless for the noise-like
/// material this feeds.
inline Signal pitch_shift(const Signal& sig, double semitones) {
    if (std::abs(semitones) > 24.0) {
        throw std::invalid_argument("pitch_shift: |semitones| must be <= 24");
    }
    if (semitones == 0.0 || sig.samples.empty()) return sig;
    const double ratio = std::pow(2.0, semitones / 12.0);
    Signal shifted = time_scale(sig, 1.0 / ratio);

    const std::size_t target = sig.samples.size();
    Signal out;
    out.sample_rate = sig.sample_rate;
    out.samples.reserve(target);
    if (shifted.samples.empty()) {
        out.samples.assign(target, 0.0);
        return out;
    }
    for (std::size_t i = 0; i < target; ++i) {
        out.samples.push_back(shifted.samples[i % shifted.samples.size()]);
    }
    return out;
}

}  // namespace sfanc
