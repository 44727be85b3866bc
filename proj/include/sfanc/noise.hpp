#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfanc/rng.hpp"
#include "sfanc/signal.hpp"

namespace sfanc {

/// Generator spec for one member of a synthetic noise family. A category
/// is a band of the spectrum; each subclass occupies a reproducible
/// sub-band of it with its own amplitude-modulation rate, so subclasses
/// are homogeneous within a category but distinguishable across
/// categories. `subclass` selects the family member; the seed passed to
/// synth_noise selects the realization.
struct CategorySpec {
    std::string label;
    double band_low_hz = 500.0;
    double band_high_hz = 800.0;
    int subclass = 0;
    int sample_rate = 16000;
    double jitter_frac = 0.25;  // subclass center jitter, fraction of bandwidth
    double am_depth = 0.5;      // subclass amplitude-modulation depth

    CategorySpec with_subclass(int s) const {
        CategorySpec c = *this;
        c.subclass = s;
        return c;
    }
};

namespace detail {

struct SubclassParams {
    double f_lo, f_hi;   // sub-band edges, Hz
    double am_rate_hz;   // envelope rate
};

/// Subclass parameters are a pure function of (label, subclass), not of
/// the realization seed: every clip of a subclass shares its sub-band.
inline SubclassParams subclass_params(const CategorySpec& spec) {
    if (!(spec.band_low_hz >= 0.0) || !(spec.band_high_hz > spec.band_low_hz) ||
        spec.band_high_hz > spec.sample_rate / 2.0) {
        throw std::invalid_argument("CategorySpec: bad band edges");
    }
    Rng r(mix64(fnv1a(spec.label) ^ mix64(static_cast<std::uint64_t>(spec.subclass))));
    const double bw = spec.band_high_hz - spec.band_low_hz;
    const double width = bw * (0.55 + 0.25 * r.uniform());
    const double max_off = (bw - width) / 2.0;
    const double off =
        (2.0 * r.uniform() - 1.0) * std::min(spec.jitter_frac * bw, max_off);
    const double center = (spec.band_low_hz + spec.band_high_hz) / 2.0 + off;
    SubclassParams p;
    p.f_lo = center - width / 2.0;
    p.f_hi = center + width / 2.0;
    p.am_rate_hz = 0.8 + 5.0 * r.uniform();
    return p;
}

}  // namespace detail

/// Band-limited pseudo-random noise: a dense sum of random-phase
/// sinusoids confined to the subclass's sub-band, shaped by a slow AM
/// envelope and normalized to RMS 0.1. Bit-identical for equal
/// (spec, seed).
inline Signal synth_noise(const CategorySpec& spec, double duration_s,
                          std::uint64_t seed) {
    if (!(duration_s > 0.0)) {
        throw std::invalid_argument("synth_noise: duration must be positive");
    }
    const auto p = detail::subclass_params(spec);
    const auto n = static_cast<std::size_t>(
        std::llround(duration_s * spec.sample_rate));

    constexpr int kComponents = 48;
    Rng r(mix64(seed) ^ fnv1a(spec.label) ^
          mix64(0x5eedULL + static_cast<std::uint64_t>(spec.subclass)));
    // Each component runs as a complex phasor recurrence; one rotation per
    // sample instead of a sin() call.
    std::vector<double> zr(kComponents), zi(kComponents);
    std::vector<double> cr(kComponents), ci(kComponents);
    const double dt = 1.0 / spec.sample_rate;
    for (int b = 0; b < kComponents; ++b) {
        const double f = r.uniform(p.f_lo, p.f_hi);
        const double phase = r.uniform(0.0, 2.0 * std::numbers::pi);
        zr[b] = std::cos(phase);
        zi[b] = std::sin(phase);
        const double w = 2.0 * std::numbers::pi * f * dt;
        cr[b] = std::cos(w);
        ci[b] = std::sin(w);
    }
    const double am_phase = r.uniform(0.0, 2.0 * std::numbers::pi);

    Signal out;
    out.sample_rate = spec.sample_rate;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int b = 0; b < kComponents; ++b) {
            acc += zi[b];
            const double nr = zr[b] * cr[b] - zi[b] * ci[b];
            zi[b] = zr[b] * ci[b] + zi[b] * cr[b];
            zr[b] = nr;
        }
        const double t = static_cast<double>(i) * dt;
        const double env =
            1.0 + spec.am_depth *
                      std::sin(2.0 * std::numbers::pi * p.am_rate_hz * t + am_phase);
        out.samples[i] = acc * env;
    }
    const double level = rms(out.samples);
    if (level > 0.0) {
        const double g = 0.1 / level;
        for (double& x : out.samples) x *= g;
    }
    return out;
}

/// Random FIR path with i.i.d. normal(0, variance) taps.
inline FirPath gaussian_fir(std::size_t length, double variance,
                            std::uint64_t seed) {
    if (length == 0) {
        throw std::invalid_argument("gaussian_fir: length must be >= 1");
    }
    if (!(variance > 0.0)) {
        throw std::invalid_argument("gaussian_fir: variance must be positive");
    }
    Rng r(seed);
    const double sd = std::sqrt(variance);
    FirPath path;
    path.taps.resize(length);
    for (auto& t : path.taps) t = r.normal(0.0, sd);
    return path;
}

}  // namespace sfanc
