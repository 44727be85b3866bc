#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sfanc/errors.hpp"

namespace sfanc {

/// Mono audio buffer. Amplitudes are dimensionless, nominally in [-1, 1].
struct Signal {
    std::vector<double> samples;
    int sample_rate = 16000;

    std::size_t size() const { return samples.size(); }
    double duration_s() const {
        return static_cast<double>(samples.size()) / sample_rate;
    }
};

/// FIR impulse response. Models the acoustic paths P(z) and S(z) as well
/// as the secondary-path estimate used for reference filtering.
struct FirPath {
    std::vector<double> taps;

    FirPath() = default;
    explicit FirPath(std::vector<double> t) : taps(std::move(t)) {}

    std::size_t size() const { return taps.size(); }
};

inline bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

/// Full linear convolution, length |a| + |b| - 1.
inline std::vector<double> convolve(std::span<const double> a, const FirPath& b) {
    if (a.empty() || b.taps.empty()) {
        throw std::invalid_argument("convolve: empty input");
    }
    if (!all_finite(a) || !all_finite(b.taps)) {
        throw std::invalid_argument("convolve: non-finite input");
    }
    std::vector<double> out(a.size() + b.taps.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double ai = a[i];
        for (std::size_t j = 0; j < b.taps.size(); ++j) {
            out[i + j] += ai * b.taps[j];
        }
    }
    return out;
}

inline std::vector<double> convolve(const Signal& a, const FirPath& b) {
    return convolve(std::span<const double>(a.samples), b);
}

/// Streaming FIR evaluator. Delay line starts at zero; index 0 of the
/// conceptual delay line is the most recent input.
class FirState {
public:
    explicit FirState(FirPath path)
        : path_(std::move(path)), delay_(path_.taps.size(), 0.0) {
        if (path_.taps.empty()) {
            throw std::invalid_argument("FirState: empty path");
        }
    }

    /// Push one input sample, return the filtered output. The sequence of
    /// outputs equals the first len(input) samples of convolve().
    double step(double x) {
        if (!std::isfinite(x)) {
            throw std::invalid_argument("FirState::step: non-finite input");
        }
        const std::size_t n = delay_.size();
        head_ = (head_ == 0) ? n - 1 : head_ - 1;
        delay_[head_] = x;
        double acc = 0.0;
        std::size_t i = head_;
        for (std::size_t q = 0; q < n; ++q) {
            acc += path_.taps[q] * delay_[i];
            if (++i == n) i = 0;
        }
        return acc;
    }

    void reset() {
        std::fill(delay_.begin(), delay_.end(), 0.0);
        head_ = 0;
    }

    const FirPath& path() const { return path_; }

private:
    FirPath path_;
    std::vector<double> delay_;
    std::size_t head_ = 0;
};

inline double fir_step(FirState& state, double x) { return state.step(x); }

inline double rms(std::span<const double> v) {
    if (v.empty()) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc / static_cast<double>(v.size()));
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    const std::size_t n = a.size() < b.size() ? a.size() : b.size();
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

}  // namespace sfanc
