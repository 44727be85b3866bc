#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "sfanc/errors.hpp"
#include "sfanc/signal.hpp"

namespace sfanc {

/// Weight magnitude beyond which an adaptive run is declared divergent.
inline constexpr double kWeightOverflow = 1e6;

/// Adaptive control filter of length L. weights[0] multiplies the newest
/// reference sample.
struct ControlFilter {
    std::vector<double> weights;

    ControlFilter() = default;
    explicit ControlFilter(std::size_t length) : weights(length, 0.0) {}
    explicit ControlFilter(std::vector<double> w) : weights(std::move(w)) {}

    std::size_t length() const { return weights.size(); }
};

/// The acoustic plant: primary path P(z), true secondary path s(n), and
/// the secondary-path estimate used for reference filtering. The two
/// secondary responses are kept distinct even though the experiments set
/// them equal.
struct AncPlant {
    FirPath primary;
    FirPath secondary;
    FirPath secondary_estimate;

    void validate() const {
        if (primary.taps.empty() || secondary.taps.empty() ||
            secondary_estimate.taps.empty()) {
            throw std::invalid_argument("AncPlant: all paths must be non-empty");
        }
    }
};

/// Streaming state for one filtered-x run: the s-hat filter producing the
/// filtered reference, its last-L buffer, and the true-s filter applied
/// to the control output.
class FxState {
public:
    FxState(const AncPlant& plant, std::size_t filter_length)
        : shat_(plant.secondary_estimate),
          sec_(plant.secondary),
          xtilde_(filter_length, 0.0) {}

    /// Advance the filtered-reference stream by one sample.
    void push_reference(double x) {
        const double xt = shat_.step(x);
        for (std::size_t i = xtilde_.size() - 1; i > 0; --i) {
            xtilde_[i] = xtilde_[i - 1];
        }
        xtilde_[0] = xt;
    }

    /// Control output through the true secondary path.
    double propagate_output(double y) { return sec_.step(y); }

    std::span<const double> xtilde() const { return xtilde_; }

private:
    FirState shat_;
    FirState sec_;
    std::vector<double> xtilde_;  // newest first
};

namespace detail {

inline void check_step_inputs(const ControlFilter& w,
                              std::span<const double> x_buf, double d,
                              double mu) {
    if (x_buf.size() != w.length()) {
        throw std::invalid_argument("fxlms_step: reference buffer length != L");
    }
    if (!std::isfinite(x_buf[0]) || !std::isfinite(d) || !std::isfinite(mu)) {
        throw NumericError("fxlms_step: non-finite input");
    }
    if (mu < 0.0) throw std::invalid_argument("fxlms_step: negative step size");
}

inline void check_weights(const ControlFilter& w) {
    for (double t : w.weights) {
        if (!std::isfinite(t) || std::abs(t) > kWeightOverflow) {
            throw DivergenceError("adaptive weights exceeded overflow guard");
        }
    }
}

}  // namespace detail

/// One FxLMS iteration:
///   y(n) = w'x(n),  e(n) = d(n) - s(n)*y(n),  w += mu e(n) x~(n)
/// where x~(n) is the reference filtered through the secondary-path
/// estimate. x_buf holds the last L reference samples, newest first, and
/// must already include the current sample; aux must have been advanced
/// with push_reference for the same sample. Returns e(n).
inline double fxlms_step(ControlFilter& w, std::span<const double> x_buf,
                         double d, double mu, FxState& aux) {
    detail::check_step_inputs(w, x_buf, d, mu);
    const double y = dot(w.weights, x_buf);
    const double e = d - aux.propagate_output(y);
    if (!std::isfinite(e)) throw NumericError("fxlms_step: non-finite error");
    if (mu != 0.0) {
        const auto xt = aux.xtilde();
        for (std::size_t i = 0; i < w.length(); ++i) {
            w.weights[i] += mu * e * xt[i];
        }
        detail::check_weights(w);
    }
    return e;
}

/// FxNLMS: FxLMS with the step normalized by the filtered-reference
/// power, mu / (delta + x~'x~).
inline double fxnlms_step(ControlFilter& w, std::span<const double> x_buf,
                          double d, double mu, double delta, FxState& aux) {
    if (!(delta > 0.0)) throw std::invalid_argument("fxnlms_step: delta must be > 0");
    detail::check_step_inputs(w, x_buf, d, mu);
    const double y = dot(w.weights, x_buf);
    const double e = d - aux.propagate_output(y);
    if (!std::isfinite(e)) throw NumericError("fxnlms_step: non-finite error");
    if (mu != 0.0) {
        const auto xt = aux.xtilde();
        const double power = dot(xt, xt);
        const double step = mu / (delta + power);
        for (std::size_t i = 0; i < w.length(); ++i) {
            w.weights[i] += step * e * xt[i];
        }
        detail::check_weights(w);
    }
    return e;
}

// ---------------------------------------------------------------------------
// Averaged noise reduction
// ---------------------------------------------------------------------------

/// Exponential magnitude smoothers for the residual and the disturbance.
struct AnrState {
    double a_e = 0.0;
    double a_d = 0.0;
    double lambda = 0.999;
    double floor_eps = 1e-12;
};

/// Updates the smoothers and returns 20 log10(A_e/A_d), or nullopt while
/// the disturbance estimate is still below the floor. A_e is floored so
/// the value bottoms out rather than reaching -inf.
inline std::optional<double> anr_update(AnrState& st, double e, double d) {
    if (!(st.lambda > 0.0 && st.lambda < 1.0)) {
        throw std::invalid_argument("anr_update: lambda must be in (0,1)");
    }
    st.a_e = st.lambda * st.a_e + (1.0 - st.lambda) * std::abs(e);
    st.a_d = st.lambda * st.a_d + (1.0 - st.lambda) * std::abs(d);
    if (st.a_d < st.floor_eps) return std::nullopt;
    return 20.0 * std::log10(std::max(st.a_e, st.floor_eps) / st.a_d);
}

/// One record of a cancellation run. anr_db is NaN while undefined.
struct AnrSample {
    std::size_t n;
    double e;
    double d;
    double anr_db;
};

struct AnrTrace {
    std::vector<AnrSample> rows;
    std::size_t decimation = 1;
};

// ---------------------------------------------------------------------------
// Whole-signal cancellation runs
// ---------------------------------------------------------------------------

enum class Algo { fxlms, fxnlms, frozen };

struct CancellationConfig {
    Algo algo = Algo::fxlms;
    double mu = 0.0;
    double delta = 1e-3;
    double anr_lambda = 0.999;
    std::size_t decimation = 1;
};

struct CancellationResult {
    AnrTrace trace;
    ControlFilter final_filter;
    Signal residual;
    /// Sample index at which the weight guard tripped; the trace and the
    /// residual stop there. Empty on a clean run.
    std::optional<std::size_t> diverged_at;
};

/// Plays the reference through the primary path to produce the
/// disturbance, applies the selected algorithm sample by sample, and
/// records the ANR trace. Frozen mode emits anti-noise with w0 and never
/// updates.
inline CancellationResult run_cancellation(const Signal& reference,
                                           const AncPlant& plant,
                                           const ControlFilter& w0,
                                           const CancellationConfig& cfg) {
    plant.validate();
    if (reference.samples.empty()) {
        throw std::invalid_argument("run_cancellation: empty reference");
    }
    if (w0.length() == 0) {
        throw std::invalid_argument("run_cancellation: empty control filter");
    }
    const std::size_t decim = cfg.decimation == 0 ? 1 : cfg.decimation;

    CancellationResult res;
    res.final_filter = w0;
    res.residual.sample_rate = reference.sample_rate;
    res.residual.samples.reserve(reference.size());
    res.trace.decimation = decim;

    FirState primary(plant.primary);
    FxState fx(plant, w0.length());
    std::vector<double> x_buf(w0.length(), 0.0);
    AnrState anr;
    anr.lambda = cfg.anr_lambda;

    for (std::size_t n = 0; n < reference.size(); ++n) {
        const double x = reference.samples[n];
        const double d = primary.step(x);
        for (std::size_t i = x_buf.size() - 1; i > 0; --i) x_buf[i] = x_buf[i - 1];
        x_buf[0] = x;
        fx.push_reference(x);

        double e = 0.0;
        try {
            switch (cfg.algo) {
                case Algo::fxlms:
                    e = fxlms_step(res.final_filter, x_buf, d, cfg.mu, fx);
                    break;
                case Algo::fxnlms:
                    e = fxnlms_step(res.final_filter, x_buf, d, cfg.mu, cfg.delta, fx);
                    break;
                case Algo::frozen: {
                    const double y = dot(res.final_filter.weights, x_buf);
                    e = d - fx.propagate_output(y);
                    break;
                }
            }
        } catch (const DivergenceError&) {
            res.diverged_at = n;
            return res;
        }

        res.residual.samples.push_back(e);
        const auto a = anr_update(anr, e, d);
        if (n % decim == 0) {
            res.trace.rows.push_back(
                {n, e, d, a ? *a : std::numeric_limits<double>::quiet_NaN()});
        }
    }
    return res;
}

}  // namespace sfanc
