#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfanc/adaptive.hpp"
#include "sfanc/classifier.hpp"
#include "sfanc/database.hpp"
#include "sfanc/errors.hpp"
#include "sfanc/io.hpp"
#include "sfanc/signal.hpp"
#include "sfanc/wav.hpp"

namespace sfanc {

enum class Mode { fxlms_baseline, sfanc_frozen, sfanc_fxnlms, maml_fxlms };

inline const char* mode_name(Mode m) {
    switch (m) {
        case Mode::fxlms_baseline: return "fxlms_baseline";
        case Mode::sfanc_frozen: return "sfanc_frozen";
        case Mode::sfanc_fxnlms: return "sfanc_fxnlms";
        case Mode::maml_fxlms: return "maml_fxlms";
    }
    return "?";
}

inline Mode mode_from_name(const std::string& s) {
    if (s == "fxlms_baseline") return Mode::fxlms_baseline;
    if (s == "sfanc_frozen") return Mode::sfanc_frozen;
    if (s == "sfanc_fxnlms") return Mode::sfanc_fxnlms;
    if (s == "maml_fxlms") return Mode::maml_fxlms;
    throw ConfigError("unknown mode: " + s);
}

struct SessionConfig {
    double acquisition_s = 2.5;
    AncPlant plant;
    double mu = 0.02;
    double delta = 1e-3;
    double anr_lambda = 0.999;
    Mode mode = Mode::fxlms_baseline;
    /// Database with meta-pretrained filters (maml_fxlms mode).
    const FilterDatabase* database = nullptr;
    /// Database with single-segment pretrained filters for the sfanc
    /// baselines; falls back to `database` when unset.
    const FilterDatabase* sfanc_database = nullptr;
    const ClassifierModel* classifier = nullptr;
    /// When set, run_session selects this label without classifying.
    std::optional<std::string> oracle_label;
    /// Nonstationary runs: trust the segment labels instead of the
    /// classifier (still honoring the acquisition delay).
    bool oracle_labels = false;
    std::size_t filter_length = 10;  // fxlms_baseline only; others take the db length
    std::size_t decimation = 1;
    std::uint64_t seed = 0;
    double reclassify_every_s = 0.0;  // 0 -> acquisition_s
    /// Per-mode step size overrides used by compare().
    std::map<Mode, double> mu_by_mode;

    double mu_for(Mode m) const {
        const auto it = mu_by_mode.find(m);
        return it == mu_by_mode.end() ? mu : it->second;
    }
};

struct PhaseMark {
    std::size_t n;
    std::string label;
    double score;
};

struct SessionReport {
    std::string chosen_label;
    double chosen_score = 0.0;
    /// First sample where the control filter is active; 0 for the
    /// baseline, the acquisition length for the SFANC modes.
    std::size_t selection_index = 0;
    AnrTrace trace;
    Signal residual;
    ControlFilter final_filter;
    std::optional<std::size_t> diverged_at;
    std::vector<PhaseMark> phases;
    std::optional<std::size_t> switch_index;
};

struct LabeledSignal {
    Signal signal;
    std::string label;
};

namespace detail {

inline const FilterDatabase* database_for(const SessionConfig& cfg, Mode m) {
    if (m == Mode::maml_fxlms) return cfg.database;
    return cfg.sfanc_database ? cfg.sfanc_database : cfg.database;
}

/// Shared sample loop for single-phase and nonstationary sessions.
/// `label_at(n)` is consulted at classification instants and returns the
/// (label, score) the selector should act on.
inline SessionReport run_engine(
    const Signal& reference, const SessionConfig& cfg, bool reclassify,
    const std::function<std::pair<std::string, double>(std::size_t)>& label_at) {
    cfg.plant.validate();
    if (reference.samples.empty()) {
        throw std::invalid_argument("run_session: empty reference");
    }
    const bool needs_selection = cfg.mode != Mode::fxlms_baseline;
    const auto acq = static_cast<std::size_t>(
        std::llround(cfg.acquisition_s * reference.sample_rate));
    if (needs_selection && reference.samples.size() <= acq) {
        throw std::invalid_argument(
            "run_session: reference shorter than the acquisition window");
    }

    const FilterDatabase* db = database_for(cfg, cfg.mode);
    if (needs_selection && (db == nullptr || db->entries.empty())) {
        throw std::invalid_argument("run_session: mode requires a filter database");
    }
    const std::size_t L = needs_selection ? db->filter_length() : cfg.filter_length;
    if (L == 0) throw std::invalid_argument("run_session: zero filter length");

    const double mu = cfg.mu_for(cfg.mode);
    const std::size_t decim = cfg.decimation == 0 ? 1 : cfg.decimation;
    const std::size_t recheck = [&] {
        const double every =
            cfg.reclassify_every_s > 0.0 ? cfg.reclassify_every_s : cfg.acquisition_s;
        const auto r = static_cast<std::size_t>(
            std::llround(every * reference.sample_rate));
        return r == 0 ? 1 : r;
    }();

    SessionReport rep;
    rep.selection_index = needs_selection ? acq : 0;
    rep.residual.sample_rate = reference.sample_rate;
    rep.residual.samples.reserve(reference.size());
    rep.trace.decimation = decim;
    rep.final_filter = ControlFilter(L);

    FirState primary(cfg.plant.primary);
    FxState fx(cfg.plant, L);
    std::vector<double> x_buf(L, 0.0);
    AnrState anr;
    anr.lambda = cfg.anr_lambda;

    auto select = [&](std::size_t n) {
        const auto [label, score] = label_at(n);
        const FilterEntry* entry = db->find(label);
        if (entry == nullptr) {
            throw DataError("run_session: no database filter for category '" +
                            label + "'");
        }
        if (rep.phases.empty()) {
            rep.chosen_label = label;
            rep.chosen_score = score;
            rep.final_filter = entry->filter;
            rep.phases.push_back({n, label, score});
        } else if (label != rep.phases.back().label) {
            rep.final_filter = entry->filter;
            rep.phases.push_back({n, label, score});
        }
    };

    for (std::size_t n = 0; n < reference.size(); ++n) {
        const double x = reference.samples[n];
        const double d = primary.step(x);
        for (std::size_t i = L - 1; i > 0; --i) x_buf[i] = x_buf[i - 1];
        x_buf[0] = x;
        fx.push_reference(x);

        double e;
        if (needs_selection && n < acq) {
            // Acquisition: no anti-noise yet, but keep the output-path
            // state moving so the phases stay contiguous.
            fx.propagate_output(0.0);
            e = d;
        } else {
            if (needs_selection && n == acq) select(n);
            if (needs_selection && reclassify && n > acq && n >= recheck &&
                (n % recheck) == 0) {
                select(n);
            }
            try {
                switch (cfg.mode) {
                    case Mode::fxlms_baseline:
                    case Mode::maml_fxlms:
                        e = fxlms_step(rep.final_filter, x_buf, d, mu, fx);
                        break;
                    case Mode::sfanc_fxnlms:
                        e = fxnlms_step(rep.final_filter, x_buf, d, mu, cfg.delta, fx);
                        break;
                    case Mode::sfanc_frozen: {
                        const double y = dot(rep.final_filter.weights, x_buf);
                        e = d - fx.propagate_output(y);
                        break;
                    }
                    default:
                        throw std::logic_error("unreachable");
                }
            } catch (const DivergenceError&) {
                rep.diverged_at = n;
                return rep;
            }
        }

        rep.residual.samples.push_back(e);
        const auto a = anr_update(anr, e, d);
        if (n % decim == 0) {
            rep.trace.rows.push_back(
                {n, e, d, a ? *a : std::numeric_limits<double>::quiet_NaN()});
        }
    }
    return rep;
}

}  // namespace detail

/// One SFANC session: buffer the acquisition window while emitting no
/// anti-noise, classify it, select the matching pretrained filter, and
/// cancel with the mode's algorithm. The baseline mode adapts from zero
/// starting at sample 0.
inline SessionReport run_session(const Signal& reference, const SessionConfig& cfg) {
    const auto acq = static_cast<std::size_t>(
        std::llround(cfg.acquisition_s * reference.sample_rate));
    auto label_at = [&](std::size_t n) -> std::pair<std::string, double> {
        if (cfg.oracle_label) return {*cfg.oracle_label, 1.0};
        if (cfg.classifier == nullptr) {
            throw std::invalid_argument(
                "run_session: mode requires a classifier or an oracle label");
        }
        Signal frame;
        frame.sample_rate = reference.sample_rate;
        frame.samples.assign(
            reference.samples.begin() + static_cast<std::ptrdiff_t>(n - acq),
            reference.samples.begin() + static_cast<std::ptrdiff_t>(n));
        return classify(*cfg.classifier, frame);
    };
    return detail::run_engine(reference, cfg, /*reclassify=*/false, label_at);
}

/// Nonstationary scenario: segment A plays until the switch time, then
/// segment B. Selection re-runs on a fixed schedule (every acquisition
/// window by default) over the trailing window and swaps filters when the
/// label changes; adaptation continues from the newly selected filter.
inline SessionReport run_nonstationary(const LabeledSignal& first,
                                       const LabeledSignal& second,
                                       double switch_time_s,
                                       const SessionConfig& cfg) {
    if (first.signal.sample_rate != second.signal.sample_rate) {
        throw std::invalid_argument("run_nonstationary: sample rates differ");
    }
    const int fs = first.signal.sample_rate;
    const auto switch_index =
        static_cast<std::size_t>(std::llround(switch_time_s * fs));
    if (switch_index == 0 || switch_index > first.signal.samples.size()) {
        throw std::invalid_argument(
            "run_nonstationary: switch time outside the first segment");
    }

    Signal reference;
    reference.sample_rate = fs;
    reference.samples.assign(first.signal.samples.begin(),
                             first.signal.samples.begin() +
                                 static_cast<std::ptrdiff_t>(switch_index));
    reference.samples.insert(reference.samples.end(),
                             second.signal.samples.begin(),
                             second.signal.samples.end());

    const auto acq = static_cast<std::size_t>(std::llround(cfg.acquisition_s * fs));
    auto label_at = [&](std::size_t n) -> std::pair<std::string, double> {
        if (cfg.oracle_labels) {
            return {n - 1 < switch_index ? first.label : second.label, 1.0};
        }
        if (cfg.classifier == nullptr) {
            throw std::invalid_argument(
                "run_nonstationary: mode requires a classifier or oracle labels");
        }
        Signal frame;
        frame.sample_rate = fs;
        frame.samples.assign(
            reference.samples.begin() + static_cast<std::ptrdiff_t>(n - acq),
            reference.samples.begin() + static_cast<std::ptrdiff_t>(n));
        return classify(*cfg.classifier, frame);
    };

    auto rep = detail::run_engine(reference, cfg, /*reclassify=*/true, label_at);
    rep.switch_index = switch_index;
    return rep;
}

// ---------------------------------------------------------------------------
// Mode comparison
// ---------------------------------------------------------------------------

struct CompareRow {
    Mode mode;
    /// Samples from the mode's adaptation start to the first trace row at
    /// or below the threshold; empty if never reached.
    std::optional<std::size_t> time_to_threshold;
    /// Mean ANR over the final tenth of the trace.
    double steady_state_anr_db = 0.0;
    std::optional<std::size_t> diverged_at;
};

namespace detail {

inline std::optional<std::size_t> first_at_or_below(const AnrTrace& trace,
                                                    std::size_t from,
                                                    double threshold_db) {
    for (const auto& r : trace.rows) {
        if (r.n >= from && !std::isnan(r.anr_db) && r.anr_db <= threshold_db) {
            return r.n;
        }
    }
    return std::nullopt;
}

inline double steady_state_anr(const AnrTrace& trace) {
    if (trace.rows.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t start = trace.rows.size() - trace.rows.size() / 10 - 1;
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = start; i < trace.rows.size(); ++i) {
        if (!std::isnan(trace.rows[i].anr_db)) {
            acc += trace.rows[i].anr_db;
            ++count;
        }
    }
    return count == 0 ? std::numeric_limits<double>::quiet_NaN()
                      : acc / static_cast<double>(count);
}

}  // namespace detail

/// Summary of one finished session: threshold time relative to the
/// mode's own adaptation start, and the tail-average ANR.
inline CompareRow summarize_session(Mode mode, const SessionReport& rep,
                                    double threshold_db) {
    CompareRow row;
    row.mode = mode;
    row.diverged_at = rep.diverged_at;
    const auto hit =
        detail::first_at_or_below(rep.trace, rep.selection_index, threshold_db);
    if (hit) row.time_to_threshold = *hit - rep.selection_index;
    row.steady_state_anr_db = detail::steady_state_anr(rep.trace);
    return row;
}

/// Runs every mode on the identical reference and summarizes
/// time-to-threshold (relative to each mode's own adaptation start) and
/// steady-state ANR.
inline std::vector<CompareRow> compare(const std::vector<Mode>& modes,
                                       const Signal& reference,
                                       const SessionConfig& base,
                                       double threshold_db = -10.0) {
    if (modes.size() < 2) {
        throw std::invalid_argument("compare: need at least two modes");
    }
    std::vector<CompareRow> rows;
    for (Mode m : modes) {
        SessionConfig cfg = base;
        cfg.mode = m;
        rows.push_back(summarize_session(m, run_session(reference, cfg), threshold_db));
    }
    return rows;
}

struct NonstationaryRow {
    Mode mode;
    /// Samples from the category switch until the smoothed ANR is back at
    /// or below the threshold (0 when it never rose above it).
    std::optional<std::size_t> recovery_samples;
    double post_switch_steady_anr_db = 0.0;
    std::optional<std::size_t> diverged_at;
};

inline NonstationaryRow summarize_nonstationary(Mode mode,
                                                const SessionReport& rep,
                                                double threshold_db) {
    NonstationaryRow row;
    row.mode = mode;
    row.diverged_at = rep.diverged_at;
    const std::size_t sw = rep.switch_index.value_or(0);

    // Find the post-switch disruption, then the return to threshold.
    std::optional<std::size_t> disrupted;
    for (const auto& r : rep.trace.rows) {
        if (r.n >= sw && !std::isnan(r.anr_db) && r.anr_db > threshold_db) {
            disrupted = r.n;
            break;
        }
    }
    if (!disrupted) {
        row.recovery_samples = 0;
    } else {
        const auto back =
            detail::first_at_or_below(rep.trace, *disrupted, threshold_db);
        if (back) row.recovery_samples = *back - sw;
    }

    double acc = 0.0;
    std::size_t count = 0;
    const std::size_t tail_from =
        rep.trace.rows.empty()
            ? 0
            : rep.trace.rows.back().n - (rep.trace.rows.back().n - sw) / 10;
    for (const auto& r : rep.trace.rows) {
        if (r.n >= tail_from && !std::isnan(r.anr_db)) {
            acc += r.anr_db;
            ++count;
        }
    }
    row.post_switch_steady_anr_db =
        count == 0 ? std::numeric_limits<double>::quiet_NaN()
                   : acc / static_cast<double>(count);
    return row;
}

inline std::vector<NonstationaryRow> compare_nonstationary(
    const std::vector<Mode>& modes, const LabeledSignal& first,
    const LabeledSignal& second, double switch_time_s, const SessionConfig& base,
    double threshold_db = -10.0) {
    std::vector<NonstationaryRow> rows;
    for (Mode m : modes) {
        SessionConfig cfg = base;
        cfg.mode = m;
        rows.push_back(summarize_nonstationary(
            m, run_nonstationary(first, second, switch_time_s, cfg), threshold_db));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

inline std::string trace_to_csv(const AnrTrace& trace) {
    std::string out = "n,e,d,anr_db\n";
    for (const auto& r : trace.rows) {
        out += std::to_string(r.n);
        out += ',';
        out += fmt_double(r.e);
        out += ',';
        out += fmt_double(r.d);
        out += ',';
        out += fmt_double(r.anr_db);
        out += '\n';
    }
    return out;
}

inline nlohmann::ordered_json trace_to_json(const AnrTrace& trace) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& r : trace.rows) {
        nlohmann::ordered_json row;
        row["n"] = r.n;
        row["e"] = r.e;
        row["d"] = r.d;
        if (std::isnan(r.anr_db)) {
            row["anr_db"] = nullptr;
        } else {
            row["anr_db"] = r.anr_db;
        }
        rows.push_back(std::move(row));
    }
    nlohmann::ordered_json j;
    j["decimation"] = trace.decimation;
    j["rows"] = std::move(rows);
    return j;
}

/// Writes report.json, anr.csv and residual.wav into `dir` (created if
/// missing). Each file lands atomically.
inline void write_session_report(const SessionReport& rep,
                                 const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    nlohmann::ordered_json j;
    j["schema"] = 1;
    j["chosen_label"] = rep.chosen_label;
    j["chosen_score"] = rep.chosen_score;
    j["selection_index"] = rep.selection_index;
    j["samples"] = rep.residual.samples.size();
    j["sample_rate"] = rep.residual.sample_rate;
    if (rep.switch_index) {
        j["switch_index"] = *rep.switch_index;
    }
    if (rep.diverged_at) {
        j["diverged_at"] = *rep.diverged_at;
    }
    j["phases"] = nlohmann::ordered_json::array();
    for (const auto& p : rep.phases) {
        j["phases"].push_back(
            {{"n", p.n}, {"label", p.label}, {"score", p.score}});
    }
    j["final_anr_db"] = nlohmann::ordered_json();
    for (auto it = rep.trace.rows.rbegin(); it != rep.trace.rows.rend(); ++it) {
        if (!std::isnan(it->anr_db)) {
            j["final_anr_db"] = it->anr_db;
            break;
        }
    }
    j["final_filter_b64"] = doubles_to_b64(rep.final_filter.weights);

    atomic_write(dir / "report.json", j.dump(2) + "\n");
    atomic_write(dir / "anr.csv", trace_to_csv(rep.trace));

    // write_wav streams directly; route it through the same atomic scheme.
    const auto tmp = dir / "residual.wav.tmp";
    write_wav(rep.residual, tmp);
    std::filesystem::rename(tmp, dir / "residual.wav");
}

}  // namespace sfanc
