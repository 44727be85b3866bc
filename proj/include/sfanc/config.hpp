#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfanc/adaptive.hpp"
#include "sfanc/errors.hpp"
#include "sfanc/mel.hpp"
#include "sfanc/meta.hpp"
#include "sfanc/noise.hpp"
#include "sfanc/pipeline.hpp"

namespace sfanc {

namespace detail {

/// Strict accessor over one JSON object: every key must be consumed, and
/// finish() rejects leftovers so typos in config files fail loudly.
class StrictObject {
public:
    StrictObject(const nlohmann::json& j, std::string path)
        : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw ConfigError(path_ + ": expected an object");
        }
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const nlohmann::json& require(const std::string& key) {
        seen_.insert(key);
        if (!j_.contains(key)) {
            throw ConfigError(path_ + ": missing required key '" + key + "'");
        }
        return j_.at(key);
    }

    const nlohmann::json* optional(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    template <typename T>
    T value(const std::string& key, T fallback) {
        const auto* p = optional(key);
        if (p == nullptr) return fallback;
        try {
            return p->get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(path_ + "." + key + ": wrong type");
        }
    }

    template <typename T>
    T get(const std::string& key) {
        const auto& v = require(key);
        try {
            return v.get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(path_ + "." + key + ": wrong type");
        }
    }

    void finish() {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) {
                throw ConfigError(path_ + ": unknown key '" + key + "'");
            }
        }
    }

    const std::string& path() const { return path_; }

private:
    const nlohmann::json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace detail

/// A path is either an explicit coefficient list or a seeded Gaussian
/// draw (the long random primary path of the second experiment).
struct PathConfig {
    std::vector<double> taps;          // used when non-empty
    std::size_t gaussian_length = 0;   // used otherwise
    double gaussian_variance = 0.1;
    std::uint64_t gaussian_seed = 0;

    FirPath make() const {
        if (!taps.empty()) return FirPath(taps);
        return gaussian_fir(gaussian_length, gaussian_variance, gaussian_seed);
    }
};

struct PlantConfig {
    PathConfig primary;
    PathConfig secondary;
    std::optional<PathConfig> secondary_estimate;  // default: same as secondary

    AncPlant make() const {
        AncPlant p;
        p.primary = primary.make();
        p.secondary = secondary.make();
        p.secondary_estimate =
            secondary_estimate ? secondary_estimate->make() : p.secondary;
        p.validate();
        return p;
    }
};

struct SyntheticCategoryConfig {
    std::string label;
    double band_low_hz = 500.0;
    double band_high_hz = 800.0;
    int subclasses = 10;
    double jitter_frac = 0.25;
    double am_depth = 0.5;

    CategorySpec spec(int sample_rate) const {
        CategorySpec s;
        s.label = label;
        s.band_low_hz = band_low_hz;
        s.band_high_hz = band_high_hz;
        s.sample_rate = sample_rate;
        s.jitter_frac = jitter_frac;
        s.am_depth = am_depth;
        return s;
    }
};

enum class DatasetKind { synthetic, esc50, clips };

struct DatasetConfig {
    DatasetKind kind = DatasetKind::synthetic;
    // synthetic
    std::vector<SyntheticCategoryConfig> categories;
    double clip_s = 2.5;
    int clips_per_subclass = 1;
    // esc50
    std::string root;
    std::string manifest;
    std::string category_map;  // optional JSON file: subclass -> major label
    // clips (output of ingest-esc50)
    std::string index;
};

struct MetaSection {
    double alpha = 0.03;
    double beta = 0.03;
    int support_size = 10;
    int query_size = 10;
    int iterations = 400;
    int train_subclasses = 0;  // 0 = all subclasses
    int inner_steps = 1;
    int task_batch = 0;
    bool query_error_on_support = false;
    bool build_sfanc_baseline = true;
    double sfanc_mu = 0.001;  // FxNLMS step for the single-segment baseline filters

    MetaConfig meta_config(std::uint64_t seed) const {
        MetaConfig m;
        m.alpha = alpha;
        m.beta = beta;
        m.support_size = support_size;
        m.query_size = query_size;
        m.iterations = iterations;
        m.seed = seed;
        m.inner_steps = inner_steps;
        m.task_batch = task_batch;
        m.query_error_on_support = query_error_on_support;
        return m;
    }
};

struct ClassifierSection {
    ClassifierKind kind = ClassifierKind::linear;
    bool augment = false;
    double holdout_frac = 0.25;
    int clips_per_category = 40;
    int epochs = 300;
    double learning_rate = 0.5;
    double l2 = 1e-4;
};

/// Where a session's reference noise comes from: a WAV file or a seeded
/// synthetic clip.
struct ReferenceConfig {
    std::optional<std::string> wav;
    std::string category;
    int subclass = 0;
    double duration_s = 10.0;
    std::uint64_t seed = 1;
};

struct NonstationarySection {
    double switch_s = 15.0;
    ReferenceConfig first;
    ReferenceConfig second;
    bool oracle_labels = false;
};

struct SessionSection {
    std::vector<Mode> modes{Mode::maml_fxlms};
    double mu = 0.02;
    std::map<Mode, double> mu_by_mode;
    double delta = 1e-3;
    double anr_lambda = 0.999;
    double acquisition_s = 2.5;
    std::size_t decimation = 1;
    double threshold_db = -10.0;
    double reclassify_every_s = 0.0;
    std::string database;
    std::string sfanc_database;
    std::string classifier_model;
    ReferenceConfig reference;
    std::optional<std::string> oracle_label;
    std::optional<NonstationarySection> nonstationary;
};

struct ExperimentConfig {
    std::string notes;
    std::uint64_t seed = 0;
    int sample_rate = 16000;
    std::size_t filter_length = 10;
    std::string out_dir = "out";
    PlantConfig plant;
    DatasetConfig dataset;
    MetaSection meta;
    MelParams mel;
    ClassifierSection classifier;
    SessionSection session;
};

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

inline PathConfig parse_path(const nlohmann::json& j, const std::string& path) {
    PathConfig out;
    if (j.is_array()) {
        try {
            out.taps = j.get<std::vector<double>>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(path + ": expected numbers");
        }
        if (out.taps.empty()) throw ConfigError(path + ": empty tap list");
        return out;
    }
    StrictObject o(j, path);
    StrictObject g(o.require("gaussian"), path + ".gaussian");
    out.gaussian_length = g.get<std::size_t>("length");
    out.gaussian_variance = g.value<double>("variance", 0.1);
    out.gaussian_seed = g.value<std::uint64_t>("seed", 0);
    g.finish();
    o.finish();
    if (out.gaussian_length == 0) throw ConfigError(path + ": zero length");
    if (!(out.gaussian_variance > 0.0)) throw ConfigError(path + ": bad variance");
    return out;
}

inline ReferenceConfig parse_reference(const nlohmann::json& j,
                                       const std::string& path) {
    StrictObject o(j, path);
    ReferenceConfig r;
    if (o.has("wav")) {
        r.wav = o.get<std::string>("wav");
        o.finish();
        return r;
    }
    r.category = o.get<std::string>("category");
    r.subclass = o.value<int>("subclass", 0);
    r.duration_s = o.value<double>("duration_s", 10.0);
    r.seed = o.value<std::uint64_t>("seed", 1);
    o.finish();
    if (!(r.duration_s > 0.0)) throw ConfigError(path + ": bad duration");
    return r;
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& root) {
    detail::StrictObject top(root, "config");
    ExperimentConfig cfg;
    cfg.notes = top.value<std::string>("notes", "");
    cfg.seed = top.value<std::uint64_t>("seed", 0);
    cfg.sample_rate = top.value<int>("sample_rate", 16000);
    if (cfg.sample_rate <= 0) throw ConfigError("config.sample_rate: must be positive");
    cfg.filter_length = top.value<std::size_t>("filter_length", 10);
    if (cfg.filter_length == 0) throw ConfigError("config.filter_length: must be >= 1");
    cfg.out_dir = top.value<std::string>("out_dir", "out");

    if (top.has("plant")) {
        detail::StrictObject p(top.require("plant"), "config.plant");
        cfg.plant.primary = detail::parse_path(p.require("primary"), "config.plant.primary");
        cfg.plant.secondary =
            detail::parse_path(p.require("secondary"), "config.plant.secondary");
        if (const auto* se = p.optional("secondary_estimate")) {
            cfg.plant.secondary_estimate =
                detail::parse_path(*se, "config.plant.secondary_estimate");
        }
        p.finish();
    } else {
        top.optional("plant");
        // Short experiment defaults: the 6-tap primary and 4-tap secondary.
        cfg.plant.primary.taps = {1.5, 1.3, -0.6, -1.2, -1.3, 1.2};
        cfg.plant.secondary.taps = {1.0, 1.0, 1.0, 0.5};
    }

    if (top.has("dataset")) {
        detail::StrictObject d(top.require("dataset"), "config.dataset");
        const auto kind = d.value<std::string>("type", "synthetic");
        if (kind == "synthetic") {
            cfg.dataset.kind = DatasetKind::synthetic;
            cfg.dataset.clip_s = d.value<double>("clip_s", 2.5);
            cfg.dataset.clips_per_subclass = d.value<int>("clips_per_subclass", 1);
            if (!(cfg.dataset.clip_s > 0.0) || cfg.dataset.clips_per_subclass < 1) {
                throw ConfigError("config.dataset: bad clip parameters");
            }
            const auto& cats = d.require("categories");
            if (!cats.is_array() || cats.empty()) {
                throw ConfigError("config.dataset.categories: need a non-empty array");
            }
            for (std::size_t i = 0; i < cats.size(); ++i) {
                detail::StrictObject c(cats[i], "config.dataset.categories[" +
                                                    std::to_string(i) + "]");
                SyntheticCategoryConfig sc;
                sc.label = c.get<std::string>("label");
                sc.band_low_hz = c.get<double>("band_low_hz");
                sc.band_high_hz = c.get<double>("band_high_hz");
                sc.subclasses = c.value<int>("subclasses", 10);
                sc.jitter_frac = c.value<double>("jitter_frac", 0.25);
                sc.am_depth = c.value<double>("am_depth", 0.5);
                c.finish();
                if (sc.label.empty()) throw ConfigError(c.path() + ": empty label");
                if (sc.subclasses < 1) throw ConfigError(c.path() + ": bad subclasses");
                if (!(sc.band_low_hz >= 0.0) || !(sc.band_high_hz > sc.band_low_hz)) {
                    throw ConfigError(c.path() + ": bad band");
                }
                cfg.dataset.categories.push_back(std::move(sc));
            }
        } else if (kind == "esc50") {
            cfg.dataset.kind = DatasetKind::esc50;
            cfg.dataset.root = d.get<std::string>("root");
            cfg.dataset.manifest = d.get<std::string>("manifest");
            cfg.dataset.category_map = d.value<std::string>("category_map", "");
        } else if (kind == "clips") {
            cfg.dataset.kind = DatasetKind::clips;
            cfg.dataset.index = d.get<std::string>("index");
        } else {
            throw ConfigError("config.dataset.type: unknown type '" + kind + "'");
        }
        d.finish();
    }

    if (top.has("meta")) {
        detail::StrictObject m(top.require("meta"), "config.meta");
        cfg.meta.alpha = m.value<double>("alpha", 0.03);
        cfg.meta.beta = m.value<double>("beta", 0.03);
        cfg.meta.support_size = m.value<int>("K", 10);
        cfg.meta.query_size = m.value<int>("J", 10);
        cfg.meta.iterations = m.value<int>("iterations", 400);
        cfg.meta.train_subclasses = m.value<int>("train_subclasses", 0);
        cfg.meta.inner_steps = m.value<int>("inner_steps", 1);
        cfg.meta.task_batch = m.value<int>("task_batch", 0);
        cfg.meta.query_error_on_support =
            m.value<bool>("query_error_on_support", false);
        cfg.meta.build_sfanc_baseline = m.value<bool>("build_sfanc_baseline", true);
        cfg.meta.sfanc_mu = m.value<double>("sfanc_mu", 0.001);
        m.finish();
        if (!(cfg.meta.alpha > 0.0) || !(cfg.meta.beta > 0.0)) {
            throw ConfigError("config.meta: step sizes must be positive");
        }
        if (cfg.meta.support_size < 1 || cfg.meta.query_size < 1) {
            throw ConfigError("config.meta: K and J must be >= 1");
        }
        if (cfg.meta.iterations < 0 || cfg.meta.inner_steps < 1) {
            throw ConfigError("config.meta: bad iteration counts");
        }
    } else {
        top.optional("meta");
    }

    if (top.has("mel")) {
        detail::StrictObject m(top.require("mel"), "config.mel");
        cfg.mel.fft_size = m.value<int>("fft_size", 1024);
        cfg.mel.hop = m.value<int>("hop", 256);
        cfg.mel.n_mels = m.value<int>("n_mels", 64);
        cfg.mel.fmin_hz = m.value<double>("fmin_hz", 50.0);
        cfg.mel.fmax_hz = m.value<double>("fmax_hz", 0.0);
        m.finish();
        cfg.mel.validate(cfg.sample_rate);
    } else {
        top.optional("mel");
    }

    if (top.has("classifier")) {
        detail::StrictObject c(top.require("classifier"), "config.classifier");
        const auto kind = c.value<std::string>("kind", "linear");
        if (kind == "linear") {
            cfg.classifier.kind = ClassifierKind::linear;
        } else if (kind == "centroid") {
            cfg.classifier.kind = ClassifierKind::centroid;
        } else {
            throw ConfigError("config.classifier.kind: unknown kind '" + kind + "'");
        }
        cfg.classifier.augment = c.value<bool>("augment", false);
        cfg.classifier.holdout_frac = c.value<double>("holdout_frac", 0.25);
        cfg.classifier.clips_per_category = c.value<int>("clips_per_category", 40);
        cfg.classifier.epochs = c.value<int>("epochs", 300);
        cfg.classifier.learning_rate = c.value<double>("learning_rate", 0.5);
        cfg.classifier.l2 = c.value<double>("l2", 1e-4);
        c.finish();
        if (!(cfg.classifier.holdout_frac > 0.0 && cfg.classifier.holdout_frac < 1.0)) {
            throw ConfigError("config.classifier.holdout_frac: must be in (0,1)");
        }
        if (cfg.classifier.clips_per_category < 2 || cfg.classifier.epochs < 1) {
            throw ConfigError("config.classifier: bad training sizes");
        }
    } else {
        top.optional("classifier");
    }

    if (top.has("session")) {
        detail::StrictObject s(top.require("session"), "config.session");
        if (const auto* modes = s.optional("modes")) {
            cfg.session.modes.clear();
            if (modes->is_string()) {
                cfg.session.modes.push_back(mode_from_name(modes->get<std::string>()));
            } else if (modes->is_array()) {
                for (const auto& m : *modes) {
                    cfg.session.modes.push_back(mode_from_name(m.get<std::string>()));
                }
            } else {
                throw ConfigError("config.session.modes: expected string or array");
            }
            if (cfg.session.modes.empty()) {
                throw ConfigError("config.session.modes: empty");
            }
        }
        if (const auto* mu = s.optional("mu")) {
            if (mu->is_number()) {
                cfg.session.mu = mu->get<double>();
            } else if (mu->is_object()) {
                for (const auto& [k, v] : mu->items()) {
                    cfg.session.mu_by_mode[mode_from_name(k)] = v.get<double>();
                }
            } else {
                throw ConfigError("config.session.mu: expected number or object");
            }
        }
        cfg.session.delta = s.value<double>("delta", 1e-3);
        cfg.session.anr_lambda = s.value<double>("anr_lambda", 0.999);
        cfg.session.acquisition_s = s.value<double>("acquisition_s", 2.5);
        cfg.session.decimation = s.value<std::size_t>("decimation", 1);
        cfg.session.threshold_db = s.value<double>("threshold_db", -10.0);
        cfg.session.reclassify_every_s = s.value<double>("reclassify_every_s", 0.0);
        cfg.session.database = s.value<std::string>("database", "");
        cfg.session.sfanc_database = s.value<std::string>("sfanc_database", "");
        cfg.session.classifier_model = s.value<std::string>("classifier_model", "");
        if (const auto* r = s.optional("reference")) {
            cfg.session.reference = detail::parse_reference(*r, "config.session.reference");
        }
        if (const auto* o = s.optional("oracle_label")) {
            cfg.session.oracle_label = o->get<std::string>();
        }
        if (const auto* ns = s.optional("nonstationary")) {
            detail::StrictObject n(*ns, "config.session.nonstationary");
            NonstationarySection sec;
            sec.switch_s = n.get<double>("switch_s");
            sec.first = detail::parse_reference(n.require("first"),
                                                "config.session.nonstationary.first");
            sec.second = detail::parse_reference(n.require("second"),
                                                 "config.session.nonstationary.second");
            sec.oracle_labels = n.value<bool>("oracle_labels", false);
            n.finish();
            if (!(sec.switch_s > 0.0)) {
                throw ConfigError("config.session.nonstationary.switch_s: must be > 0");
            }
            cfg.session.nonstationary = std::move(sec);
        }
        s.finish();
        if (!(cfg.session.acquisition_s > 0.0)) {
            throw ConfigError("config.session.acquisition_s: must be > 0");
        }
        if (!(cfg.session.anr_lambda > 0.0 && cfg.session.anr_lambda < 1.0)) {
            throw ConfigError("config.session.anr_lambda: must be in (0,1)");
        }
        if (!(cfg.session.delta > 0.0)) {
            throw ConfigError("config.session.delta: must be > 0");
        }
    } else {
        top.optional("session");
    }

    top.finish();
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError("config " + path.string() + ": " + ex.what());
    }
    return parse_config(j);
}

// ---------------------------------------------------------------------------
// Serialization (round-trip support)
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json path_to_json(const PathConfig& p) {
    if (!p.taps.empty()) return nlohmann::ordered_json(p.taps);
    nlohmann::ordered_json g;
    g["gaussian"] = {{"length", p.gaussian_length},
                     {"variance", p.gaussian_variance},
                     {"seed", p.gaussian_seed}};
    return g;
}

inline nlohmann::ordered_json reference_to_json(const ReferenceConfig& r) {
    nlohmann::ordered_json j;
    if (r.wav) {
        j["wav"] = *r.wav;
        return j;
    }
    j["category"] = r.category;
    j["subclass"] = r.subclass;
    j["duration_s"] = r.duration_s;
    j["seed"] = r.seed;
    return j;
}

}  // namespace detail

inline nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::ordered_json j;
    if (!cfg.notes.empty()) j["notes"] = cfg.notes;
    j["seed"] = cfg.seed;
    j["sample_rate"] = cfg.sample_rate;
    j["filter_length"] = cfg.filter_length;
    j["out_dir"] = cfg.out_dir;
    j["plant"] = {{"primary", detail::path_to_json(cfg.plant.primary)},
                  {"secondary", detail::path_to_json(cfg.plant.secondary)}};
    if (cfg.plant.secondary_estimate) {
        j["plant"]["secondary_estimate"] =
            detail::path_to_json(*cfg.plant.secondary_estimate);
    }
    switch (cfg.dataset.kind) {
        case DatasetKind::synthetic: {
            nlohmann::ordered_json d;
            d["type"] = "synthetic";
            d["clip_s"] = cfg.dataset.clip_s;
            d["clips_per_subclass"] = cfg.dataset.clips_per_subclass;
            d["categories"] = nlohmann::ordered_json::array();
            for (const auto& c : cfg.dataset.categories) {
                d["categories"].push_back({{"label", c.label},
                                           {"band_low_hz", c.band_low_hz},
                                           {"band_high_hz", c.band_high_hz},
                                           {"subclasses", c.subclasses},
                                           {"jitter_frac", c.jitter_frac},
                                           {"am_depth", c.am_depth}});
            }
            j["dataset"] = std::move(d);
            break;
        }
        case DatasetKind::esc50:
            j["dataset"] = {{"type", "esc50"},
                            {"root", cfg.dataset.root},
                            {"manifest", cfg.dataset.manifest},
                            {"category_map", cfg.dataset.category_map}};
            break;
        case DatasetKind::clips:
            j["dataset"] = {{"type", "clips"}, {"index", cfg.dataset.index}};
            break;
    }
    j["meta"] = {{"alpha", cfg.meta.alpha},
                 {"beta", cfg.meta.beta},
                 {"K", cfg.meta.support_size},
                 {"J", cfg.meta.query_size},
                 {"iterations", cfg.meta.iterations},
                 {"train_subclasses", cfg.meta.train_subclasses},
                 {"inner_steps", cfg.meta.inner_steps},
                 {"task_batch", cfg.meta.task_batch},
                 {"query_error_on_support", cfg.meta.query_error_on_support},
                 {"build_sfanc_baseline", cfg.meta.build_sfanc_baseline},
                 {"sfanc_mu", cfg.meta.sfanc_mu}};
    j["mel"] = {{"fft_size", cfg.mel.fft_size},
                {"hop", cfg.mel.hop},
                {"n_mels", cfg.mel.n_mels},
                {"fmin_hz", cfg.mel.fmin_hz},
                {"fmax_hz", cfg.mel.fmax_hz}};
    j["classifier"] = {
        {"kind", cfg.classifier.kind == ClassifierKind::linear ? "linear" : "centroid"},
        {"augment", cfg.classifier.augment},
        {"holdout_frac", cfg.classifier.holdout_frac},
        {"clips_per_category", cfg.classifier.clips_per_category},
        {"epochs", cfg.classifier.epochs},
        {"learning_rate", cfg.classifier.learning_rate},
        {"l2", cfg.classifier.l2}};

    nlohmann::ordered_json s;
    nlohmann::ordered_json modes = nlohmann::ordered_json::array();
    for (Mode m : cfg.session.modes) modes.push_back(mode_name(m));
    s["modes"] = std::move(modes);
    if (cfg.session.mu_by_mode.empty()) {
        s["mu"] = cfg.session.mu;
    } else {
        nlohmann::ordered_json mu;
        for (const auto& [m, v] : cfg.session.mu_by_mode) mu[mode_name(m)] = v;
        s["mu"] = std::move(mu);
    }
    s["delta"] = cfg.session.delta;
    s["anr_lambda"] = cfg.session.anr_lambda;
    s["acquisition_s"] = cfg.session.acquisition_s;
    s["decimation"] = cfg.session.decimation;
    s["threshold_db"] = cfg.session.threshold_db;
    s["reclassify_every_s"] = cfg.session.reclassify_every_s;
    if (!cfg.session.database.empty()) s["database"] = cfg.session.database;
    if (!cfg.session.sfanc_database.empty()) {
        s["sfanc_database"] = cfg.session.sfanc_database;
    }
    if (!cfg.session.classifier_model.empty()) {
        s["classifier_model"] = cfg.session.classifier_model;
    }
    if (cfg.session.reference.wav || !cfg.session.reference.category.empty()) {
        s["reference"] = detail::reference_to_json(cfg.session.reference);
    }
    if (cfg.session.oracle_label) s["oracle_label"] = *cfg.session.oracle_label;
    if (cfg.session.nonstationary) {
        const auto& ns = *cfg.session.nonstationary;
        s["nonstationary"] = {{"switch_s", ns.switch_s},
                              {"first", detail::reference_to_json(ns.first)},
                              {"second", detail::reference_to_json(ns.second)},
                              {"oracle_labels", ns.oracle_labels}};
    }
    j["session"] = std::move(s);
    return j;
}

}  // namespace sfanc
