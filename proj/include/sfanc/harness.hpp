#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sfanc/augment.hpp"
#include "sfanc/classifier.hpp"
#include "sfanc/config.hpp"
#include "sfanc/database.hpp"
#include "sfanc/errors.hpp"
#include "sfanc/esc50.hpp"
#include "sfanc/meta.hpp"
#include "sfanc/noise.hpp"
#include "sfanc/pipeline.hpp"
#include "sfanc/resample.hpp"
#include "sfanc/rng.hpp"
#include "sfanc/wav.hpp"

namespace sfanc {

/// Training material grouped as category -> subclass -> recordings.
struct Dataset {
    std::map<std::string, std::map<std::string, std::vector<Signal>>> by_category;
    int sample_rate = 16000;
};

namespace harness {

/// Namespaced sub-seeds so the pretraining, classifier and reference
/// streams never collide.
inline std::uint64_t sub_seed(std::uint64_t base, std::string_view ns,
                              std::uint64_t a = 0, std::uint64_t b = 0) {
    return mix64(mix64(base ^ fnv1a(ns)) ^ mix64(a) ^ (mix64(b) << 1));
}

/// Synthesizes the pretraining recordings described by a synthetic
/// dataset config: `clips_per_subclass` clips per subclass, every clip a
/// fresh seeded realization.
inline Dataset synth_dataset(const ExperimentConfig& cfg) {
    Dataset ds;
    ds.sample_rate = cfg.sample_rate;
    for (const auto& cat : cfg.dataset.categories) {
        auto& subs = ds.by_category[cat.label];
        const CategorySpec base = cat.spec(cfg.sample_rate);
        for (int si = 0; si < cat.subclasses; ++si) {
            auto& recs = subs[std::to_string(si)];
            for (int c = 0; c < cfg.dataset.clips_per_subclass; ++c) {
                recs.push_back(synth_noise(
                    base.with_subclass(si), cfg.dataset.clip_s,
                    sub_seed(cfg.seed, "pretrain", fnv1a(cat.label),
                             static_cast<std::uint64_t>(si) * 1000 +
                                 static_cast<std::uint64_t>(c))));
            }
        }
    }
    return ds;
}

inline Dataset clips_dataset(const std::filesystem::path& index_path,
                             int expected_rate) {
    const auto idx = load_clip_index(index_path);
    if (expected_rate != 0 && idx.sample_rate != expected_rate) {
        throw DataError("clip index rate " + std::to_string(idx.sample_rate) +
                        " does not match configured rate");
    }
    Dataset ds;
    ds.sample_rate = idx.sample_rate;
    const auto base = index_path.parent_path();
    for (const auto& c : idx.clips) {
        ds.by_category[c.label][c.subclass].push_back(read_wav(base / c.path));
    }
    return ds;
}

/// Loads ESC-50 straight from the manifest: resample, slice into
/// acquisition-length clips, group by (mapped) category and subclass.
inline Dataset esc50_dataset(const ExperimentConfig& cfg) {
    std::map<std::string, std::string> category_map;
    if (!cfg.dataset.category_map.empty()) {
        category_map = load_category_map(cfg.dataset.category_map);
    }
    const auto rows = parse_esc50_manifest(cfg.dataset.manifest);
    const auto clip_samples = static_cast<std::size_t>(
        std::llround(cfg.session.acquisition_s * cfg.sample_rate));

    Dataset ds;
    ds.sample_rate = cfg.sample_rate;
    for (const auto& row : rows) {
        std::filesystem::path src = std::filesystem::path(cfg.dataset.root) / row.filename;
        if (!std::filesystem::exists(src)) {
            src = std::filesystem::path(cfg.dataset.root) / "audio" / row.filename;
        }
        Signal sig;
        try {
            sig = read_wav(src);
        } catch (const DataError&) {
            continue;  // ingest-esc50 reports skips; here we just keep going
        }
        if (sig.sample_rate != cfg.sample_rate) sig = resample(sig, cfg.sample_rate);
        std::string label = row.category;
        if (!category_map.empty()) {
            const auto it = category_map.find(row.category);
            if (it == category_map.end()) {
                throw DataError("category map has no entry for '" + row.category + "'");
            }
            label = it->second;
        }
        for (int c = 0; c < 2; ++c) {
            const std::size_t lo = static_cast<std::size_t>(c) * clip_samples;
            if (lo + clip_samples > sig.samples.size()) break;
            Signal clip;
            clip.sample_rate = cfg.sample_rate;
            clip.samples.assign(
                sig.samples.begin() + static_cast<std::ptrdiff_t>(lo),
                sig.samples.begin() + static_cast<std::ptrdiff_t>(lo + clip_samples));
            ds.by_category[label][row.category].push_back(std::move(clip));
        }
    }
    if (ds.by_category.empty()) {
        throw DataError("esc50 dataset: no readable recordings");
    }
    return ds;
}

inline Dataset load_dataset(const ExperimentConfig& cfg) {
    switch (cfg.dataset.kind) {
        case DatasetKind::synthetic: return synth_dataset(cfg);
        case DatasetKind::esc50: return esc50_dataset(cfg);
        case DatasetKind::clips: return clips_dataset(cfg.dataset.index, cfg.sample_rate);
    }
    throw ConfigError("unknown dataset kind");
}

/// Restricts a category to its first `train_subclasses` subclasses (the
/// remainder is held out for evaluation). 0 keeps everything.
inline std::vector<std::vector<Signal>> training_recordings(
    const std::map<std::string, std::vector<Signal>>& subclasses,
    int train_subclasses) {
    std::vector<std::vector<Signal>> out;
    for (const auto& [name, recs] : subclasses) {
        out.push_back(recs);
    }
    if (train_subclasses > 0 && static_cast<std::size_t>(train_subclasses) < out.size()) {
        out.resize(static_cast<std::size_t>(train_subclasses));
    }
    return out;
}

/// Single-segment baseline filter: FxNLMS run to convergence on one
/// seeded random recording of one subclass, the provenance used by the
/// selective-fixed-filter baselines.
inline FilterEntry pretrain_single_segment(
    const std::string& label,
    const std::vector<std::vector<Signal>>& recordings_per_subclass,
    const AncPlant& plant, std::size_t filter_length, double mu,
    std::uint64_t seed) {
    Rng rng(sub_seed(seed, "sfanc_single", fnv1a(label)));
    const std::size_t si = rng.index(recordings_per_subclass.size());
    const auto& recs = recordings_per_subclass[si];
    const std::size_t ri = rng.index(recs.size());

    // A few passes over the clip are enough for FxNLMS to settle.
    constexpr int kPasses = 4;
    Signal tiled;
    tiled.sample_rate = recs[ri].sample_rate;
    tiled.samples.reserve(recs[ri].samples.size() * kPasses);
    for (int p = 0; p < kPasses; ++p) {
        tiled.samples.insert(tiled.samples.end(), recs[ri].samples.begin(),
                             recs[ri].samples.end());
    }

    CancellationConfig cc;
    cc.algo = Algo::fxnlms;
    cc.mu = mu;
    const auto run = run_cancellation(tiled, plant, ControlFilter(filter_length), cc);
    if (run.diverged_at) {
        throw DivergenceError("single-segment pretraining diverged for " + label,
                              run.diverged_at);
    }

    FilterEntry e;
    e.category = label;
    e.filter = run.final_filter;
    e.config.alpha = 0.0;
    e.config.beta = 0.0;
    e.config.support_size = 0;
    e.config.query_size = 0;
    e.config.iterations = kPasses;
    e.config.seed = seed;
    e.fingerprint = plant_fingerprint(plant);
    e.method = "fxnlms_single_segment";
    for (auto it = run.trace.rows.rbegin(); it != run.trace.rows.rend(); ++it) {
        if (!std::isnan(it->anr_db)) {
            e.loss_history.push_back(it->anr_db);  // final ANR on the clip
            break;
        }
    }
    return e;
}

struct DatabaseBundle {
    FilterDatabase maml;
    FilterDatabase single_segment;  // present when the config asks for it
};

/// Pretrains the per-category filter databases from the configured
/// dataset: a meta-trained filter per category and, optionally, the
/// single-segment baseline filter the sfanc_* modes select from.
inline DatabaseBundle build_databases(const ExperimentConfig& cfg,
                                      const Dataset& ds) {
    const AncPlant plant = cfg.plant.make();
    std::map<std::string, TaskDistribution> dists;
    std::map<std::string, MetaConfig> metas;
    for (const auto& [label, subclasses] : ds.by_category) {
        const auto recs = training_recordings(subclasses, cfg.meta.train_subclasses);
        dists.emplace(label,
                      make_tasks(recs, plant, cfg.filter_length,
                                 cfg.meta.support_size, cfg.meta.query_size,
                                 sub_seed(cfg.seed, "tasks", fnv1a(label)), label));
        metas.emplace(label, cfg.meta.meta_config(
                                 sub_seed(cfg.seed, "meta", fnv1a(label))));
    }

    DatabaseBundle out;
    out.maml = build_database(dists, metas, plant);
    if (cfg.meta.build_sfanc_baseline) {
        const std::string fp = plant_fingerprint(plant);
        for (const auto& [label, subclasses] : ds.by_category) {
            const auto recs =
                training_recordings(subclasses, cfg.meta.train_subclasses);
            auto entry = pretrain_single_segment(label, recs, plant,
                                                 cfg.filter_length,
                                                 cfg.meta.sfanc_mu, cfg.seed);
            out.single_segment.entries.emplace(label, std::move(entry));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Classifier training
// ---------------------------------------------------------------------------

struct LabeledClip {
    Signal signal;
    std::string label;
};

/// The four augmentation settings: [time-scale factor, pitch semitones].
inline std::vector<Signal> augment_variants(const Signal& clip) {
    static constexpr std::pair<double, double> kCombos[] = {
        {1.5, 4.5}, {1.5, -4.5}, {0.8, 4.5}, {0.8, -4.5}};
    std::vector<Signal> out;
    out.reserve(4);
    for (const auto& [t, p] : kCombos) {
        out.push_back(pitch_shift(time_scale(clip, t), p));
    }
    return out;
}

/// Acquisition-length clips for classifier training. Synthetic datasets
/// synthesize fresh clips (round-robin over subclasses); file-backed
/// datasets use the ingested clips as-is.
inline std::vector<LabeledClip> classifier_clips(const ExperimentConfig& cfg) {
    const auto frame_samples = static_cast<std::size_t>(
        std::llround(cfg.session.acquisition_s * cfg.sample_rate));
    std::vector<LabeledClip> clips;
    if (cfg.dataset.kind == DatasetKind::synthetic) {
        for (const auto& cat : cfg.dataset.categories) {
            const CategorySpec base = cat.spec(cfg.sample_rate);
            for (int i = 0; i < cfg.classifier.clips_per_category; ++i) {
                const int si = i % cat.subclasses;
                clips.push_back(
                    {synth_noise(base.with_subclass(si), cfg.session.acquisition_s,
                                 sub_seed(cfg.seed, "classifier", fnv1a(cat.label),
                                          static_cast<std::uint64_t>(i))),
                     cat.label});
            }
        }
    } else {
        const Dataset ds = load_dataset(cfg);
        for (const auto& [label, subclasses] : ds.by_category) {
            for (const auto& [sub, recs] : subclasses) {
                for (const auto& r : recs) {
                    if (r.samples.size() == frame_samples) {
                        clips.push_back({r, label});
                    }
                }
            }
        }
    }
    if (clips.empty()) throw DataError("classifier training: no clips");
    return clips;
}

struct ClassifierTrainReport {
    ClassifierModel model;
    double holdout_accuracy = 0.0;
    std::size_t raw_count = 0;
    std::size_t augmented_count = 0;
    std::size_t corpus_count = 0;  // raw + augmented
    std::size_t train_count = 0;
    std::size_t test_count = 0;
};

/// Splits the raw clips per label (seeded), augments the training side
/// when requested, trains and scores the held-out raw clips through the
/// full classify() path.
inline ClassifierTrainReport train_classifier_harness(const ExperimentConfig& cfg) {
    const auto clips = classifier_clips(cfg);
    const auto frame_samples = static_cast<std::size_t>(
        std::llround(cfg.session.acquisition_s * cfg.sample_rate));

    // Per-label holdout split over raw clips.
    std::map<std::string, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        by_label[clips[i].label].push_back(i);
    }
    Rng rng(sub_seed(cfg.seed, "holdout"));
    std::vector<std::size_t> train_idx, test_idx;
    for (auto& [label, idx] : by_label) {
        rng.shuffle(idx);
        const auto n_test = static_cast<std::size_t>(std::llround(
            cfg.classifier.holdout_frac * static_cast<double>(idx.size())));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            (i < n_test ? test_idx : train_idx).push_back(idx[i]);
        }
    }

    ClassifierTrainReport rep;
    rep.raw_count = clips.size();

    TrainOptions opt;
    opt.mel = cfg.mel;
    opt.sample_rate = cfg.sample_rate;
    opt.frame_samples = frame_samples;
    opt.epochs = cfg.classifier.epochs;
    opt.learning_rate = cfg.classifier.learning_rate;
    opt.l2 = cfg.classifier.l2;
    opt.seed = cfg.seed;

    std::vector<std::pair<std::vector<double>, std::string>> samples;
    auto add_sample = [&](const Signal& s, const std::string& label) {
        samples.emplace_back(features(mel_spectrogram(s, cfg.mel)), label);
    };
    for (std::size_t i : train_idx) {
        add_sample(clips[i].signal, clips[i].label);
        if (cfg.classifier.augment) {
            for (const auto& v : augment_variants(clips[i].signal)) {
                add_sample(v, clips[i].label);
                ++rep.augmented_count;
            }
        }
    }
    rep.train_count = samples.size();
    rep.test_count = test_idx.size();
    rep.corpus_count =
        rep.raw_count + (cfg.classifier.augment ? 4 * rep.raw_count : 0);

    rep.model = train_classifier(samples, cfg.classifier.kind, opt);

    std::size_t correct = 0;
    for (std::size_t i : test_idx) {
        const auto [label, score] = classify(rep.model, clips[i].signal);
        if (label == clips[i].label) ++correct;
    }
    rep.holdout_accuracy = test_idx.empty()
                               ? 1.0
                               : static_cast<double>(correct) /
                                     static_cast<double>(test_idx.size());
    return rep;
}

// ---------------------------------------------------------------------------
// References and sessions
// ---------------------------------------------------------------------------

inline LabeledSignal make_reference(const ExperimentConfig& cfg,
                                    const ReferenceConfig& ref) {
    if (ref.wav) {
        Signal sig = read_wav(*ref.wav);
        if (sig.sample_rate != cfg.sample_rate) sig = resample(sig, cfg.sample_rate);
        return {std::move(sig), ""};
    }
    const SyntheticCategoryConfig* cat = nullptr;
    for (const auto& c : cfg.dataset.categories) {
        if (c.label == ref.category) {
            cat = &c;
            break;
        }
    }
    if (cat == nullptr) {
        throw ConfigError("reference category '" + ref.category +
                          "' is not in the dataset");
    }
    const auto spec = cat->spec(cfg.sample_rate).with_subclass(ref.subclass);
    return {synth_noise(spec, ref.duration_s,
                        sub_seed(ref.seed, "reference", fnv1a(ref.category),
                                 static_cast<std::uint64_t>(ref.subclass))),
            ref.category};
}

/// Session config assembled from the experiment config plus loaded
/// resources. The caller owns the databases/classifier and keeps them
/// alive for the session's duration.
inline SessionConfig make_session_config(const ExperimentConfig& cfg,
                                         const FilterDatabase* maml_db,
                                         const FilterDatabase* sfanc_db,
                                         const ClassifierModel* classifier) {
    SessionConfig sc;
    sc.acquisition_s = cfg.session.acquisition_s;
    sc.plant = cfg.plant.make();
    sc.mu = cfg.session.mu;
    sc.mu_by_mode = cfg.session.mu_by_mode;
    sc.delta = cfg.session.delta;
    sc.anr_lambda = cfg.session.anr_lambda;
    sc.database = maml_db;
    sc.sfanc_database = sfanc_db;
    sc.classifier = classifier;
    sc.oracle_label = cfg.session.oracle_label;
    sc.filter_length = cfg.filter_length;
    sc.decimation = cfg.session.decimation;
    sc.seed = cfg.seed;
    sc.reclassify_every_s = cfg.session.reclassify_every_s;
    if (cfg.session.nonstationary) {
        sc.oracle_labels = cfg.session.nonstationary->oracle_labels;
    }
    return sc;
}

}  // namespace harness
}  // namespace sfanc
