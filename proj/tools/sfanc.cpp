// Command-line front end: pretraining, classifier training, experiment
// runs and ESC-50 ingestion. All outputs are deterministic under a fixed
// seed and land via temp-and-rename.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sfanc/sfanc.hpp"

namespace fs = std::filesystem;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string out_override;
    std::optional<std::uint64_t> seed_override;
};

sfanc::ExperimentConfig load_with_overrides(const GlobalArgs& args) {
    auto cfg = sfanc::load_config(args.config_path);
    if (!args.out_override.empty()) cfg.out_dir = args.out_override;
    if (args.seed_override) cfg.seed = *args.seed_override;
    return cfg;
}

void add_common(CLI::App* cmd, GlobalArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config (JSON)")
        ->required();
    cmd->add_option("--out", args.out_override, "output directory override");
    cmd->add_option("--seed", args.seed_override, "seed override");
}

int cmd_pretrain(const GlobalArgs& args) {
    const auto cfg = load_with_overrides(args);
    const auto ds = sfanc::harness::load_dataset(cfg);
    const auto bundle = sfanc::harness::build_databases(cfg, ds);

    fs::create_directories(cfg.out_dir);
    sfanc::atomic_write(fs::path(cfg.out_dir) / "database.json",
                        sfanc::database_to_json(bundle.maml).dump(2) + "\n");
    if (cfg.meta.build_sfanc_baseline) {
        sfanc::atomic_write(
            fs::path(cfg.out_dir) / "sfanc_database.json",
            sfanc::database_to_json(bundle.single_segment).dump(2) + "\n");
    }

    for (const auto& [label, entry] : bundle.maml.entries) {
        std::printf("category %-16s L=%zu iterations=%d final_loss=%s\n",
                    label.c_str(), entry.filter.length(), entry.config.iterations,
                    entry.loss_history.empty()
                        ? "-"
                        : sfanc::fmt_double(entry.loss_history.back()).c_str());
    }
    std::printf("wrote %s\n",
                (fs::path(cfg.out_dir) / "database.json").string().c_str());
    return 0;
}

int cmd_train_classifier(const GlobalArgs& args) {
    const auto cfg = load_with_overrides(args);
    const auto rep = sfanc::harness::train_classifier_harness(cfg);

    fs::create_directories(cfg.out_dir);
    sfanc::atomic_write(fs::path(cfg.out_dir) / "classifier.json",
                        sfanc::classifier_to_json(rep.model).dump(2) + "\n");

    std::printf("raw_clips=%zu augmented=%zu corpus=%zu train=%zu test=%zu\n",
                rep.raw_count, rep.augmented_count, rep.corpus_count,
                rep.train_count, rep.test_count);
    std::printf("holdout_accuracy=%s\n",
                sfanc::fmt_double(rep.holdout_accuracy).c_str());
    std::printf("wrote %s\n",
                (fs::path(cfg.out_dir) / "classifier.json").string().c_str());
    return 0;
}

/// Writes a finished report directory via a temp dir + rename.
void emit_report(const sfanc::SessionReport& rep, const fs::path& out,
                 const std::string& name) {
    const fs::path tmp = out / (".tmp-" + name);
    fs::remove_all(tmp);
    sfanc::write_session_report(rep, tmp);
    fs::remove_all(out / name);
    fs::rename(tmp, out / name);
}

std::string opt_index(const std::optional<std::size_t>& v) {
    return v ? std::to_string(*v) : "-";
}

int run_or_compare(const GlobalArgs& args, bool require_comparison) {
    const auto cfg = load_with_overrides(args);
    const auto& ses = cfg.session;
    if (require_comparison && ses.modes.size() < 2) {
        throw sfanc::ConfigError("compare needs at least two session modes");
    }

    bool needs_selection = false;
    for (auto m : ses.modes) {
        if (m != sfanc::Mode::fxlms_baseline) needs_selection = true;
    }

    sfanc::FilterDatabase maml_db, sfanc_db;
    bool have_maml = false, have_sfanc = false;
    if (needs_selection) {
        if (ses.database.empty()) {
            throw sfanc::ConfigError("session.database is required for this mode set");
        }
        maml_db = sfanc::load_database(ses.database);
        have_maml = true;
        if (!ses.sfanc_database.empty()) {
            sfanc_db = sfanc::load_database(ses.sfanc_database);
            have_sfanc = true;
        }
    }

    sfanc::ClassifierModel classifier;
    bool have_classifier = false;
    const bool oracle = cfg.session.oracle_label.has_value() ||
                        (ses.nonstationary && ses.nonstationary->oracle_labels);
    if (needs_selection && !oracle) {
        if (ses.classifier_model.empty()) {
            throw sfanc::ConfigError(
                "session.classifier_model is required (or set an oracle label)");
        }
        classifier = sfanc::load_classifier(ses.classifier_model);
        have_classifier = true;
    }

    auto session_cfg = sfanc::harness::make_session_config(
        cfg, have_maml ? &maml_db : nullptr, have_sfanc ? &sfanc_db : nullptr,
        have_classifier ? &classifier : nullptr);

    const fs::path out(cfg.out_dir);
    fs::create_directories(out);

    std::string table;
    bool any_divergence = false;

    if (ses.nonstationary) {
        const auto& ns = *ses.nonstationary;
        const auto first = sfanc::harness::make_reference(cfg, ns.first);
        const auto second = sfanc::harness::make_reference(cfg, ns.second);
        table = "mode,recovery_samples,post_switch_steady_anr_db,diverged_at\n";
        std::printf("%-16s %18s %28s\n", "mode", "recovery_samples",
                    "post_switch_steady_anr_db");
        for (auto m : ses.modes) {
            auto sc = session_cfg;
            sc.mode = m;
            const auto rep =
                sfanc::run_nonstationary(first, second, ns.switch_s, sc);
            emit_report(rep, out, sfanc::mode_name(m));
            const auto row =
                sfanc::summarize_nonstationary(m, rep, ses.threshold_db);
            any_divergence = any_divergence || rep.diverged_at.has_value();
            table += std::string(sfanc::mode_name(m)) + "," +
                     opt_index(row.recovery_samples) + "," +
                     sfanc::fmt_double(row.post_switch_steady_anr_db) + "," +
                     opt_index(row.diverged_at) + "\n";
            std::printf("%-16s %18s %28s\n", sfanc::mode_name(m),
                        opt_index(row.recovery_samples).c_str(),
                        sfanc::fmt_double(row.post_switch_steady_anr_db).c_str());
        }
    } else {
        const auto ref = sfanc::harness::make_reference(cfg, ses.reference);
        table = "mode,time_to_threshold,steady_state_anr_db,diverged_at\n";
        std::printf("%-16s %18s %20s\n", "mode", "time_to_threshold",
                    "steady_state_anr_db");
        for (auto m : ses.modes) {
            auto sc = session_cfg;
            sc.mode = m;
            const auto rep = sfanc::run_session(ref.signal, sc);
            emit_report(rep, out, sfanc::mode_name(m));
            const auto row = sfanc::summarize_session(m, rep, ses.threshold_db);
            any_divergence = any_divergence || rep.diverged_at.has_value();
            table += std::string(sfanc::mode_name(m)) + "," +
                     opt_index(row.time_to_threshold) + "," +
                     sfanc::fmt_double(row.steady_state_anr_db) + "," +
                     opt_index(row.diverged_at) + "\n";
            std::printf("%-16s %18s %20s\n", sfanc::mode_name(m),
                        opt_index(row.time_to_threshold).c_str(),
                        sfanc::fmt_double(row.steady_state_anr_db).c_str());
        }
    }

    if (ses.modes.size() >= 2) {
        sfanc::atomic_write(out / "comparison.csv", table);
    }
    return any_divergence ? 4 : 0;
}

int cmd_ingest(const GlobalArgs& args, const std::string& root_flag,
               const std::string& manifest_flag, const std::string& map_flag) {
    auto cfg = load_with_overrides(args);
    if (!root_flag.empty()) cfg.dataset.root = root_flag;
    if (!manifest_flag.empty()) cfg.dataset.manifest = manifest_flag;
    if (!map_flag.empty()) cfg.dataset.category_map = map_flag;
    if (cfg.dataset.root.empty() || cfg.dataset.manifest.empty()) {
        throw sfanc::ConfigError("ingest-esc50 needs dataset.root and dataset.manifest");
    }

    std::map<std::string, std::string> category_map;
    if (!cfg.dataset.category_map.empty()) {
        category_map = sfanc::load_category_map(cfg.dataset.category_map);
    }
    sfanc::IngestOptions opt;
    opt.sample_rate = cfg.sample_rate;
    opt.acquisition_s = cfg.session.acquisition_s;

    const auto idx = sfanc::ingest_esc50(cfg.dataset.root, cfg.dataset.manifest,
                                         category_map, cfg.out_dir, opt);
    for (const auto& s : idx.skipped) {
        std::fprintf(stderr, "skipped: %s\n", s.c_str());
    }
    std::printf("clips=%zu skipped=%zu\n", idx.clips.size(), idx.skipped.size());
    std::printf("wrote %s\n",
                (fs::path(cfg.out_dir) / "index.json").string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"selective fixed-filter active noise control toolkit"};
    app.require_subcommand(1);

    GlobalArgs pre_args, cls_args, run_args, cmp_args, ing_args;
    std::string ing_root, ing_manifest, ing_map;

    auto* pre = app.add_subcommand("pretrain", "build the control-filter databases");
    add_common(pre, pre_args);
    auto* cls = app.add_subcommand("train-classifier", "train the noise classifier");
    add_common(cls, cls_args);
    auto* run = app.add_subcommand("run", "run the configured session modes");
    add_common(run, run_args);
    auto* cmp = app.add_subcommand("compare", "run >= 2 modes and tabulate");
    add_common(cmp, cmp_args);
    auto* ing = app.add_subcommand("ingest-esc50", "normalize an ESC-50 layout");
    add_common(ing, ing_args);
    ing->add_option("--root", ing_root, "dataset root override");
    ing->add_option("--manifest", ing_manifest, "manifest CSV override");
    ing->add_option("--category-map", ing_map, "subclass->category map override");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (pre->parsed()) return cmd_pretrain(pre_args);
        if (cls->parsed()) return cmd_train_classifier(cls_args);
        if (run->parsed()) return run_or_compare(run_args, false);
        if (cmp->parsed()) return run_or_compare(cmp_args, true);
        if (ing->parsed()) return cmd_ingest(ing_args, ing_root, ing_manifest, ing_map);
    } catch (const sfanc::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const sfanc::DivergenceError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return 4;
    } catch (const sfanc::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const sfanc::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
