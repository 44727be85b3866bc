#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "sfanc/augment.hpp"
#include "sfanc/classifier.hpp"
#include "sfanc/config.hpp"
#include "sfanc/harness.hpp"
#include "sfanc/mel.hpp"
#include "sfanc/noise.hpp"

#include "oracles.hpp"

using namespace sfanc;
namespace fs = std::filesystem;

namespace {

double mel_band_center_hz(const MelParams& p, int band, int rate) {
    const auto hz_to_mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
    const auto mel_to_hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
    const double fmax = p.fmax_hz > 0.0 ? p.fmax_hz : rate / 2.0;
    const double lo = hz_to_mel(p.fmin_hz), hi = hz_to_mel(fmax);
    return mel_to_hz(lo + (hi - lo) * (band + 1) / (p.n_mels + 1));
}

}  // namespace

TEST_CASE("mel spectrogram puts a band-center tone in that band") {
    MelParams p;
    const int rate = 16000;
    for (int band : {10, 25, 40}) {
        const double f = mel_band_center_hz(p, band, rate);
        const auto mel = mel_spectrogram(oracle::tone(f, 0.5, rate), p);
        const int frame = mel.n_frames / 2;
        int best = 0;
        for (int m = 1; m < mel.n_mels; ++m) {
            if (mel.at(m, frame) > mel.at(best, frame)) best = m;
        }
        REQUIRE(best == band);
    }
}

TEST_CASE("mel spectrogram of silence sits at the floor") {
    Signal silence;
    silence.sample_rate = 16000;
    silence.samples.assign(4096, 0.0);
    const auto mel = mel_spectrogram(silence, MelParams{});
    for (double v : mel.values) {
        REQUIRE_THAT(v, Catch::Matchers::WithinAbs(-120.0, 1e-9));
    }
}

TEST_CASE("mel spectrogram shifts by exactly 20 dB per decade of amplitude") {
    const auto sig = oracle::tone(700.0, 0.4, 16000, 0.05);
    Signal loud = sig;
    for (double& x : loud.samples) x *= 10.0;

    const auto a = mel_spectrogram(sig, MelParams{});
    const auto b = mel_spectrogram(loud, MelParams{});
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        if (a.values[i] > -119.0 && b.values[i] > -119.0) {
            REQUIRE_THAT(b.values[i] - a.values[i],
                         Catch::Matchers::WithinAbs(20.0, 1e-9));
        }
    }
}

TEST_CASE("mel spectrogram rejects short input") {
    Signal s;
    s.sample_rate = 16000;
    s.samples.assign(512, 0.1);
    REQUIRE_THROWS_AS(mel_spectrogram(s, MelParams{}), std::invalid_argument);
}

TEST_CASE("feature pooling is frame-order invariant with the right shape") {
    MelSpectrogram mel;
    mel.n_mels = 4;
    mel.n_frames = 5;
    mel.values = {1, 2, 3, 4, 5,  0, 0, 0, 0, 0,  -3, 1, 4, 1, 5,  2, 2, 2, 2, 2};

    const auto f = features(mel);
    REQUIRE(f.size() == 8);

    // Constant band: zero standard deviation.
    REQUIRE_THAT(f[4 + 1], Catch::Matchers::WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(f[4 + 3], Catch::Matchers::WithinAbs(0.0, 1e-12));

    MelSpectrogram permuted = mel;
    for (int b = 0; b < 4; ++b) {
        std::vector<double> row(5);
        for (int t = 0; t < 5; ++t) row[static_cast<std::size_t>(t)] = mel.at(b, t);
        std::swap(row[0], row[3]);
        std::swap(row[1], row[4]);
        for (int t = 0; t < 5; ++t) {
            permuted.values[static_cast<std::size_t>(b) * 5 + t] = row[static_cast<std::size_t>(t)];
        }
    }
    const auto g = features(permuted);
    for (std::size_t i = 0; i < f.size(); ++i) {
        REQUIRE_THAT(g[i], Catch::Matchers::WithinAbs(f[i], 1e-12));
    }
}

TEST_CASE("time_scale changes duration by the factor") {
    const auto sig = oracle::tone(440.0, 2.5, 16000);

    const auto same = time_scale(sig, 1.0);
    REQUIRE(same.samples == sig.samples);

    const auto stretched = time_scale(sig, 1.5);
    REQUIRE(stretched.sample_rate == 16000);
    REQUIRE(std::llabs(static_cast<long long>(stretched.samples.size()) - 60000) <= 1);

    const auto back = time_scale(time_scale(sig, 0.8), 1.25);
    REQUIRE(std::llabs(static_cast<long long>(back.samples.size()) -
                       static_cast<long long>(sig.samples.size())) <= 2);

    REQUIRE_THROWS_AS(time_scale(sig, 0.0), std::invalid_argument);
}

TEST_CASE("pitch_shift moves a tone by the semitone ratio at fixed length") {
    const auto sig = oracle::tone(440.0, 1.0, 16000);

    const auto same = pitch_shift(sig, 0.0);
    REQUIRE_THAT(oracle::dominant_frequency(same),
                 Catch::Matchers::WithinRel(440.0, 0.01));

    const auto octave = pitch_shift(sig, 12.0);
    REQUIRE(octave.samples.size() == sig.samples.size());
    REQUIRE_THAT(oracle::dominant_frequency(octave),
                 Catch::Matchers::WithinRel(880.0, 0.03));

    const auto round = pitch_shift(pitch_shift(sig, 4.5), -4.5);
    REQUIRE_THAT(oracle::dominant_frequency(round),
                 Catch::Matchers::WithinRel(440.0, 0.03));

    REQUIRE_THROWS_AS(pitch_shift(sig, 30.0), std::invalid_argument);
}

TEST_CASE("augment_variants yields the four standard combinations") {
    const auto sig = oracle::tone(500.0, 1.0, 16000);
    const auto variants = sfanc::harness::augment_variants(sig);
    REQUIRE(variants.size() == 4);
    // Durations follow the time-scale factors (pitch shift preserves them).
    REQUIRE(std::llabs(static_cast<long long>(variants[0].samples.size()) - 24000) <= 2);
    REQUIRE(std::llabs(static_cast<long long>(variants[1].samples.size()) - 24000) <= 2);
    REQUIRE(std::llabs(static_cast<long long>(variants[2].samples.size()) - 12800) <= 2);
    REQUIRE(std::llabs(static_cast<long long>(variants[3].samples.size()) - 12800) <= 2);
}

TEST_CASE("train_classifier separates two clean clusters and is deterministic") {
    Rng rng(8);
    std::vector<std::pair<std::vector<double>, std::string>> samples;
    for (int i = 0; i < 20; ++i) {
        std::vector<double> a{5.0 + rng.normal() * 0.1, 0.0 + rng.normal() * 0.1};
        std::vector<double> b{-5.0 + rng.normal() * 0.1, 1.0 + rng.normal() * 0.1};
        samples.emplace_back(std::move(a), "right");
        samples.emplace_back(std::move(b), "left");
    }

    const auto centroid = train_classifier(samples, ClassifierKind::centroid);
    std::size_t correct = 0;
    for (const auto& [f, label] : samples) {
        const auto z = std::vector<double>{(f[0] - centroid.feat_mean[0]) / centroid.feat_std[0],
                                           (f[1] - centroid.feat_mean[1]) / centroid.feat_std[1]};
        double d0 = 0, d1 = 0;
        for (int i = 0; i < 2; ++i) {
            d0 += (z[static_cast<std::size_t>(i)] - centroid.weights[static_cast<std::size_t>(i)]) *
                  (z[static_cast<std::size_t>(i)] - centroid.weights[static_cast<std::size_t>(i)]);
            d1 += (z[static_cast<std::size_t>(i)] - centroid.weights[2 + static_cast<std::size_t>(i)]) *
                  (z[static_cast<std::size_t>(i)] - centroid.weights[2 + static_cast<std::size_t>(i)]);
        }
        const std::string got = d0 < d1 ? centroid.labels[0] : centroid.labels[1];
        if (got == label) ++correct;
    }
    REQUIRE(correct == samples.size());

    const auto again = train_classifier(samples, ClassifierKind::centroid);
    REQUIRE(again.weights == centroid.weights);

    const auto linear = train_classifier(samples, ClassifierKind::linear);
    const auto linear2 = train_classifier(samples, ClassifierKind::linear);
    REQUIRE(linear.weights == linear2.weights);
    REQUIRE(linear.bias == linear2.bias);
}

TEST_CASE("train_classifier rejects a single class") {
    std::vector<std::pair<std::vector<double>, std::string>> samples{
        {{1.0, 2.0}, "only"}, {{2.0, 1.0}, "only"}};
    REQUIRE_THROWS_AS(train_classifier(samples, ClassifierKind::linear),
                      std::invalid_argument);
}

TEST_CASE("classify breaks exact ties toward the smaller label") {
    ClassifierModel m;
    m.kind = ClassifierKind::centroid;
    m.labels = {"alpha", "beta"};
    m.mel = MelParams{};
    m.sample_rate = 16000;
    m.frame_samples = 4096;
    const std::size_t dim = 2 * static_cast<std::size_t>(m.mel.n_mels);
    m.feat_mean.assign(dim, 0.0);
    m.feat_std.assign(dim, 1.0);
    m.weights.assign(2 * dim, 0.0);  // identical centroids: everything ties

    Signal frame;
    frame.sample_rate = 16000;
    frame.samples.assign(4096, 0.01);
    const auto [label, score] = classify(m, frame);
    REQUIRE(label == "alpha");
    REQUIRE(score >= 0.0);
    REQUIRE(score <= 1.0);

    frame.samples.resize(1000);
    REQUIRE_THROWS_AS(classify(m, frame), std::invalid_argument);
}

TEST_CASE("synthetic three-category suite classifies held-out clips") {
    ExperimentConfig cfg;
    cfg.seed = 2025;
    cfg.sample_rate = 16000;
    cfg.session.acquisition_s = 1.0;  // shorter frames keep the suite quick
    cfg.dataset.kind = DatasetKind::synthetic;
    for (const auto& [label, lo, hi] :
         std::vector<std::tuple<std::string, double, double>>{
             {"low", 200.0, 700.0}, {"mid", 1200.0, 2600.0}, {"high", 4000.0, 7000.0}}) {
        SyntheticCategoryConfig c;
        c.label = label;
        c.band_low_hz = lo;
        c.band_high_hz = hi;
        c.subclasses = 10;
        cfg.dataset.categories.push_back(c);
    }
    cfg.classifier.clips_per_category = 40;
    cfg.classifier.holdout_frac = 0.25;

    const auto rep = sfanc::harness::train_classifier_harness(cfg);
    REQUIRE(rep.raw_count == 120);
    REQUIRE(rep.test_count == 30);
    REQUIRE(rep.holdout_accuracy >= 0.95);

    // Scaling a frame by 0.5 must not flip the decision.
    const auto spec = cfg.dataset.categories[1].spec(cfg.sample_rate);
    auto frame = synth_noise(spec.with_subclass(3), 1.0, 777);
    const auto full = classify(rep.model, frame);
    for (double& x : frame.samples) x *= 0.5;
    const auto half = classify(rep.model, frame);
    REQUIRE(full.first == "mid");
    REQUIRE(half.first == full.first);
}

TEST_CASE("classifier model round-trips through JSON") {
    Rng rng(5);
    std::vector<std::pair<std::vector<double>, std::string>> samples;
    for (int i = 0; i < 10; ++i) {
        samples.emplace_back(std::vector<double>{rng.normal() + 4.0, rng.normal()}, "a");
        samples.emplace_back(std::vector<double>{rng.normal() - 4.0, rng.normal()}, "b");
    }
    TrainOptions opt;
    opt.frame_samples = 2048;
    const auto model = train_classifier(samples, ClassifierKind::linear, opt);

    const auto dir = fs::temp_directory_path() / "sfanc_test_classify";
    fs::create_directories(dir);
    save_classifier(model, dir / "model.json");
    const auto back = load_classifier(dir / "model.json");
    REQUIRE(back.labels == model.labels);
    REQUIRE(back.weights == model.weights);
    REQUIRE(back.bias == model.bias);
    REQUIRE(back.feat_mean == model.feat_mean);
    REQUIRE(back.frame_samples == model.frame_samples);
}
