#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sfanc/base64.hpp"
#include "sfanc/errors.hpp"
#include "sfanc/mel.hpp"
#include "sfanc/signal.hpp"

namespace sfanc {

/// Pools a Mel spectrogram to a fixed-length vector: per-band mean then
/// per-band standard deviation over frames. Frame order does not matter.
inline std::vector<double> features(const MelSpectrogram& mel) {
    const auto bands = static_cast<std::size_t>(mel.n_mels);
    const auto frames = static_cast<std::size_t>(mel.n_frames);
    std::vector<double> out(2 * bands, 0.0);
    for (std::size_t b = 0; b < bands; ++b) {
        double mean = 0.0;
        for (std::size_t f = 0; f < frames; ++f) mean += mel.values[b * frames + f];
        mean /= static_cast<double>(frames);
        double var = 0.0;
        for (std::size_t f = 0; f < frames; ++f) {
            const double d = mel.values[b * frames + f] - mean;
            var += d * d;
        }
        out[b] = mean;
        out[bands + b] = std::sqrt(var / static_cast<double>(frames));
    }
    return out;
}

enum class ClassifierKind { centroid, linear };

struct TrainOptions {
    MelParams mel;
    int sample_rate = 16000;
    std::size_t frame_samples = 40000;  // acquisition window, 2.5 s at 16 kHz
    int epochs = 300;
    double learning_rate = 0.5;
    double l2 = 1e-4;
    std::uint64_t seed = 0;
};

/// Trained noise-category classifier over pooled Mel features. The
/// centroid kind stores per-class means in normalized feature space; the
/// linear kind stores multinomial-logistic weights. Immutable after
/// training.
struct ClassifierModel {
    ClassifierKind kind = ClassifierKind::linear;
    std::vector<std::string> labels;  // sorted
    std::vector<double> feat_mean, feat_std;
    std::vector<double> weights;  // [class][dim] (centroids or logistic weights)
    std::vector<double> bias;     // linear only
    MelParams mel;
    int sample_rate = 16000;
    std::size_t frame_samples = 0;

    std::size_t dim() const { return feat_mean.size(); }
    std::size_t n_classes() const { return labels.size(); }
};

namespace detail {

inline std::vector<double> normalize_features(const ClassifierModel& m,
                                               const std::vector<double>& f) {
    std::vector<double> z(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        z[i] = (f[i] - m.feat_mean[i]) / m.feat_std[i];
    }
    return z;
}

/// Class scores in [0, 1]: softmax over logits (linear) or over negative
/// distances (centroid).
inline std::vector<double> class_scores(const ClassifierModel& m,
                                        const std::vector<double>& z) {
    const std::size_t C = m.n_classes();
    const std::size_t D = m.dim();
    std::vector<double> logit(C);
    for (std::size_t c = 0; c < C; ++c) {
        if (m.kind == ClassifierKind::linear) {
            double acc = m.bias[c];
            for (std::size_t i = 0; i < D; ++i) acc += m.weights[c * D + i] * z[i];
            logit[c] = acc;
        } else {
            double d2 = 0.0;
            for (std::size_t i = 0; i < D; ++i) {
                const double d = z[i] - m.weights[c * D + i];
                d2 += d * d;
            }
            logit[c] = -d2;
        }
    }
    const double top = *std::max_element(logit.begin(), logit.end());
    double sum = 0.0;
    for (auto& l : logit) {
        l = std::exp(l - top);
        sum += l;
    }
    for (auto& l : logit) l /= sum;
    return logit;
}

}  // namespace detail

/// Trains on (feature, label) pairs. Deterministic: labels are sorted,
/// the linear kind uses full-batch gradient descent from zero weights.
inline ClassifierModel train_classifier(
    const std::vector<std::pair<std::vector<double>, std::string>>& samples,
    ClassifierKind kind, const TrainOptions& opt = {}) {
    if (samples.empty()) throw std::invalid_argument("train_classifier: no samples");
    std::set<std::string> label_set;
    for (const auto& [f, l] : samples) label_set.insert(l);
    if (label_set.size() < 2) {
        throw std::invalid_argument("train_classifier: need at least 2 classes");
    }
    const std::size_t D = samples.front().first.size();
    for (const auto& [f, l] : samples) {
        if (f.size() != D) {
            throw std::invalid_argument("train_classifier: inconsistent feature size");
        }
    }

    ClassifierModel m;
    m.kind = kind;
    m.labels.assign(label_set.begin(), label_set.end());
    m.mel = opt.mel;
    m.sample_rate = opt.sample_rate;
    m.frame_samples = opt.frame_samples;

    // z-normalization statistics over the training set.
    m.feat_mean.assign(D, 0.0);
    m.feat_std.assign(D, 0.0);
    for (const auto& [f, l] : samples) {
        for (std::size_t i = 0; i < D; ++i) m.feat_mean[i] += f[i];
    }
    for (std::size_t i = 0; i < D; ++i) m.feat_mean[i] /= static_cast<double>(samples.size());
    for (const auto& [f, l] : samples) {
        for (std::size_t i = 0; i < D; ++i) {
            const double d = f[i] - m.feat_mean[i];
            m.feat_std[i] += d * d;
        }
    }
    for (std::size_t i = 0; i < D; ++i) {
        m.feat_std[i] = std::sqrt(m.feat_std[i] / static_cast<double>(samples.size()));
        if (m.feat_std[i] < 1e-9) m.feat_std[i] = 1.0;  // constant dimension
    }

    std::map<std::string, std::size_t> label_index;
    for (std::size_t c = 0; c < m.labels.size(); ++c) label_index[m.labels[c]] = c;
    const std::size_t C = m.labels.size();

    std::vector<std::vector<double>> z;
    std::vector<std::size_t> y;
    z.reserve(samples.size());
    for (const auto& [f, l] : samples) {
        z.push_back(detail::normalize_features(m, f));
        y.push_back(label_index[l]);
    }

    if (kind == ClassifierKind::centroid) {
        m.weights.assign(C * D, 0.0);
        std::vector<std::size_t> count(C, 0);
        for (std::size_t s = 0; s < z.size(); ++s) {
            for (std::size_t i = 0; i < D; ++i) m.weights[y[s] * D + i] += z[s][i];
            ++count[y[s]];
        }
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t i = 0; i < D; ++i) {
                m.weights[c * D + i] /= static_cast<double>(count[c]);
            }
        }
        return m;
    }

    // Multinomial logistic regression, full batch, zero init.
    m.weights.assign(C * D, 0.0);
    m.bias.assign(C, 0.0);
    const double n_inv = 1.0 / static_cast<double>(z.size());
    std::vector<double> grad_w(C * D), grad_b(C);
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        std::fill(grad_w.begin(), grad_w.end(), 0.0);
        std::fill(grad_b.begin(), grad_b.end(), 0.0);
        for (std::size_t s = 0; s < z.size(); ++s) {
            const auto p = detail::class_scores(m, z[s]);
            for (std::size_t c = 0; c < C; ++c) {
                const double err = p[c] - (y[s] == c ? 1.0 : 0.0);
                grad_b[c] += err;
                for (std::size_t i = 0; i < D; ++i) grad_w[c * D + i] += err * z[s][i];
            }
        }
        for (std::size_t c = 0; c < C; ++c) {
            m.bias[c] -= opt.learning_rate * grad_b[c] * n_inv;
            for (std::size_t i = 0; i < D; ++i) {
                const std::size_t k = c * D + i;
                m.weights[k] -= opt.learning_rate *
                                (grad_w[k] * n_inv + opt.l2 * m.weights[k]);
            }
        }
    }
    return m;
}

/// Classifies an acquisition frame. The frame length must match the
/// model's configured window exactly. Ties break to the
/// lexicographically smallest label.
inline std::pair<std::string, double> classify(const ClassifierModel& model,
                                               const Signal& frame) {
    if (model.labels.empty()) throw std::invalid_argument("classify: empty model");
    if (frame.samples.size() != model.frame_samples) {
        throw std::invalid_argument("classify: frame length does not match model");
    }
    const auto mel = mel_spectrogram(frame, model.mel);
    const auto z = detail::normalize_features(model, features(mel));
    const auto scores = detail::class_scores(model, z);
    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.size(); ++c) {
        if (scores[c] > scores[best]) best = c;  // labels sorted: ties keep smaller
    }
    return {model.labels[best], scores[best]};
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json classifier_to_json(const ClassifierModel& m) {
    nlohmann::ordered_json j;
    j["schema"] = 1;
    j["kind"] = m.kind == ClassifierKind::linear ? "linear" : "centroid";
    j["labels"] = m.labels;
    j["feat_mean_b64"] = doubles_to_b64(m.feat_mean);
    j["feat_std_b64"] = doubles_to_b64(m.feat_std);
    j["weights_b64"] = doubles_to_b64(m.weights);
    j["bias_b64"] = doubles_to_b64(m.bias);
    j["mel"] = {{"fft_size", m.mel.fft_size},
                {"hop", m.mel.hop},
                {"n_mels", m.mel.n_mels},
                {"fmin_hz", m.mel.fmin_hz},
                {"fmax_hz", m.mel.fmax_hz}};
    j["sample_rate"] = m.sample_rate;
    j["frame_samples"] = m.frame_samples;
    return j;
}

inline ClassifierModel classifier_from_json(const nlohmann::json& j) {
    if (!j.contains("schema") || j["schema"].get<int>() != 1) {
        throw FormatError("classifier model: unsupported schema");
    }
    ClassifierModel m;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "linear") {
        m.kind = ClassifierKind::linear;
    } else if (kind == "centroid") {
        m.kind = ClassifierKind::centroid;
    } else {
        throw FormatError("classifier model: unknown kind " + kind);
    }
    m.labels = j.at("labels").get<std::vector<std::string>>();
    m.feat_mean = b64_to_doubles(j.at("feat_mean_b64").get<std::string>());
    m.feat_std = b64_to_doubles(j.at("feat_std_b64").get<std::string>());
    m.weights = b64_to_doubles(j.at("weights_b64").get<std::string>());
    m.bias = b64_to_doubles(j.at("bias_b64").get<std::string>());
    const auto& mel = j.at("mel");
    m.mel.fft_size = mel.at("fft_size").get<int>();
    m.mel.hop = mel.at("hop").get<int>();
    m.mel.n_mels = mel.at("n_mels").get<int>();
    m.mel.fmin_hz = mel.at("fmin_hz").get<double>();
    m.mel.fmax_hz = mel.at("fmax_hz").get<double>();
    m.sample_rate = j.at("sample_rate").get<int>();
    m.frame_samples = j.at("frame_samples").get<std::size_t>();
    return m;
}

inline void save_classifier(const ClassifierModel& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << classifier_to_json(m).dump(2) << '\n';
}

inline ClassifierModel load_classifier(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFoundError(path.string());
    nlohmann::json j;
    try {
        in >> j;
        return classifier_from_json(j);
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError("classifier model " + path.string() + ": " + ex.what());
    }
}

}  // namespace sfanc
