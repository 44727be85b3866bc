#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfanc/errors.hpp"
#include "sfanc/io.hpp"
#include "sfanc/resample.hpp"
#include "sfanc/signal.hpp"
#include "sfanc/wav.hpp"

namespace sfanc {

struct Esc50Row {
    std::string filename;
    int fold = 0;
    int target = 0;
    std::string category;
};

/// Parses the ESC-50 meta CSV (columns filename, fold, target, category,
/// ...). A malformed row is a hard error reported with its line number.
inline std::vector<Esc50Row> parse_esc50_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFoundError(path.string());

    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("manifest " + path.string() + ": empty file");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();

    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::string cur;
        for (char c : s) {
            if (c == ',') {
                cells.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        cells.push_back(cur);
        return cells;
    };

    const auto header = split(line);
    int i_file = -1, i_fold = -1, i_target = -1, i_cat = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "filename") i_file = static_cast<int>(i);
        if (header[i] == "fold") i_fold = static_cast<int>(i);
        if (header[i] == "target") i_target = static_cast<int>(i);
        if (header[i] == "category") i_cat = static_cast<int>(i);
    }
    if (i_file < 0 || i_fold < 0 || i_target < 0 || i_cat < 0) {
        throw FormatError("manifest " + path.string() +
                          ": header must contain filename, fold, target, category");
    }

    std::vector<Esc50Row> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split(line);
        const auto max_idx = static_cast<std::size_t>(
            std::max({i_file, i_fold, i_target, i_cat}));
        if (cells.size() <= max_idx) {
            throw FormatError("manifest " + path.string() + " row " +
                              std::to_string(line_no) + ": too few columns");
        }
        Esc50Row r;
        r.filename = cells[static_cast<std::size_t>(i_file)];
        r.category = cells[static_cast<std::size_t>(i_cat)];
        try {
            r.fold = std::stoi(cells[static_cast<std::size_t>(i_fold)]);
            r.target = std::stoi(cells[static_cast<std::size_t>(i_target)]);
        } catch (const std::exception&) {
            throw FormatError("manifest " + path.string() + " row " +
                              std::to_string(line_no) + ": non-numeric fold/target");
        }
        if (r.filename.empty()) {
            throw FormatError("manifest " + path.string() + " row " +
                              std::to_string(line_no) + ": empty filename");
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

struct ClipEntry {
    std::string path;      // normalized clip WAV, relative to the index file
    std::string label;     // training label (mapped major category when a map is set)
    std::string subclass;  // original ESC-50 category
    std::string source;    // source recording filename
};

struct ClipIndex {
    int sample_rate = 16000;
    std::size_t clip_samples = 0;
    std::vector<ClipEntry> clips;
    std::vector<std::string> skipped;
};

inline void save_clip_index(const ClipIndex& idx, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["schema"] = 1;
    j["sample_rate"] = idx.sample_rate;
    j["clip_samples"] = idx.clip_samples;
    j["clips"] = nlohmann::ordered_json::array();
    for (const auto& c : idx.clips) {
        j["clips"].push_back({{"path", c.path},
                              {"label", c.label},
                              {"subclass", c.subclass},
                              {"source", c.source}});
    }
    j["skipped"] = idx.skipped;
    atomic_write(path, j.dump(2) + "\n");
}

inline ClipIndex load_clip_index(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFoundError(path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError("clip index " + path.string() + ": " + ex.what());
    }
    ClipIndex idx;
    try {
        if (j.at("schema").get<int>() != 1) {
            throw FormatError("clip index " + path.string() + ": unsupported schema");
        }
        idx.sample_rate = j.at("sample_rate").get<int>();
        idx.clip_samples = j.at("clip_samples").get<std::size_t>();
        for (const auto& c : j.at("clips")) {
            idx.clips.push_back({c.at("path").get<std::string>(),
                                 c.at("label").get<std::string>(),
                                 c.at("subclass").get<std::string>(),
                                 c.at("source").get<std::string>()});
        }
        idx.skipped = j.value("skipped", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError("clip index " + path.string() + ": " + ex.what());
    }
    return idx;
}

/// Optional subclass -> major-category map ({"dog": "animal", ...}).
inline std::map<std::string, std::string> load_category_map(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFoundError(path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError("category map " + path.string() + ": " + ex.what());
    }
    std::map<std::string, std::string> m;
    for (const auto& [k, v] : j.items()) m[k] = v.get<std::string>();
    return m;
}

struct IngestOptions {
    int sample_rate = 16000;
    double acquisition_s = 2.5;
    int clips_per_recording = 2;
};

/// Normalizes the dataset: loads every manifest row, resamples to the
/// target rate, slices the recording into acquisition-length clips (two
/// per recording for the stock 5 s files) and writes them under
/// out_dir/clips. Unreadable files are skipped and logged in the index;
/// the index itself goes to out_dir/index.json.
inline ClipIndex ingest_esc50(const std::filesystem::path& root,
                              const std::filesystem::path& manifest,
                              const std::map<std::string, std::string>& category_map,
                              const std::filesystem::path& out_dir,
                              const IngestOptions& opt = {}) {
    const auto rows = parse_esc50_manifest(manifest);
    std::filesystem::create_directories(out_dir / "clips");

    ClipIndex idx;
    idx.sample_rate = opt.sample_rate;
    idx.clip_samples = static_cast<std::size_t>(
        std::llround(opt.acquisition_s * opt.sample_rate));

    for (const auto& row : rows) {
        std::filesystem::path src = root / row.filename;
        if (!std::filesystem::exists(src)) src = root / "audio" / row.filename;
        Signal sig;
        try {
            sig = read_wav(src);
        } catch (const DataError& ex) {
            idx.skipped.push_back(row.filename + ": " + ex.what());
            continue;
        }
        if (sig.sample_rate != opt.sample_rate) {
            sig = resample(sig, opt.sample_rate);
        }
        std::string label = row.category;
        if (!category_map.empty()) {
            const auto it = category_map.find(row.category);
            if (it == category_map.end()) {
                throw DataError("category map has no entry for '" + row.category + "'");
            }
            label = it->second;
        }

        const auto stem = std::filesystem::path(row.filename).stem().string();
        int written = 0;
        for (int c = 0; c < opt.clips_per_recording; ++c) {
            const std::size_t lo = static_cast<std::size_t>(c) * idx.clip_samples;
            if (lo + idx.clip_samples > sig.samples.size()) break;
            Signal clip;
            clip.sample_rate = opt.sample_rate;
            clip.samples.assign(
                sig.samples.begin() + static_cast<std::ptrdiff_t>(lo),
                sig.samples.begin() + static_cast<std::ptrdiff_t>(lo + idx.clip_samples));
            const std::string rel =
                "clips/" + stem + "_" + std::to_string(c) + ".wav";
            write_wav(clip, out_dir / rel);
            idx.clips.push_back({rel, label, row.category, row.filename});
            ++written;
        }
        if (written < opt.clips_per_recording) {
            idx.skipped.push_back(row.filename + ": short recording, wrote " +
                                  std::to_string(written) + " clips");
        }
    }

    save_clip_index(idx, out_dir / "index.json");
    return idx;
}

}  // namespace sfanc
