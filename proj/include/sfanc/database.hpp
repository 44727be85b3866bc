#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfanc/adaptive.hpp"
#include "sfanc/base64.hpp"
#include "sfanc/errors.hpp"
#include "sfanc/meta.hpp"
#include "sfanc/rng.hpp"

namespace sfanc {

/// Hex FNV-1a over all plant coefficients; persisted with each filter so
/// a database can be matched to the plant it was trained for.
inline std::string plant_fingerprint(const AncPlant& plant) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto* path : {&plant.primary, &plant.secondary, &plant.secondary_estimate}) {
        h = fnv1a_bytes(path->taps.data(), path->taps.size() * sizeof(double), h);
        h = fnv1a("|", h);
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

/// One pretrained control filter plus its training metadata.
struct FilterEntry {
    std::string category;
    ControlFilter filter;
    MetaConfig config;
    std::string fingerprint;
    std::vector<double> loss_history;
    std::string method = "maml_fxlms";
};

/// Category label -> pretrained filter. The map keeps labels sorted so
/// serialization is stable.
struct FilterDatabase {
    std::map<std::string, FilterEntry> entries;

    std::size_t filter_length() const {
        return entries.empty() ? 0 : entries.begin()->second.filter.length();
    }

    const FilterEntry* find(const std::string& label) const {
        const auto it = entries.find(label);
        return it == entries.end() ? nullptr : &it->second;
    }
};

inline nlohmann::ordered_json database_to_json(const FilterDatabase& db) {
    nlohmann::ordered_json root;
    root["schema"] = 1;
    root["entries"] = nlohmann::ordered_json::array();
    for (const auto& [label, e] : db.entries) {
        nlohmann::ordered_json j;
        j["category"] = label;
        j["L"] = e.filter.length();
        j["weights_b64"] = doubles_to_b64(e.filter.weights);
        j["alpha"] = e.config.alpha;
        j["beta"] = e.config.beta;
        j["K"] = e.config.support_size;
        j["J"] = e.config.query_size;
        j["iterations"] = e.config.iterations;
        j["seed"] = e.config.seed;
        j["loss_history"] = e.loss_history;
        j["plant_fingerprint"] = e.fingerprint;
        j["method"] = e.method;
        root["entries"].push_back(std::move(j));
    }
    return root;
}

inline FilterDatabase database_from_json(const nlohmann::json& root) {
    if (!root.contains("schema") || root["schema"].get<int>() != 1) {
        throw FormatError("filter database: unsupported schema");
    }
    FilterDatabase db;
    for (const auto& j : root.at("entries")) {
        FilterEntry e;
        e.category = j.at("category").get<std::string>();
        e.filter = ControlFilter(b64_to_doubles(j.at("weights_b64").get<std::string>()));
        if (e.filter.length() != j.at("L").get<std::size_t>()) {
            throw FormatError("filter database: weight blob does not match L");
        }
        e.config.alpha = j.at("alpha").get<double>();
        e.config.beta = j.at("beta").get<double>();
        e.config.support_size = j.at("K").get<int>();
        e.config.query_size = j.at("J").get<int>();
        e.config.iterations = j.at("iterations").get<int>();
        e.config.seed = j.at("seed").get<std::uint64_t>();
        e.loss_history = j.at("loss_history").get<std::vector<double>>();
        e.fingerprint = j.value("plant_fingerprint", std::string{});
        e.method = j.value("method", std::string{"maml_fxlms"});
        db.entries.emplace(e.category, std::move(e));
    }
    return db;
}

inline void save_database(const FilterDatabase& db, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << database_to_json(db).dump(2) << '\n';
}

inline FilterDatabase load_database(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFoundError(path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError("filter database " + path.string() + ": " + ex.what());
    }
    try {
        return database_from_json(j);
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError("filter database " + path.string() + ": " + ex.what());
    }
}

/// Pretrains one filter per category and collects them into a database.
/// Errors are re-raised tagged with the offending category.
inline FilterDatabase build_database(
    const std::map<std::string, TaskDistribution>& categories,
    const std::map<std::string, MetaConfig>& configs, const AncPlant& plant) {
    if (categories.empty()) {
        throw std::invalid_argument("build_database: no categories");
    }
    FilterDatabase db;
    const std::string fp = plant_fingerprint(plant);
    for (const auto& [label, dist] : categories) {
        const auto cfg_it = configs.find(label);
        if (cfg_it == configs.end()) {
            throw std::invalid_argument("build_database: no config for category " + label);
        }
        try {
            auto result = pretrain(dist, cfg_it->second, plant);
            FilterEntry e;
            e.category = label;
            e.filter = std::move(result.filter);
            e.config = cfg_it->second;
            e.fingerprint = fp;
            e.loss_history = std::move(result.loss_history);
            db.entries.emplace(label, std::move(e));
        } catch (const DivergenceError& ex) {
            throw DivergenceError("category " + label + ": " + ex.what(),
                                  ex.sample_index);
        } catch (const NumericError& ex) {
            throw NumericError("category " + label + ": " + ex.what());
        } catch (const DataError& ex) {
            throw DataError("category " + label + ": " + ex.what());
        }
    }
    return db;
}

}  // namespace sfanc
