#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fedmix/errors.hpp"
#include "fedmix/orchestrator.hpp"

// Experiment configuration file format: flat "key = value" lines, `#`
// comments, and one `[client]` section per client after the global keys.
//
//   rounds = 30
//   epsilon = 0.9
//
//   [client]
//   level = U
//   samples = 100
//
// Unknown keys are rejected with a nearest-key suggestion; range violations
// name the offending key.

namespace fedmix::cfg {

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    std::size_t end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diagonal = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diagonal + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diagonal = up;
        }
    }
    return row[b.size()];
}

inline std::string suggest(const std::string& key, const std::vector<std::string>& known) {
    std::string best;
    std::size_t best_distance = 4;  // suggest only reasonably close names
    for (const auto& candidate : known) {
        const std::size_t d = edit_distance(key, candidate);
        if (d < best_distance) {
            best_distance = d;
            best = candidate;
        }
    }
    return best;
}

[[noreturn]] inline void fail(int line, const std::string& message) {
    throw ConfigError("config line " + std::to_string(line) + ": " + message);
}

inline double parse_double(const std::string& value, int line, const std::string& key) {
    try {
        std::size_t used = 0;
        const double parsed = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        return parsed;
    } catch (const std::exception&) {
        fail(line, key + ": expected a number, got '" + value + "'");
    }
}

inline long long parse_int(const std::string& value, int line, const std::string& key) {
    try {
        std::size_t used = 0;
        const long long parsed = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        return parsed;
    } catch (const std::exception&) {
        fail(line, key + ": expected an integer, got '" + value + "'");
    }
}

inline bool parse_bool(const std::string& value, int line, const std::string& key) {
    if (value == "on" || value == "true" || value == "1") return true;
    if (value == "off" || value == "false" || value == "0") return false;
    fail(line, key + ": expected on/off, got '" + value + "'");
}

inline const std::vector<std::string>& global_keys() {
    static const std::vector<std::string> keys{
        "rounds",     "epsilon",   "lambda",           "beta",       "seed",
        "aggregation", "regime",   "selection",        "image_size", "hidden_channels",
        "kernel",     "learning_rate", "batch_size",   "local_steps", "checkpoint_every",
        "workers",    "label",
    };
    return keys;
}

inline const std::vector<std::string>& client_keys() {
    static const std::vector<std::string> keys{
        "level",       "samples",    "seed",       "intensity_offset", "noise",
        "lesion_min",  "lesion_max", "healthy_fraction", "background", "foreground",
        "texture",     "distractors", "distractor_radius",
    };
    return keys;
}

}  // namespace detail

inline SupervisionLevel parse_level(const std::string& value, int line) {
    if (value == "L" || value == "pixel") return SupervisionLevel::PixelLevel;
    if (value == "B" || value == "box") return SupervisionLevel::BoundingBox;
    if (value == "I" || value == "image") return SupervisionLevel::ImageLevel;
    if (value == "U" || value == "unlabeled" || value == "none") return SupervisionLevel::Unlabeled;
    detail::fail(line, "level: expected one of L/B/I/U, got '" + value + "'");
}

inline Aggregation parse_aggregation(const std::string& value, int line) {
    if (value == "fedavg") return Aggregation::FedAvg;
    if (value == "adaptive") return Aggregation::Adaptive;
    detail::fail(line, "aggregation: expected fedavg or adaptive, got '" + value + "'");
}

inline Regime parse_regime(const std::string& value, int line) {
    if (value == "fedmix") return Regime::FedMix;
    if (value == "local_learning") return Regime::LocalLearning;
    if (value == "fully_supervised") return Regime::FullySupervisedFed;
    detail::fail(line, "regime: expected fedmix, local_learning or fully_supervised, got '" + value + "'");
}

// Parses configuration text; all defaults resolved, all ranges validated.
inline ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig config;
    std::istringstream stream(text);
    std::string raw_line;
    int line = 0;
    bool in_client = false;

    auto set_global = [&](const std::string& key, const std::string& value) {
        if (key == "rounds") config.rounds = static_cast<int>(detail::parse_int(value, line, key));
        else if (key == "epsilon") config.epsilon = detail::parse_double(value, line, key);
        else if (key == "lambda") config.lambda = detail::parse_double(value, line, key);
        else if (key == "beta") config.beta = detail::parse_double(value, line, key);
        else if (key == "seed") config.seed = static_cast<std::uint64_t>(detail::parse_int(value, line, key));
        else if (key == "aggregation") config.aggregation = parse_aggregation(value, line);
        else if (key == "regime") config.regime = parse_regime(value, line);
        else if (key == "selection") config.selection = detail::parse_bool(value, line, key);
        else if (key == "image_size") config.image_size = static_cast<int>(detail::parse_int(value, line, key));
        else if (key == "hidden_channels")
            config.hidden_channels = static_cast<int>(detail::parse_int(value, line, key));
        else if (key == "kernel") config.kernel = static_cast<int>(detail::parse_int(value, line, key));
        else if (key == "learning_rate") config.learning_rate = detail::parse_double(value, line, key);
        else if (key == "batch_size") config.batch_size = static_cast<int>(detail::parse_int(value, line, key));
        else if (key == "local_steps") config.local_steps = static_cast<int>(detail::parse_int(value, line, key));
        else if (key == "checkpoint_every")
            config.checkpoint_every = static_cast<int>(detail::parse_int(value, line, key));
        else if (key == "workers") config.workers = static_cast<int>(detail::parse_int(value, line, key));
        else if (key == "label") config.label = value;
        else {
            const auto near = detail::suggest(key, detail::global_keys());
            detail::fail(line, "unknown key '" + key + "'" + (near.empty() ? "" : " (did you mean '" + near + "'?)"));
        }
    };

    auto set_client = [&](ClientConfig& client, const std::string& key, const std::string& value) {
        if (key == "level") client.level = parse_level(value, line);
        else if (key == "samples") client.samples = static_cast<int>(detail::parse_int(value, line, key));
        else if (key == "seed") client.seed = static_cast<std::uint64_t>(detail::parse_int(value, line, key));
        else if (key == "intensity_offset") client.data.intensity_offset = detail::parse_double(value, line, key);
        else if (key == "noise") client.data.noise_sigma = detail::parse_double(value, line, key);
        else if (key == "lesion_min") client.data.lesion_radius_min = detail::parse_double(value, line, key);
        else if (key == "lesion_max") client.data.lesion_radius_max = detail::parse_double(value, line, key);
        else if (key == "healthy_fraction") client.data.healthy_fraction = detail::parse_double(value, line, key);
        else if (key == "background") client.data.background_level = detail::parse_double(value, line, key);
        else if (key == "foreground") client.data.foreground_level = detail::parse_double(value, line, key);
        else if (key == "texture") client.data.texture_amplitude = detail::parse_double(value, line, key);
        else if (key == "distractors")
            client.data.distractor_count = static_cast<int>(detail::parse_int(value, line, key));
        else if (key == "distractor_radius")
            client.data.distractor_radius = detail::parse_double(value, line, key);
        else {
            const auto near = detail::suggest(key, detail::client_keys());
            detail::fail(line, "unknown key '" + key + "' in [client] section" +
                                   (near.empty() ? "" : " (did you mean '" + near + "'?)"));
        }
    };

    while (std::getline(stream, raw_line)) {
        ++line;
        const auto hash = raw_line.find('#');
        if (hash != std::string::npos) raw_line.erase(hash);
        const std::string content = detail::trim(raw_line);
        if (content.empty()) continue;

        if (content.front() == '[') {
            if (content != "[client]")
                detail::fail(line, "unknown section " + content + ", only [client] is supported");
            config.clients.emplace_back();
            in_client = true;
            continue;
        }

        const auto equals = content.find('=');
        if (equals == std::string::npos) detail::fail(line, "expected 'key = value', got '" + content + "'");
        const std::string key = detail::trim(content.substr(0, equals));
        const std::string value = detail::trim(content.substr(equals + 1));
        if (key.empty()) detail::fail(line, "empty key");

        if (in_client)
            set_client(config.clients.back(), key, value);
        else
            set_global(key, value);
    }

    config.validate();
    return config;
}

inline ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str());
}

}  // namespace fedmix::cfg
