#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedmix/errors.hpp"
#include "fedmix/orchestrator.hpp"
#include "fedmix/serialize.hpp"

namespace fedmix::report {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kCsvHeader = "round,client_id,loss,selected,weight,test_dice\n";
inline constexpr const char* kCsvName = "rounds.csv";
inline constexpr const char* kManifestName = "manifest.json";

// Pinned numeric formatting so identical runs produce identical bytes.
inline std::string format_value(double v) {
    if (std::isnan(v)) return "nan";
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.10g", v);
    return buffer;
}

inline std::string csv_rows(const RoundReport& report) {
    std::string out;
    for (const auto& rec : report.clients) {
        out += std::to_string(report.round);
        out += ',';
        out += std::to_string(rec.client_id);
        out += ',';
        out += rec.loss ? format_value(*rec.loss) : "nan";
        out += ',';
        out += std::to_string(rec.selected);
        out += ',';
        out += format_value(rec.weight);
        out += ',';
        out += format_value(rec.test_dice);
        out += '\n';
    }
    return out;
}

inline std::string iso_timestamp_utc() {
    const std::time_t now = std::time(nullptr);
    std::tm utc{};
    gmtime_r(&now, &utc);
    char buffer[32];
    std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &utc);
    return buffer;
}

inline nlohmann::json config_to_json(const ExperimentConfig& config) {
    nlohmann::json j;
    j["rounds"] = config.rounds;
    j["epsilon"] = config.epsilon;
    j["lambda"] = config.lambda;
    j["beta"] = config.beta;
    j["aggregation"] = to_string(config.aggregation);
    j["regime"] = to_string(config.regime);
    j["seed"] = config.seed;
    j["image_size"] = config.image_size;
    j["hidden_channels"] = config.hidden_channels;
    j["kernel"] = config.kernel;
    j["learning_rate"] = config.learning_rate;
    j["batch_size"] = config.batch_size;
    j["local_steps"] = config.local_steps;
    j["selection"] = config.selection;
    j["checkpoint_every"] = config.checkpoint_every;
    j["workers"] = config.workers;
    j["label"] = config.label;
    j["clients"] = nlohmann::json::array();
    for (std::size_t i = 0; i < config.clients.size(); ++i) {
        const auto& c = config.clients[i];
        nlohmann::json cj;
        cj["level"] = std::string(1, level_code(c.level));
        cj["samples"] = c.samples;
        cj["seed"] = config.client_seed(i);
        cj["intensity_offset"] = c.data.intensity_offset;
        cj["noise"] = c.data.noise_sigma;
        cj["lesion_min"] = c.data.lesion_radius_min;
        cj["lesion_max"] = c.data.lesion_radius_max;
        cj["healthy_fraction"] = c.data.resolved_healthy_fraction(c.level);
        cj["background"] = c.data.background_level;
        cj["foreground"] = c.data.foreground_level;
        cj["texture"] = c.data.texture_amplitude;
        cj["distractors"] = c.data.distractor_count;
        cj["distractor_radius"] = c.data.distractor_radius;
        j["clients"].push_back(cj);
    }
    return j;
}

inline std::string hash_hex(std::uint64_t hash) {
    char buffer[20];
    std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(hash));
    return buffer;
}

// Owns one run directory: manifest written before training (no end timestamp
// until the run completes, so truncated runs are detectable), an append-only
// per-round CSV, and parameter checkpoints.
class RunWriter {
public:
    RunWriter(std::string directory, const Experiment& exp) : dir_(std::move(directory)), exp_(exp) {
        std::filesystem::create_directories(dir_);
        manifest_ = nlohmann::json{
            {"tool_version", kToolVersion},
            {"format_version", io::kFormatVersion},
            {"label", exp.config.label},
            {"seed", exp.config.seed},
            {"augmentation", "none"},
            {"config", config_to_json(exp.config)},
            {"csv", kCsvName},
            {"started_at", iso_timestamp_utc()},
            {"finished_at", nullptr},
        };
        manifest_["dataset_hashes"] = nlohmann::json::array();
        for (const auto& client : exp.clients)
            manifest_["dataset_hashes"].push_back(hash_hex(io::fnv1a64(io::encode_dataset(client.dataset))));
        write_manifest();
        csv_.open(path(kCsvName), std::ios::trunc);
        if (!csv_) throw UsageError("cannot open CSV for writing in " + dir_);
        csv_ << kCsvHeader;
        csv_.flush();
    }

    void on_round(const RoundReport& report) {
        csv_ << csv_rows(report);
        csv_.flush();
        if (exp_.config.checkpoint_every > 0 && report.round % exp_.config.checkpoint_every == 0) {
            io::save_params(path("round_" + std::to_string(report.round) + "_f1.pv"), exp_.global_f1);
            io::save_params(path("round_" + std::to_string(report.round) + "_f2.pv"), exp_.global_f2);
        }
    }

    // Final checkpoints plus the completion timestamp. Local learning keeps
    // the reference labeled client's model as the final F1.
    void finalize() {
        if (exp_.config.regime == Regime::LocalLearning) {
            io::save_params(path("final_f1.pv"), exp_.clients[exp_.labeled_reference].params_f1);
        } else {
            io::save_params(path("final_f1.pv"), exp_.global_f1);
            io::save_params(path("final_f2.pv"), exp_.global_f2);
        }
        csv_.close();
        manifest_["finished_at"] = iso_timestamp_utc();
        write_manifest();
    }

    std::string path(const std::string& name) const { return (std::filesystem::path(dir_) / name).string(); }

private:
    void write_manifest() {
        std::ofstream out(path(kManifestName), std::ios::trunc);
        if (!out) throw UsageError("cannot write manifest in " + dir_);
        out << manifest_.dump(2) << '\n';
    }

    std::string dir_;
    const Experiment& exp_;
    nlohmann::json manifest_;
    std::ofstream csv_;
};

// Runs the configured experiment and materializes the run directory.
inline std::vector<RoundReport> run_experiment_to_dir(const ExperimentConfig& config, const std::string& dir) {
    Experiment exp = setup_experiment(config);
    RunWriter writer(dir, exp);
    auto reports = run_experiment(exp, [&](const RoundReport& r) { writer.on_round(r); });
    writer.finalize();
    return reports;
}

// --- summaries over finished runs -----------------------------------------

inline double median(std::vector<double> xs) {
    if (xs.empty()) throw UsageError("median: empty input");
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// Linear-interpolation quantile on the sorted order statistics.
inline double quantile(std::vector<double> xs, double q) {
    if (xs.empty()) throw UsageError("quantile: empty input");
    std::sort(xs.begin(), xs.end());
    const double position = q * static_cast<double>(xs.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(position);
    const std::size_t hi = std::min(lo + 1, xs.size() - 1);
    const double fraction = position - static_cast<double>(lo);
    return xs[lo] * (1.0 - fraction) + xs[hi] * fraction;
}

inline double interquartile_range(const std::vector<double>& xs) {
    return quantile(xs, 0.75) - quantile(xs, 0.25);
}

// Final-round metrics of one finished run directory.
struct RunSummary {
    std::string label;
    std::uint64_t seed = 0;
    bool complete = false;
    std::vector<std::pair<int, double>> final_test_dice;  // (client_id, dice)
    double client_average = 0.0;
};

inline RunSummary read_run_summary(const std::string& dir) {
    namespace fs = std::filesystem;
    RunSummary summary;
    {
        std::ifstream in((fs::path(dir) / kManifestName).string());
        if (!in) throw UsageError("no manifest in " + dir);
        nlohmann::json manifest = nlohmann::json::parse(in);
        summary.label = manifest.value("label", "");
        summary.seed = manifest.value("seed", std::uint64_t{0});
        summary.complete = !manifest["finished_at"].is_null();
    }
    std::ifstream csv((fs::path(dir) / kCsvName).string());
    if (!csv) throw UsageError("no rounds.csv in " + dir);
    std::string line;
    std::getline(csv, line);  // header
    int last_round = -1;
    std::vector<std::pair<int, double>> rows;
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t begin = 0;
        while (true) {
            const auto comma = line.find(',', begin);
            fields.push_back(line.substr(begin, comma - begin));
            if (comma == std::string::npos) break;
            begin = comma + 1;
        }
        if (fields.size() != 6) throw ValidationError("malformed CSV row in " + dir + ": " + line);
        const int round = std::stoi(fields[0]);
        if (round != last_round) {
            last_round = round;
            rows.clear();
        }
        rows.emplace_back(std::stoi(fields[1]), std::stod(fields[5]));
    }
    if (rows.empty()) throw ValidationError("rounds.csv has no data rows in " + dir);
    summary.final_test_dice = rows;
    double sum = 0.0;
    for (const auto& [id, dice] : rows) sum += dice;
    summary.client_average = sum / static_cast<double>(rows.size());
    return summary;
}

// Groups runs by label and reports the median and IQR of the final-round test
// Dice per client, plus the client average. Output is CSV text.
inline std::string summarize_runs(const std::vector<RunSummary>& runs) {
    std::map<std::string, std::vector<const RunSummary*>> by_label;
    for (const auto& run : runs) by_label[run.label].push_back(&run);

    std::string out = "label,metric,seeds,median,iqr\n";
    for (const auto& [label, group] : by_label) {
        std::map<int, std::vector<double>> per_client;
        std::vector<double> averages;
        for (const auto* run : group) {
            for (const auto& [client_id, dice] : run->final_test_dice) per_client[client_id].push_back(dice);
            averages.push_back(run->client_average);
        }
        for (const auto& [client_id, values] : per_client) {
            out += label + ",client_" + std::to_string(client_id) + "," + std::to_string(values.size()) + "," +
                   format_value(median(values)) + "," + format_value(interquartile_range(values)) + "\n";
        }
        out += label + ",client_avg," + std::to_string(averages.size()) + "," + format_value(median(averages)) +
               "," + format_value(interquartile_range(averages)) + "\n";
    }
    return out;
}

}  // namespace fedmix::report
