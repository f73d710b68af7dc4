// Command-line front end: dataset materialization, training runs, ablation
// grids, and run-summary reports.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedmix/config.hpp"
#include "fedmix/report.hpp"
#include "fedmix/serialize.hpp"

namespace fs = std::filesystem;

namespace {

struct TrainOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> rounds;
    std::optional<std::string> aggregation;
    std::optional<int> workers;
    std::optional<std::string> label;
    bool no_selection = false;
};

fedmix::ExperimentConfig load_config(const std::string& path, const TrainOverrides& overrides) {
    auto config = fedmix::cfg::parse_config(path);
    if (overrides.seed) config.seed = *overrides.seed;
    if (overrides.rounds) config.rounds = *overrides.rounds;
    if (overrides.aggregation) config.aggregation = fedmix::cfg::parse_aggregation(*overrides.aggregation, 0);
    if (overrides.label) config.label = *overrides.label;
    if (overrides.no_selection) config.selection = false;
    if (overrides.workers) {
        config.workers = *overrides.workers;
    } else if (const char* env = std::getenv("FEDMIX_WORKERS")) {
        config.workers = std::max(1, std::atoi(env));
    }
    config.validate();
    return config;
}

void run_gen_data(const std::string& config_path, const std::string& out_dir) {
    const auto config = load_config(config_path, {});
    fs::create_directories(out_dir);
    for (std::size_t i = 0; i < config.clients.size(); ++i) {
        fedmix::ClientConfig cc = config.clients[i];
        cc.data.image_height = config.image_size;
        cc.data.image_width = config.image_size;
        const auto seed = config.client_seed(i);
        const auto dataset = fedmix::generate_client(cc.data, cc.level, cc.samples, seed, static_cast<int>(i));
        const auto base = fs::path(out_dir) / ("client_" + std::to_string(i));
        const auto bytes = fedmix::io::encode_dataset(dataset);
        fedmix::io::write_file(base.string() + ".fmds", bytes);

        nlohmann::json sidecar{
            {"client_id", dataset.client_id},
            {"level", std::string(1, fedmix::level_code(dataset.level))},
            {"samples", cc.samples},
            {"train", dataset.train.size()},
            {"test", dataset.test.size()},
            {"seed", seed},
            {"image_size", config.image_size},
            {"format_version", fedmix::io::kFormatVersion},
            {"data_hash", fedmix::report::hash_hex(fedmix::io::fnv1a64(bytes))},
            {"spec",
             {{"intensity_offset", cc.data.intensity_offset},
              {"noise", cc.data.noise_sigma},
              {"lesion_min", cc.data.lesion_radius_min},
              {"lesion_max", cc.data.lesion_radius_max},
              {"healthy_fraction", cc.data.resolved_healthy_fraction(cc.level)},
              {"background", cc.data.background_level},
              {"foreground", cc.data.foreground_level},
              {"texture", cc.data.texture_amplitude},
              {"distractors", cc.data.distractor_count},
              {"distractor_radius", cc.data.distractor_radius}}},
        };
        std::ofstream json_out(base.string() + ".json");
        json_out << sidecar.dump(2) << '\n';
        std::cout << "wrote " << base.string() << ".fmds (" << dataset.train.size() << " train / "
                  << dataset.test.size() << " test)\n";
    }
}

void run_train(const std::string& config_path, const std::string& out_dir, const TrainOverrides& overrides) {
    const auto config = load_config(config_path, overrides);
    fedmix::Experiment exp = fedmix::setup_experiment(config);
    fedmix::report::RunWriter writer(out_dir, exp);
    fedmix::run_experiment(exp, [&](const fedmix::RoundReport& report) {
        writer.on_round(report);
        double dice_sum = 0.0;
        for (const auto& rec : report.clients) dice_sum += rec.test_dice;
        std::cout << "round " << report.round << "/" << config.rounds << "  mean_test_dice "
                  << dice_sum / static_cast<double>(report.clients.size()) << "\n";
    });
    writer.finalize();
    std::cout << "run complete: " << out_dir << "\n";
}

struct AblationArm {
    std::string name;
    std::function<void(fedmix::ExperimentConfig&)> apply;
};

std::vector<AblationArm> ablation_arms(const std::string& preset, const fedmix::ExperimentConfig& base) {
    using fedmix::Aggregation;
    using fedmix::SupervisionLevel;
    if (preset == "selection") {
        return {{"selection_on", [](fedmix::ExperimentConfig& c) { c.selection = true; }},
                {"selection_off", [](fedmix::ExperimentConfig& c) { c.selection = false; }}};
    }
    if (preset == "aggregation") {
        return {{"fedavg", [](fedmix::ExperimentConfig& c) { c.aggregation = Aggregation::FedAvg; }},
                {"adaptive", [](fedmix::ExperimentConfig& c) { c.aggregation = Aggregation::Adaptive; }}};
    }
    if (preset == "supervision") {
        if (base.clients.size() != 3)
            throw fedmix::ConfigError("the supervision preset sweeps a 3-client setup; config has " +
                                      std::to_string(base.clients.size()));
        auto set_levels = [](fedmix::ExperimentConfig& c, SupervisionLevel a, SupervisionLevel b,
                             SupervisionLevel d) {
            c.clients[0].level = a;
            c.clients[1].level = b;
            c.clients[2].level = d;
        };
        return {{"uul",
                 [set_levels](fedmix::ExperimentConfig& c) {
                     set_levels(c, SupervisionLevel::Unlabeled, SupervisionLevel::Unlabeled,
                                SupervisionLevel::PixelLevel);
                 }},
                {"iul",
                 [set_levels](fedmix::ExperimentConfig& c) {
                     set_levels(c, SupervisionLevel::ImageLevel, SupervisionLevel::Unlabeled,
                                SupervisionLevel::PixelLevel);
                 }},
                {"bbl", [set_levels](fedmix::ExperimentConfig& c) {
                     set_levels(c, SupervisionLevel::BoundingBox, SupervisionLevel::BoundingBox,
                                SupervisionLevel::PixelLevel);
                 }}};
    }
    throw fedmix::ConfigError("unknown ablation preset '" + preset +
                              "' (expected selection, aggregation or supervision)");
}

void run_ablate(const std::string& preset, const std::string& config_path, const std::string& out_dir,
                int seed_count, std::optional<std::uint64_t> base_seed, std::optional<int> workers) {
    TrainOverrides overrides;
    overrides.workers = workers;
    const auto base = load_config(config_path, overrides);
    const auto arms = ablation_arms(preset, base);
    const std::uint64_t first_seed = base_seed.value_or(base.seed);

    std::vector<fedmix::report::RunSummary> summaries;
    for (const auto& arm : arms) {
        for (int s = 0; s < seed_count; ++s) {
            auto config = base;
            arm.apply(config);
            config.seed = first_seed + static_cast<std::uint64_t>(s);
            config.label = arm.name;
            config.validate();
            const auto dir = fs::path(out_dir) / arm.name / ("seed_" + std::to_string(config.seed));
            std::cout << "=== " << arm.name << " seed " << config.seed << " ===\n";
            fedmix::report::run_experiment_to_dir(config, dir.string());
            summaries.push_back(fedmix::report::read_run_summary(dir.string()));
        }
    }
    const auto table = fedmix::report::summarize_runs(summaries);
    fedmix::io::write_file((fs::path(out_dir) / "summary.csv").string(), table);
    std::cout << table;
}

void run_report(const std::vector<std::string>& dirs, const std::optional<std::string>& out_file) {
    std::vector<fedmix::report::RunSummary> summaries;
    for (const auto& dir : dirs) {
        auto summary = fedmix::report::read_run_summary(dir);
        if (!summary.complete)
            std::cerr << "warning: " << dir << " has no end timestamp (truncated run?)\n";
        summaries.push_back(std::move(summary));
    }
    const auto table = fedmix::report::summarize_runs(summaries);
    if (out_file) fedmix::io::write_file(*out_file, table);
    std::cout << table;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated mixed-supervision segmentation simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir, preset;
    std::vector<std::string> report_dirs;
    std::string out_file;
    TrainOverrides overrides;
    std::uint64_t seed_value = 0;
    int rounds_value = 0, workers_value = 0, seed_count = 5;
    std::uint64_t base_seed_value = 0;
    std::string aggregation_value, label_value;

    auto* gen = app.add_subcommand("gen-data", "Materialize the configured client datasets");
    gen->add_option("--config", config_path, "experiment config file")->required();
    gen->add_option("--out-dir", out_dir, "output directory")->required();

    auto* train = app.add_subcommand("train", "Run one experiment into a run directory");
    train->add_option("--config", config_path, "experiment config file")->required();
    train->add_option("--out-dir", out_dir, "run directory")->required();
    auto* seed_opt = train->add_option("--seed", seed_value, "override the experiment seed");
    auto* rounds_opt = train->add_option("--rounds", rounds_value, "override the round count");
    auto* agg_opt = train->add_option("--aggregation", aggregation_value, "fedavg or adaptive");
    auto* label_opt = train->add_option("--label", label_value, "run label used by report grouping");
    auto* workers_opt = train->add_option("--workers", workers_value, "parallel client workers");
    train->add_flag("--no-selection", overrides.no_selection, "disable dynamic sample selection");

    auto* ablate = app.add_subcommand("ablate", "Run a preset ablation grid over several seeds");
    ablate->add_option("preset", preset, "selection | aggregation | supervision")->required();
    ablate->add_option("--config", config_path, "base experiment config")->required();
    ablate->add_option("--out-dir", out_dir, "grid output directory")->required();
    ablate->add_option("--seeds", seed_count, "number of seeds per arm (default 5)");
    auto* base_seed_opt = ablate->add_option("--base-seed", base_seed_value, "first seed (default: config seed)");
    auto* ablate_workers_opt = ablate->add_option("--workers", workers_value, "parallel client workers");

    auto* report = app.add_subcommand("report", "Summarize finished run directories (median/IQR per client)");
    report->add_option("dirs", report_dirs, "run directories")->required()->expected(-1);
    auto* out_opt = report->add_option("--out", out_file, "also write the summary CSV here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            run_gen_data(config_path, out_dir);
        } else if (train->parsed()) {
            if (*seed_opt) overrides.seed = seed_value;
            if (*rounds_opt) overrides.rounds = rounds_value;
            if (*agg_opt) overrides.aggregation = aggregation_value;
            if (*label_opt) overrides.label = label_value;
            if (*workers_opt) overrides.workers = workers_value;
            run_train(config_path, out_dir, overrides);
        } else if (ablate->parsed()) {
            run_ablate(preset, config_path, out_dir, seed_count,
                       *base_seed_opt ? std::optional<std::uint64_t>(base_seed_value) : std::nullopt,
                       *ablate_workers_opt ? std::optional<int>(workers_value) : std::nullopt);
        } else if (report->parsed()) {
            run_report(report_dirs, *out_opt ? std::optional<std::string>(out_file) : std::nullopt);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
