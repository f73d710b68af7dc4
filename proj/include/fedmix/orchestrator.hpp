#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "fedmix/aggregation.hpp"
#include "fedmix/client.hpp"
#include "fedmix/errors.hpp"
#include "fedmix/micromodel.hpp"
#include "fedmix/synthdata.hpp"

namespace fedmix {

enum class Aggregation { FedAvg, Adaptive };
enum class Regime { FedMix, LocalLearning, FullySupervisedFed };

inline const char* to_string(Aggregation a) { return a == Aggregation::FedAvg ? "fedavg" : "adaptive"; }
inline const char* to_string(Regime r) {
    switch (r) {
        case Regime::FedMix: return "fedmix";
        case Regime::LocalLearning: return "local_learning";
        case Regime::FullySupervisedFed: return "fully_supervised";
    }
    return "?";
}

struct ClientConfig {
    SupervisionLevel level = SupervisionLevel::Unlabeled;
    int samples = 100;
    std::uint64_t seed = 0;  // 0: derived from the experiment seed and index
    ClientDataSpec data;
};

struct ExperimentConfig {
    std::vector<ClientConfig> clients;
    int rounds = 50;
    double epsilon = 0.9;
    double lambda = 10.0;
    double beta = 1.5;
    Aggregation aggregation = Aggregation::Adaptive;
    Regime regime = Regime::FedMix;
    std::uint64_t seed = 1;
    int image_size = 32;
    int hidden_channels = 8;
    int kernel = 3;
    double learning_rate = 1e-3;
    int batch_size = 16;
    int local_steps = 0;  // 0: one epoch over the selected samples per round
    bool selection = true;
    int checkpoint_every = 0;  // 0: final checkpoint only
    int workers = 1;
    std::string label;

    void validate() const {
        if (clients.empty()) throw ConfigError("clients: need at least one client");
        if (rounds < 1) throw ConfigError("rounds: must be >= 1");
        if (epsilon < 0.0 || epsilon > 1.0) throw ConfigError("epsilon: must be in [0,1]");
        if (lambda < 0.0) throw ConfigError("lambda: must be >= 0");
        if (beta <= 0.0) throw ConfigError("beta: must be > 0");
        if (seed == 0) throw ConfigError("seed: must be nonzero");
        if (image_size < 4) throw ConfigError("image_size: must be >= 4");
        if (hidden_channels < 1) throw ConfigError("hidden_channels: must be >= 1");
        if (kernel < 1 || kernel % 2 == 0) throw ConfigError("kernel: must be odd and >= 1");
        if (learning_rate <= 0.0) throw ConfigError("learning_rate: must be > 0");
        if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
        if (local_steps < 0) throw ConfigError("local_steps: must be >= 0 (0 = one epoch)");
        if (checkpoint_every < 0) throw ConfigError("checkpoint_every: must be >= 0");
        if (workers < 1) throw ConfigError("workers: must be >= 1");
        for (std::size_t i = 0; i < clients.size(); ++i)
            if (clients[i].samples < 5)
                throw ConfigError("client " + std::to_string(i) + ": samples must be >= 5");
        if (regime == Regime::LocalLearning) {
            bool any_labeled = false;
            for (const auto& c : clients) any_labeled |= c.level == SupervisionLevel::PixelLevel;
            if (!any_labeled)
                throw ConfigError("regime local_learning: needs at least one pixel-level (L) client");
        }
        if (regime == Regime::FullySupervisedFed) {
            for (std::size_t i = 0; i < clients.size(); ++i)
                if (clients[i].level != SupervisionLevel::PixelLevel)
                    throw ConfigError("regime fully_supervised: client " + std::to_string(i) +
                                      " must have pixel-level (L) labels");
        }
    }

    ModelSpec model_spec() const {
        ModelSpec spec;
        spec.height = image_size;
        spec.width = image_size;
        spec.hidden_channels = hidden_channels;
        spec.kernel = kernel;
        return spec;
    }

    std::uint64_t client_seed(std::size_t index) const {
        const auto& c = clients[index];
        return c.seed != 0 ? c.seed : rng::derive(seed, {rng::kTagData, 0xC0DEULL, index});
    }
};

struct ClientRoundRecord {
    int client_id = 0;
    std::optional<double> loss;
    int selected = 0;
    double weight = std::numeric_limits<double>::quiet_NaN();
    double test_dice = 0.0;
    double mean_consistency = std::numeric_limits<double>::quiet_NaN();
    std::array<int, 10> consistency_histogram{};  // train-sample consistencies, bins of 0.1
};

inline std::array<int, 10> consistency_histogram(const std::vector<double>& consistencies) {
    std::array<int, 10> bins{};
    for (double c : consistencies) {
        const int bin = std::min(9, std::max(0, static_cast<int>(c * 10.0)));
        bins[static_cast<std::size_t>(bin)] += 1;
    }
    return bins;
}

struct RoundReport {
    int round = 0;
    std::vector<ClientRoundRecord> clients;
    double wall_seconds = 0.0;
};

// Mean Dice of the hardened F1 prediction against truth over the test split.
inline double evaluate(const ModelSpec& spec, const ParamVector& params_f1, const ClientDataset& dataset) {
    if (dataset.test.empty()) throw UsageError("evaluate: empty test split");
    double sum = 0.0;
    for (const auto& sample : dataset.test)
        sum += dice_coefficient(harden(forward(spec, params_f1, sample.image)), sample.truth_mask);
    return sum / static_cast<double>(dataset.test.size());
}

namespace detail {

// Deterministic fan-out: any schedule gives the same per-index results
// because each task only touches its own slot.
template <typename Fn>
void parallel_for(int n, int workers, Fn&& fn) {
    if (workers <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const int count = std::min(workers, n);
    for (int t = 0; t < count; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

inline double mean(const std::vector<double>& xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

}  // namespace detail

// Federation runtime: client states plus the global dual-model parameters.
struct Experiment {
    ExperimentConfig config;
    ModelSpec spec;
    std::vector<ClientState> clients;
    ParamVector global_f1;
    ParamVector global_f2;
    int labeled_reference = -1;  // first pixel-level client; serves LL evaluation
};

inline Experiment setup_experiment(const ExperimentConfig& config) {
    config.validate();
    Experiment exp;
    exp.config = config;
    exp.spec = config.model_spec();
    for (std::size_t i = 0; i < config.clients.size(); ++i) {
        ClientConfig cc = config.clients[i];
        cc.data.image_height = config.image_size;
        cc.data.image_width = config.image_size;
        auto dataset =
            generate_client(cc.data, cc.level, cc.samples, config.client_seed(i), static_cast<int>(i));
        exp.clients.push_back(make_client_state(std::move(dataset), exp.spec, config.learning_rate));
        if (exp.labeled_reference < 0 && cc.level == SupervisionLevel::PixelLevel)
            exp.labeled_reference = static_cast<int>(i);
    }
    exp.global_f1 = init_params(exp.spec, rng::derive(config.seed, {rng::kTagInitF1}));
    exp.global_f2 = init_params(exp.spec, rng::derive(config.seed, {rng::kTagInitF2}));
    return exp;
}

// One synchronous federated round: every client downloads the globals, runs
// its local update, and the server folds the deltas back in client-index
// order before anyone starts round t+1.
inline RoundReport run_round(Experiment& exp, int round_index) {
    const auto start = std::chrono::steady_clock::now();
    const int n = static_cast<int>(exp.clients.size());

    LocalUpdateOptions options;
    options.epsilon = exp.config.epsilon;
    options.batch_size = exp.config.batch_size;
    options.selection_enabled = exp.config.selection;
    if (exp.config.local_steps > 0) options.steps = exp.config.local_steps;

    std::vector<LocalUpdateResult> results(n);
    detail::parallel_for(n, exp.config.workers, [&](int i) {
        results[i] = local_update(exp.clients[i], exp.global_f1, exp.global_f2, options);
    });

    // Clients that selected nothing have nothing to send; they sit the round
    // out and get weight zero instead of diluting the participants.
    std::vector<int> participants;
    for (int i = 0; i < n; ++i)
        if (results[i].selected_count > 0) participants.push_back(i);

    std::vector<double> weights(n, 0.0);
    if (participants.empty()) {
        // Nothing to aggregate; report count shares so the column stays a
        // distribution.
        std::vector<int> counts;
        for (const auto& client : exp.clients) counts.push_back(static_cast<int>(client.dataset.train.size()));
        weights = fedavg_weights(counts);
    } else {
        AggregationInputs inputs;
        inputs.lambda = exp.config.lambda;
        inputs.beta = exp.config.beta;
        for (int i : participants) {
            inputs.counts.push_back(static_cast<int>(exp.clients[i].dataset.train.size()));
            inputs.losses.push_back(results[i].loss);
            inputs.deltas_f1.push_back(std::move(results[i].delta_f1));
            inputs.deltas_f2.push_back(std::move(results[i].delta_f2));
        }
        auto aggregated = aggregate_round(exp.global_f1, exp.global_f2, inputs,
                                          exp.config.aggregation == Aggregation::Adaptive);
        exp.global_f1 = std::move(aggregated.theta_f1);
        exp.global_f2 = std::move(aggregated.theta_f2);
        for (std::size_t k = 0; k < participants.size(); ++k) weights[participants[k]] = aggregated.weights[k];
    }

    RoundReport report;
    report.round = round_index;
    report.clients.resize(n);
    detail::parallel_for(n, exp.config.workers, [&](int i) {
        auto& rec = report.clients[i];
        rec.client_id = exp.clients[i].client_id;
        rec.loss = results[i].loss;
        rec.selected = results[i].selected_count;
        rec.weight = weights[i];
        rec.mean_consistency = detail::mean(results[i].consistencies);
        rec.consistency_histogram = consistency_histogram(results[i].consistencies);
        rec.test_dice = evaluate(exp.spec, exp.global_f1, exp.clients[i].dataset);
    });
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

// Single-model supervised pass for the local-learning baseline: one round of
// Adam mini-batches on dice loss against the canonical pixel labels. Uses the
// same batch-stream derivation as local_update so trajectories line up with
// driving the micromodel directly.
inline double solo_supervised_round(ClientState& state, const ExperimentConfig& config) {
    const auto& train = state.dataset.train;
    const int round_index = state.rounds_done;
    state.rounds_done += 1;

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const int batch_size = config.batch_size;
    const int batches_per_epoch =
        static_cast<int>((order.size() + batch_size - 1) / static_cast<std::size_t>(batch_size));
    const int steps = config.local_steps > 0 ? config.local_steps : batches_per_epoch;

    rng::Stream batch_rng(rng::derive(state.seed, {rng::kTagBatch, static_cast<std::uint64_t>(round_index)}));
    ParamVector grad(param_count(state.model_spec));
    double epoch_loss_sum = 0.0;
    int epoch_samples = 0;
    std::size_t cursor = order.size();
    for (int step = 0; step < steps; ++step) {
        if (cursor >= order.size()) {
            batch_rng.shuffle(order);
            cursor = 0;
            epoch_loss_sum = 0.0;
            epoch_samples = 0;
        }
        const std::size_t batch_end = std::min(cursor + static_cast<std::size_t>(batch_size), order.size());
        const double batch_count = static_cast<double>(batch_end - cursor);
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t b = cursor; b < batch_end; ++b) {
            const Sample& sample = train[order[b]];
            const Grid2D& target = *sample.supervision.canonical;
            const auto cache = forward_cached(state.model_spec, state.params_f1, sample.image);
            epoch_loss_sum += soft_dice_loss(cache.output, target);
            epoch_samples += 1;
            auto gout = soft_dice_loss_gradient(cache.output, target);
            for (auto& g : gout.values) g /= batch_count;
            backward_into(state.model_spec, state.params_f1, sample.image, cache, gout, grad);
        }
        adam_step(state.params_f1, grad, state.adam_f1);
        cursor = batch_end;
    }
    state.last_loss = epoch_loss_sum / static_cast<double>(epoch_samples);
    return *state.last_loss;
}

inline RoundReport run_local_learning_round(Experiment& exp, int round_index) {
    const auto start = std::chrono::steady_clock::now();
    const int n = static_cast<int>(exp.clients.size());

    detail::parallel_for(n, exp.config.workers, [&](int i) {
        if (exp.clients[i].dataset.level == SupervisionLevel::PixelLevel)
            solo_supervised_round(exp.clients[i], exp.config);
    });

    RoundReport report;
    report.round = round_index;
    report.clients.resize(n);
    detail::parallel_for(n, exp.config.workers, [&](int i) {
        auto& rec = report.clients[i];
        const auto& client = exp.clients[i];
        rec.client_id = client.client_id;
        const bool labeled = client.dataset.level == SupervisionLevel::PixelLevel;
        if (labeled) {
            rec.loss = client.last_loss;
            rec.selected = static_cast<int>(client.dataset.train.size());
        }
        // Unlabeled clients are scored with the reference labeled model.
        const auto& model =
            labeled ? client.params_f1 : exp.clients[exp.labeled_reference].params_f1;
        rec.test_dice = evaluate(exp.spec, model, client.dataset);
    });
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

// Runs the configured regime for config.rounds rounds. The per-round callback
// (when given) observes each report as soon as the round completes.
inline std::vector<RoundReport> run_experiment(Experiment& exp,
                                               const std::function<void(const RoundReport&)>& on_round = {}) {
    if (exp.config.regime == Regime::LocalLearning) {
        // Local learning keeps each labeled client's own model; seed F1 from
        // the shared global init so it matches the federated starting point.
        for (auto& client : exp.clients)
            if (client.dataset.level == SupervisionLevel::PixelLevel) client.params_f1 = exp.global_f1;
    }
    std::vector<RoundReport> reports;
    reports.reserve(static_cast<std::size_t>(exp.config.rounds));
    for (int round = 1; round <= exp.config.rounds; ++round) {
        RoundReport report = exp.config.regime == Regime::LocalLearning ? run_local_learning_round(exp, round)
                                                                        : run_round(exp, round);
        if (on_round) on_round(report);
        reports.push_back(std::move(report));
    }
    return reports;
}

}  // namespace fedmix
