#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "fedmix/errors.hpp"
#include "fedmix/grid.hpp"
#include "fedmix/micromodel.hpp"
#include "fedmix/rng.hpp"
#include "fedmix/synthdata.hpp"

namespace fedmix {

// One client's dual models, optimizer states, and per-round bookkeeping.
// Owned by exactly one worker during a round.
struct ClientState {
    int client_id = 0;
    ClientDataset dataset;
    ModelSpec model_spec;
    ParamVector params_f1;
    ParamVector params_f2;
    AdamState adam_f1;
    AdamState adam_f2;
    std::vector<int> last_selection;
    std::optional<double> last_loss;
    std::uint64_t seed = 0;  // drives batch shuffling, together with rounds_done
    int rounds_done = 0;
};

inline ClientState make_client_state(ClientDataset dataset, const ModelSpec& spec, double learning_rate = 1e-3) {
    spec.validate();
    ClientState state;
    state.client_id = dataset.client_id;
    state.seed = dataset.seed;
    state.dataset = std::move(dataset);
    state.model_spec = spec;
    const std::size_t n = param_count(spec);
    state.params_f1.assign(n, 0.0);
    state.params_f2.assign(n, 0.0);
    state.adam_f1 = AdamState::for_param_count(n, learning_rate);
    state.adam_f2 = AdamState::for_param_count(n, learning_rate);
    return state;
}

// Dual-model predictions for one sample.
inline std::pair<Grid2D, Grid2D> generate_pseudo_labels(const ClientState& state, const Sample& sample) {
    return {forward(state.model_spec, state.params_f1, sample.image),
            forward(state.model_spec, state.params_f2, sample.image)};
}

// Supervision-specific pseudo-label correction. Targets are hardened masks:
//  - pixel mask: both targets replaced by the ground-truth mask;
//  - bounding box: hardened predictions clipped to the box grid (empty-truth
//    boxes clip everything away, i.e. full background);
//  - image-level positive: hardened predictions pass through;
//  - image-level negative: all-background targets;
//  - unlabeled: hardened predictions pass through.
inline std::pair<Grid2D, Grid2D> refine(const Grid2D& y1, const Grid2D& y2, const Supervision& supervision) {
    require_same_shape(y1, y2, "refine");
    switch (supervision.level) {
        case SupervisionLevel::PixelLevel: {
            const Grid2D& truth = *supervision.canonical;
            require_same_shape(y1, truth, "refine");
            return {truth, truth};
        }
        case SupervisionLevel::BoundingBox: {
            const Grid2D& box = *supervision.canonical;
            require_same_shape(y1, box, "refine");
            Grid2D r1 = harden(y1), r2 = harden(y2);
            for (std::size_t i = 0; i < box.size(); ++i) {
                r1.values[i] *= box.values[i];
                r2.values[i] *= box.values[i];
            }
            return {std::move(r1), std::move(r2)};
        }
        case SupervisionLevel::ImageLevel: {
            if (*supervision.positive) return {harden(y1), harden(y2)};
            return {Grid2D(y1.height, y1.width, 0.0), Grid2D(y1.height, y1.width, 0.0)};
        }
        case SupervisionLevel::Unlabeled:
            return {harden(y1), harden(y2)};
    }
    throw UsageError("refine: unknown supervision level");
}

// Inter-model agreement; the sample-selection measure. Soft Dice on the raw
// probability maps: it only approaches 1 when both maps are sharp and
// overlapping. Hardening the inputs first makes every mushy-but-matching
// pair (for example two near-uniform maps on the same side of 0.5) score a
// perfect 1.0 and lets unreliable samples through the gate.
inline double prediction_consistency(const Grid2D& y1, const Grid2D& y2) {
    return dice_coefficient(y1, y2);
}

inline std::vector<double> sample_consistencies(const ClientState& state) {
    std::vector<double> out;
    out.reserve(state.dataset.train.size());
    for (const auto& sample : state.dataset.train) {
        const auto [y1, y2] = generate_pseudo_labels(state, sample);
        out.push_back(prediction_consistency(y1, y2));
    }
    return out;
}

// Per-sample selection mask: 1 iff consistency >= epsilon, measured before
// refinement. Pixel-level clients keep every sample.
inline std::vector<int> selection_from_consistencies(const std::vector<double>& consistencies,
                                                     SupervisionLevel level, double epsilon) {
    std::vector<int> mask(consistencies.size(), 1);
    if (level == SupervisionLevel::PixelLevel) return mask;
    for (std::size_t i = 0; i < consistencies.size(); ++i) mask[i] = consistencies[i] >= epsilon ? 1 : 0;
    return mask;
}

inline std::vector<int> select_samples(const ClientState& state, double epsilon) {
    if (epsilon < 0.0 || epsilon > 1.0)
        throw ValidationError("select_samples: epsilon must be in [0,1]");
    return selection_from_consistencies(sample_consistencies(state), state.dataset.level, epsilon);
}

struct LocalUpdateOptions {
    double epsilon = 0.9;
    int batch_size = 16;
    std::optional<int> steps;  // absent: one epoch over the selected samples
    bool selection_enabled = true;
};

struct LocalUpdateResult {
    ParamVector delta_f1;
    ParamVector delta_f2;
    std::optional<double> loss;  // mean cross-pseudo loss over the final pass
    int selected_count = 0;
    std::vector<int> selection;
    std::vector<double> consistencies;
};

// One round of local work: download the global parameters, select samples,
// then run Adam mini-batch steps on the cross-pseudo objective
// dice_loss(y1, refined(y2)) + dice_loss(y2, refined(y1)), with refined
// targets treated as constants. Returns parameter deltas against the
// downloaded globals. Zero selected samples is a defined outcome: zero
// deltas, absent loss.
inline LocalUpdateResult local_update(ClientState& state, const ParamVector& global_f1,
                                      const ParamVector& global_f2, const LocalUpdateOptions& options) {
    if (options.epsilon < 0.0 || options.epsilon > 1.0)
        throw ValidationError("local_update: epsilon must be in [0,1]");
    if (options.batch_size < 1) throw ValidationError("local_update: batch_size must be >= 1");
    if (options.steps && *options.steps < 1) throw ValidationError("local_update: steps must be >= 1");
    const std::size_t n_params = param_count(state.model_spec);
    if (global_f1.size() != n_params || global_f2.size() != n_params)
        throw DimensionError("local_update: global parameter length mismatch");

    state.params_f1 = global_f1;
    state.params_f2 = global_f2;

    LocalUpdateResult result;
    result.consistencies = sample_consistencies(state);
    result.selection = options.selection_enabled
                           ? selection_from_consistencies(result.consistencies, state.dataset.level, options.epsilon)
                           : std::vector<int>(state.dataset.train.size(), 1);
    std::vector<std::size_t> selected;
    for (std::size_t i = 0; i < result.selection.size(); ++i)
        if (result.selection[i]) selected.push_back(i);
    result.selected_count = static_cast<int>(selected.size());

    state.last_selection = result.selection;
    const int round_index = state.rounds_done;
    state.rounds_done += 1;

    if (selected.empty()) {
        result.delta_f1.assign(n_params, 0.0);
        result.delta_f2.assign(n_params, 0.0);
        state.last_loss.reset();
        return result;
    }

    const int batch_size = options.batch_size;
    const int batches_per_epoch =
        static_cast<int>((selected.size() + batch_size - 1) / static_cast<std::size_t>(batch_size));
    const int steps = options.steps ? *options.steps : batches_per_epoch;

    rng::Stream batch_rng(
        rng::derive(state.seed, {rng::kTagBatch, static_cast<std::uint64_t>(round_index)}));
    std::vector<std::size_t> order = selected;

    ParamVector grad_f1(n_params), grad_f2(n_params);
    double epoch_loss_sum = 0.0;
    int epoch_sample_count = 0;
    std::size_t cursor = order.size();  // forces a shuffle before the first batch

    for (int step = 0; step < steps; ++step) {
        if (cursor >= order.size()) {
            batch_rng.shuffle(order);
            cursor = 0;
            epoch_loss_sum = 0.0;
            epoch_sample_count = 0;
        }
        const std::size_t batch_end = std::min(cursor + static_cast<std::size_t>(batch_size), order.size());
        const double batch_count = static_cast<double>(batch_end - cursor);
        std::fill(grad_f1.begin(), grad_f1.end(), 0.0);
        std::fill(grad_f2.begin(), grad_f2.end(), 0.0);
        for (std::size_t b = cursor; b < batch_end; ++b) {
            const Sample& sample = state.dataset.train[order[b]];
            const auto cache1 = forward_cached(state.model_spec, state.params_f1, sample.image);
            const auto cache2 = forward_cached(state.model_spec, state.params_f2, sample.image);
            const auto [target_from_f1, target_from_f2] = refine(cache1.output, cache2.output, sample.supervision);

            epoch_loss_sum += soft_dice_loss(cache1.output, target_from_f2) +
                              soft_dice_loss(cache2.output, target_from_f1);
            epoch_sample_count += 1;

            auto gout1 = soft_dice_loss_gradient(cache1.output, target_from_f2);
            auto gout2 = soft_dice_loss_gradient(cache2.output, target_from_f1);
            for (auto& g : gout1.values) g /= batch_count;
            for (auto& g : gout2.values) g /= batch_count;
            backward_into(state.model_spec, state.params_f1, sample.image, cache1, gout1, grad_f1);
            backward_into(state.model_spec, state.params_f2, sample.image, cache2, gout2, grad_f2);
        }
        adam_step(state.params_f1, grad_f1, state.adam_f1);
        adam_step(state.params_f2, grad_f2, state.adam_f2);
        cursor = batch_end;
    }

    result.loss = epoch_loss_sum / static_cast<double>(epoch_sample_count);
    state.last_loss = result.loss;

    result.delta_f1.resize(n_params);
    result.delta_f2.resize(n_params);
    for (std::size_t i = 0; i < n_params; ++i) {
        result.delta_f1[i] = state.params_f1[i] - global_f1[i];
        result.delta_f2[i] = state.params_f2[i] - global_f2[i];
    }
    return result;
}

// Spec-shaped overload with an explicit step count.
inline LocalUpdateResult local_update(ClientState& state, const ParamVector& global_f1,
                                      const ParamVector& global_f2, double epsilon, int steps) {
    LocalUpdateOptions options;
    options.epsilon = epsilon;
    options.steps = steps;
    return local_update(state, global_f1, global_f2, options);
}

}  // namespace fedmix
