#pragma once

#include <cmath>
#include <cstddef>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fedmix/errors.hpp"
#include "fedmix/micromodel.hpp"

namespace fedmix {

// Server-side view of one round: per-client data counts, final-pass losses
// (absent for clients that selected nothing), and the parameter deltas for
// both models. Losses feed the adaptive weights; counts feed both schemes.
struct AggregationInputs {
    std::vector<int> counts;
    std::vector<std::optional<double>> losses;
    std::vector<ParamVector> deltas_f1;
    std::vector<ParamVector> deltas_f2;
    double lambda = 10.0;
    double beta = 1.5;
};

// Count-share weights: w_i = |D_i| / sum |D_j|.
inline std::vector<double> fedavg_weights(const std::vector<int>& counts) {
    if (counts.empty()) throw UsageError("fedavg_weights: no clients");
    double total = 0.0;
    for (int c : counts) {
        if (c <= 0) throw ValidationError("fedavg_weights: counts must be positive");
        total += static_cast<double>(c);
    }
    std::vector<double> weights(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) weights[i] = static_cast<double>(counts[i]) / total;
    return weights;
}

// Loss-adaptive weights: blends the count share c_i with the normalized loss
// power share d_i = L_i^beta / sum L_j^beta via
// w_i = (c_i + lambda*d_i) / sum_j (c_j + lambda*d_j).
// Clients with absent losses get d_i = 0 and are excluded from the d
// normalizer; if every loss is absent this falls back to fedavg_weights with
// a notice on stderr. If all present losses are zero the loss term vanishes
// and the count shares decide.
inline std::vector<double> adaptive_weights(const std::vector<int>& counts,
                                            const std::vector<std::optional<double>>& losses, double beta,
                                            double lambda) {
    if (counts.size() != losses.size())
        throw DimensionError("adaptive_weights: counts and losses length mismatch");
    if (beta <= 0.0) throw ValidationError("adaptive_weights: beta must be positive");
    if (lambda < 0.0) throw ValidationError("adaptive_weights: lambda must be non-negative");
    for (const auto& loss : losses)
        if (loss && (*loss < 0.0 || !std::isfinite(*loss)))
            throw ValidationError("adaptive_weights: losses must be finite and non-negative");

    const auto count_share = fedavg_weights(counts);

    bool any_present = false;
    double power_sum = 0.0;
    std::vector<double> powers(losses.size(), 0.0);
    for (std::size_t i = 0; i < losses.size(); ++i) {
        if (!losses[i]) continue;
        any_present = true;
        powers[i] = std::pow(*losses[i], beta);
        power_sum += powers[i];
    }
    if (!any_present) {
        std::cerr << "adaptive_weights: all client losses absent, falling back to count shares\n";
        return count_share;
    }

    std::vector<double> weights(counts.size());
    double denominator = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const double loss_share = power_sum > 0.0 ? powers[i] / power_sum : 0.0;
        weights[i] = count_share[i] + lambda * loss_share;
        denominator += weights[i];
    }
    for (auto& w : weights) w /= denominator;
    return weights;
}

// Federated parameter update: theta + sum_i w_i * delta_i, accumulated in
// client-index order so the reduction is reproducible.
inline ParamVector apply_update(const ParamVector& theta, const std::vector<ParamVector>& deltas,
                                const std::vector<double>& weights) {
    if (deltas.size() != weights.size()) throw DimensionError("apply_update: weight/delta count mismatch");
    if (deltas.empty()) throw UsageError("apply_update: no clients");
    double weight_sum = 0.0;
    for (double w : weights) weight_sum += w;
    if (std::fabs(weight_sum - 1.0) > 1e-9)
        throw ValidationError("apply_update: weights sum to " + std::to_string(weight_sum) + ", expected 1");

    ParamVector updated = theta;
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        if (deltas[i].size() != theta.size()) throw DimensionError("apply_update: delta length mismatch");
        const double w = weights[i];
        for (std::size_t j = 0; j < theta.size(); ++j) updated[j] += w * deltas[i][j];
    }
    return updated;
}

struct AggregatedUpdate {
    std::vector<double> weights;
    ParamVector theta_f1;
    ParamVector theta_f2;
};

// Applies one scheme to both model parameter sets with a single weight vector.
inline AggregatedUpdate aggregate_round(const ParamVector& theta_f1, const ParamVector& theta_f2,
                                        const AggregationInputs& inputs, bool adaptive) {
    AggregatedUpdate out;
    out.weights = adaptive ? adaptive_weights(inputs.counts, inputs.losses, inputs.beta, inputs.lambda)
                           : fedavg_weights(inputs.counts);
    out.theta_f1 = apply_update(theta_f1, inputs.deltas_f1, out.weights);
    out.theta_f2 = apply_update(theta_f2, inputs.deltas_f2, out.weights);
    return out;
}

}  // namespace fedmix
