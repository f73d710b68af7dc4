#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fedmix/errors.hpp"

namespace fedmix {

// Dense H x W scalar field, row-major. Carries images, probability maps and
// binary masks alike; binary grids use exactly 0.0 and 1.0.
struct Grid2D {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    Grid2D() = default;

    Grid2D(int h, int w, double fill = 0.0)
        : height(h), width(w), values(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {
        if (h <= 0 || w <= 0)
            throw DimensionError("Grid2D: dimensions must be positive, got " + std::to_string(h) + "x" +
                                 std::to_string(w));
    }

    Grid2D(int h, int w, std::vector<double> vals) : height(h), width(w), values(std::move(vals)) {
        if (h <= 0 || w <= 0)
            throw DimensionError("Grid2D: dimensions must be positive");
        if (values.size() != static_cast<std::size_t>(h) * static_cast<std::size_t>(w))
            throw DimensionError("Grid2D: value count " + std::to_string(values.size()) + " does not match " +
                                 std::to_string(h) + "x" + std::to_string(w));
    }

    std::size_t size() const { return values.size(); }

    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }

    bool same_shape(const Grid2D& other) const { return height == other.height && width == other.width; }

    bool operator==(const Grid2D& other) const = default;
};

inline void require_same_shape(const Grid2D& a, const Grid2D& b, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(a.height) + "x" +
                             std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                             std::to_string(b.width));
}

// Smoothing constant shared by the Dice metric and loss. Keeps the empty-mask
// case and the gradient well defined.
inline constexpr double kDiceSmooth = 1e-6;

// Threshold a probability grid into a binary mask at 0.5.
inline Grid2D harden(const Grid2D& probabilities) {
    Grid2D mask(probabilities.height, probabilities.width);
    for (std::size_t i = 0; i < probabilities.size(); ++i)
        mask.values[i] = probabilities.values[i] >= 0.5 ? 1.0 : 0.0;
    return mask;
}

inline double grid_sum(const Grid2D& g) {
    double s = 0.0;
    for (double v : g.values) s += v;
    return s;
}

// Dice overlap (2*sum(a*b) + s) / (sum(a) + sum(b) + s). Symmetric, in [0,1],
// and exactly 1 for two empty masks by the smoothing convention.
inline double dice_coefficient(const Grid2D& a, const Grid2D& b) {
    require_same_shape(a, b, "dice_coefficient");
    double intersection = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        intersection += a.values[i] * b.values[i];
        sum_a += a.values[i];
        sum_b += b.values[i];
    }
    return (2.0 * intersection + kDiceSmooth) / (sum_a + sum_b + kDiceSmooth);
}

inline double soft_dice_loss(const Grid2D& pred, const Grid2D& target) {
    return 1.0 - dice_coefficient(pred, target);
}

// d(soft_dice_loss)/d(pred), with the target held constant (stop-gradient).
inline Grid2D soft_dice_loss_gradient(const Grid2D& pred, const Grid2D& target) {
    require_same_shape(pred, target, "soft_dice_loss_gradient");
    double intersection = 0.0, sum_p = 0.0, sum_t = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        intersection += pred.values[i] * target.values[i];
        sum_p += pred.values[i];
        sum_t += target.values[i];
    }
    const double numer = 2.0 * intersection + kDiceSmooth;
    const double denom = sum_p + sum_t + kDiceSmooth;
    Grid2D grad(pred.height, pred.width);
    // loss = 1 - numer/denom; d/dp_i = (numer - 2*t_i*denom) / denom^2.
    const double inv_denom_sq = 1.0 / (denom * denom);
    for (std::size_t i = 0; i < pred.size(); ++i)
        grad.values[i] = (numer - 2.0 * target.values[i] * denom) * inv_denom_sq;
    return grad;
}

}  // namespace fedmix
