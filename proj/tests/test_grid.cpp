#include <gtest/gtest.h>

#include <cmath>

#include "fedmix/grid.hpp"
#include "fedmix/rng.hpp"
#include "test_util.hpp"

using fedmix::Grid2D;
using fedmix::kDiceSmooth;

TEST(DiceCoefficient, IdenticalBinaryMasksGiveOne) {
    Grid2D a(3, 3, {0, 1, 0, 1, 1, 0, 0, 0, 1});
    EXPECT_NEAR(fedmix::dice_coefficient(a, a), 1.0, 1e-9);
}

TEST(DiceCoefficient, DisjointSupportsGiveNearZero) {
    Grid2D a(2, 2, {1, 1, 0, 0});
    Grid2D b(2, 2, {0, 0, 1, 1});
    EXPECT_LT(fedmix::dice_coefficient(a, b), 1e-6);
}

TEST(DiceCoefficient, HandComputedOverlap) {
    // 4 fg pixels each, 2 shared: 2*2/(4+4) = 0.5.
    Grid2D a(4, 4);
    a.at(0, 0) = a.at(0, 1) = a.at(1, 0) = a.at(1, 1) = 1.0;
    Grid2D b(4, 4);
    b.at(1, 0) = b.at(1, 1) = b.at(2, 0) = b.at(2, 1) = 1.0;
    EXPECT_NEAR(fedmix::dice_coefficient(a, b), 0.5, 1e-6);
}

TEST(DiceCoefficient, EmptyMasksGiveExactlyOne) {
    Grid2D a(5, 5);
    Grid2D b(5, 5);
    EXPECT_EQ(fedmix::dice_coefficient(a, b), 1.0);
}

TEST(DiceCoefficient, ShapeMismatchThrows) {
    Grid2D a(2, 3);
    Grid2D b(3, 2);
    EXPECT_THROW(fedmix::dice_coefficient(a, b), fedmix::DimensionError);
}

TEST(DiceCoefficient, SymmetricAndBoundedOnRandomInputs) {
    fedmix::rng::Stream rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const auto a = testutil::random_probability_grid(6, 7, rng);
        const auto b = testutil::random_probability_grid(6, 7, rng);
        const double dab = fedmix::dice_coefficient(a, b);
        const double dba = fedmix::dice_coefficient(b, a);
        EXPECT_DOUBLE_EQ(dab, dba);
        EXPECT_GE(dab, 0.0);
        EXPECT_LE(dab, 1.0);
    }
}

TEST(DiceCoefficient, MatchesSetArithmeticOracleOnBinaryMasks) {
    fedmix::rng::Stream rng(7);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto a = testutil::random_binary_grid(8, 8, rng, rng.uniform());
        const auto b = testutil::random_binary_grid(8, 8, rng, rng.uniform());
        EXPECT_NEAR(fedmix::dice_coefficient(a, b), testutil::dice_oracle(a, b), 1e-7);
    }
}

TEST(SoftDiceLoss, PerfectPredictionGivesNearZero) {
    Grid2D t(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    EXPECT_NEAR(fedmix::soft_dice_loss(t, t), 0.0, 1e-9);
}

TEST(SoftDiceLoss, AllZeroPredictionOnNonemptyTargetGivesNearOne) {
    Grid2D pred(3, 3);
    Grid2D t(3, 3, {1, 1, 0, 0, 1, 0, 0, 0, 1});
    EXPECT_NEAR(fedmix::soft_dice_loss(pred, t), 1.0, 1e-6);
}

TEST(SoftDiceLoss, HandComputedHalfConfidence) {
    // 2x2 grid, two fg target pixels, uniform 0.5 prediction:
    // 1 - 2*(0.5+0.5)/(2+2) = 0.5.
    Grid2D t(2, 2, {1, 1, 0, 0});
    Grid2D pred(2, 2, 0.5);
    EXPECT_NEAR(fedmix::soft_dice_loss(pred, t), 0.5, 1e-6);
}

TEST(SoftDiceLossGradient, MatchesFiniteDifferencesOnRandomInputs) {
    fedmix::rng::Stream rng(23);
    const int h = 8, w = 8;
    for (int trial = 0; trial < 5; ++trial) {
        const auto pred = testutil::random_probability_grid(h, w, rng);
        const auto target = testutil::random_probability_grid(h, w, rng);
        const auto grad = fedmix::soft_dice_loss_gradient(pred, target);
        auto loss_at = [&](const std::vector<double>& p) {
            return fedmix::soft_dice_loss(Grid2D(h, w, p), target);
        };
        for (int k = 0; k < 25; ++k) {
            const std::size_t coord = rng.index(pred.size());
            const double numeric = testutil::central_difference(loss_at, pred.values, coord, 1e-5);
            EXPECT_LT(testutil::relative_error(grad.values[coord], numeric), 1e-4)
                << "trial " << trial << " coord " << coord;
        }
    }
}

TEST(SoftDiceLossGradient, DegenerateAllZeroInputsStayFinite) {
    Grid2D pred(4, 4);
    Grid2D target(4, 4);
    const auto grad = fedmix::soft_dice_loss_gradient(pred, target);
    for (double g : grad.values) EXPECT_TRUE(std::isfinite(g));
}

TEST(SoftDiceLossGradient, SymmetricBinaryInputsHitTheSmoothedBound) {
    // pred == target binary with n fg pixels: |d/dp_i| = 1/(2n + s) exactly.
    Grid2D t(4, 4);
    t.at(0, 0) = t.at(1, 2) = t.at(3, 3) = 1.0;
    const double n = 3.0;
    const auto grad = fedmix::soft_dice_loss_gradient(t, t);
    const double bound = 1.0 / (2.0 * n + kDiceSmooth);
    for (std::size_t i = 0; i < t.size(); ++i) {
        EXPECT_NEAR(std::fabs(grad.values[i]), bound, 1e-12);
        // Foreground coordinates pull the loss down, background up.
        EXPECT_EQ(grad.values[i] < 0.0, t.values[i] == 1.0);
    }
}

TEST(SoftDiceLossGradient, FiniteDifferenceInvariantOverManyCoordinates) {
    fedmix::rng::Stream rng(17);
    int checked = 0;
    while (checked < 120) {
        const auto pred = testutil::random_probability_grid(5, 5, rng);
        const auto target = testutil::random_binary_grid(5, 5, rng);
        const auto grad = fedmix::soft_dice_loss_gradient(pred, target);
        auto loss_at = [&](const std::vector<double>& p) {
            return fedmix::soft_dice_loss(Grid2D(5, 5, p), target);
        };
        for (int k = 0; k < 8; ++k, ++checked) {
            const std::size_t coord = rng.index(pred.size());
            const double numeric = testutil::central_difference(loss_at, pred.values, coord, 1e-5);
            EXPECT_LT(testutil::relative_error(grad.values[coord], numeric), 1e-3);
        }
    }
}

TEST(Grid2D, InvariantViolationsThrow) {
    EXPECT_THROW(Grid2D(0, 4), fedmix::DimensionError);
    EXPECT_THROW(Grid2D(2, 2, std::vector<double>{1.0, 2.0, 3.0}), fedmix::DimensionError);
}

TEST(Harden, ThresholdsAtOneHalf) {
    Grid2D p(1, 4, {0.49, 0.5, 0.51, 0.0});
    const auto m = fedmix::harden(p);
    EXPECT_EQ(m.values, (std::vector<double>{0.0, 1.0, 1.0, 0.0}));
}
