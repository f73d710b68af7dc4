#include <gtest/gtest.h>

#include <cmath>

#include "fedmix/grid.hpp"
#include "fedmix/micromodel.hpp"
#include "fedmix/rng.hpp"
#include "test_util.hpp"

using fedmix::AdamState;
using fedmix::Grid2D;
using fedmix::ModelSpec;
using fedmix::ParamVector;

namespace {

ModelSpec tiny_spec(int h = 6, int w = 6) {
    ModelSpec spec;
    spec.height = h;
    spec.width = w;
    spec.hidden_channels = 4;
    spec.kernel = 3;
    return spec;
}

}  // namespace

TEST(InitParams, CountMatchesHandAuditedFormula) {
    // C=2, K=3: conv1 2*9+2, conv2 2*2*9+2, projection 2+1 -> 61.
    ModelSpec spec;
    spec.hidden_channels = 2;
    spec.kernel = 3;
    EXPECT_EQ(fedmix::param_count(spec), 61u);
    EXPECT_EQ(fedmix::init_params(spec, 1).size(), 61u);
}

TEST(InitParams, DeterministicPerSeedAndDifferentAcrossSeeds) {
    const auto spec = tiny_spec();
    const auto a = fedmix::init_params(spec, 42);
    const auto b = fedmix::init_params(spec, 42);
    EXPECT_EQ(a, b);
    const auto c = fedmix::init_params(spec, 43);
    EXPECT_NE(a, c);
}

TEST(InitParams, BiasesZeroAndWeightsWithinFanInRange) {
    const auto spec = tiny_spec();
    const auto layout = fedmix::param_layout(spec);
    const auto p = fedmix::init_params(spec, 5);
    for (std::size_t i = layout.b1; i < layout.w2; ++i) EXPECT_EQ(p[i], 0.0);
    for (std::size_t i = layout.b2; i < layout.w3; ++i) EXPECT_EQ(p[i], 0.0);
    EXPECT_EQ(p[layout.b3], 0.0);
    const double r1 = 1.0 / std::sqrt(9.0);
    for (std::size_t i = layout.w1; i < layout.b1; ++i) EXPECT_LE(std::fabs(p[i]), r1);
}

TEST(Forward, OutputsInUnitIntervalAndShapePreserved) {
    const auto spec = tiny_spec();
    fedmix::rng::Stream rng(3);
    const auto params = fedmix::init_params(spec, 9);
    const auto image = testutil::random_probability_grid(spec.height, spec.width, rng);
    const auto out = fedmix::forward(spec, params, image);
    EXPECT_EQ(out.height, spec.height);
    EXPECT_EQ(out.width, spec.width);
    for (double v : out.values) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Forward, DeterministicAcrossCalls) {
    const auto spec = tiny_spec();
    fedmix::rng::Stream rng(4);
    const auto params = fedmix::init_params(spec, 10);
    const auto image = testutil::random_probability_grid(spec.height, spec.width, rng);
    EXPECT_EQ(fedmix::forward(spec, params, image), fedmix::forward(spec, params, image));
}

TEST(Forward, ZeroParametersGiveConstantHalf) {
    const auto spec = tiny_spec();
    fedmix::rng::Stream rng(5);
    const ParamVector zeros(fedmix::param_count(spec), 0.0);
    const auto image = testutil::random_probability_grid(spec.height, spec.width, rng);
    const auto out = fedmix::forward(spec, zeros, image);
    for (double v : out.values) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Forward, ShapeMismatchThrows) {
    const auto spec = tiny_spec();
    const auto params = fedmix::init_params(spec, 1);
    Grid2D wrong(spec.height + 1, spec.width);
    EXPECT_THROW(fedmix::forward(spec, params, wrong), fedmix::DimensionError);
}

TEST(Backward, GradientLayoutLengthMatchesParams) {
    const auto spec = tiny_spec();
    fedmix::rng::Stream rng(6);
    const auto params = fedmix::init_params(spec, 2);
    const auto image = testutil::random_probability_grid(spec.height, spec.width, rng);
    const Grid2D gout(spec.height, spec.width, 1.0);
    EXPECT_EQ(fedmix::backward(spec, params, image, gout).size(), params.size());
}

TEST(Backward, ZeroUpstreamGradientGivesZeroParameterGradient) {
    const auto spec = tiny_spec();
    fedmix::rng::Stream rng(7);
    const auto params = fedmix::init_params(spec, 3);
    const auto image = testutil::random_probability_grid(spec.height, spec.width, rng);
    const Grid2D gout(spec.height, spec.width, 0.0);
    const auto grad = fedmix::backward(spec, params, image, gout);
    for (double g : grad) EXPECT_EQ(g, 0.0);
}

TEST(Backward, ComposedDiceLossMatchesFiniteDifferences) {
    const auto spec = tiny_spec();
    fedmix::rng::Stream rng(8);
    int checked = 0;
    for (int trial = 0; trial < 3; ++trial) {
        const auto params = fedmix::init_params(spec, 100 + trial);
        const auto image = testutil::random_probability_grid(spec.height, spec.width, rng);
        const auto target = testutil::random_binary_grid(spec.height, spec.width, rng);

        const auto cache = fedmix::forward_cached(spec, params, image);
        const auto gout = fedmix::soft_dice_loss_gradient(cache.output, target);
        ParamVector analytic(params.size(), 0.0);
        fedmix::backward_into(spec, params, image, cache, gout, analytic);

        auto loss_at = [&](const std::vector<double>& theta) {
            return fedmix::soft_dice_loss(fedmix::forward(spec, theta, image), target);
        };
        for (int k = 0; k < 40; ++k) {
            const std::size_t coord = rng.index(params.size());
            if (std::fabs(analytic[coord]) < 1e-8) continue;
            const double numeric = testutil::central_difference(loss_at, params, coord, 1e-5);
            EXPECT_LT(testutil::relative_error(analytic[coord], numeric), 1e-3)
                << "trial " << trial << " coord " << coord;
            ++checked;
        }
    }
    EXPECT_GE(checked, 100);
}

TEST(AdamStep, ZeroGradientLeavesParamsUnchanged) {
    ParamVector params{1.0, -2.0, 3.0};
    const ParamVector grad{0.0, 0.0, 0.0};
    auto state = AdamState::for_param_count(3);
    adam_step(params, grad, state);
    EXPECT_EQ(params, (ParamVector{1.0, -2.0, 3.0}));
    EXPECT_EQ(state.step, 1);
}

TEST(AdamStep, FirstStepMatchesHandExecutedRecurrence) {
    // One step from fresh state: m_hat = g, v_hat = g^2, so the update is
    // -lr * g / (|g| + eps) per coordinate.
    ParamVector params{0.5, -1.0, 2.0};
    const ParamVector grad{0.2, -4.0, 0.003};
    auto state = AdamState::for_param_count(3, 1e-3);
    adam_step(params, grad, state);
    const double lr = 1e-3, eps = 1e-8;
    const ParamVector expected{
        0.5 - lr * 0.2 / (0.2 + eps),
        -1.0 - lr * (-4.0) / (4.0 + eps),
        2.0 - lr * 0.003 / (0.003 + eps),
    };
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(params[i], expected[i], 1e-15);
    // Direction is -sign(g), magnitude close to lr.
    EXPECT_LT(params[0], 0.5);
    EXPECT_GT(params[1], -1.0 - 2e-3);
    EXPECT_LT(params[2], 2.0);
}

TEST(AdamStep, IdenticalRunsGiveIdenticalTrajectories) {
    const auto run = [] {
        ParamVector params{0.1, 0.2, 0.3, 0.4};
        auto state = AdamState::for_param_count(4);
        fedmix::rng::Stream rng(77);
        for (int i = 0; i < 25; ++i) {
            ParamVector grad(4);
            for (auto& g : grad) g = rng.normal();
            adam_step(params, grad, state);
        }
        return params;
    };
    EXPECT_EQ(run(), run());
}

TEST(AdamStep, LengthMismatchThrows) {
    ParamVector params{1.0, 2.0};
    const ParamVector grad{1.0};
    auto state = AdamState::for_param_count(2);
    EXPECT_THROW(adam_step(params, grad, state), fedmix::DimensionError);
}

TEST(Training, SupervisedMiniBatchTrainingLearnsBrightSquares) {
    const auto spec = tiny_spec(12, 12);
    fedmix::rng::Stream rng(12);
    auto params = fedmix::init_params(spec, 21);
    auto state = AdamState::for_param_count(params.size());

    // Four images with bright square foregrounds at different positions.
    std::vector<Grid2D> images, targets;
    for (int s = 0; s < 4; ++s) {
        Grid2D target(spec.height, spec.width);
        const int r0 = 1 + 2 * s, c0 = 2 + s;
        for (int r = r0; r < r0 + 4; ++r)
            for (int c = c0; c < c0 + 4; ++c) target.at(r, c) = 1.0;
        Grid2D image(spec.height, spec.width);
        for (std::size_t i = 0; i < image.size(); ++i)
            image.values[i] = 0.3 + 0.4 * target.values[i] + 0.05 * rng.normal();
        images.push_back(std::move(image));
        targets.push_back(std::move(target));
    }

    for (int step = 0; step < 200; ++step) {
        ParamVector grad(params.size(), 0.0);
        for (int s = 0; s < 4; ++s) {
            const auto cache = fedmix::forward_cached(spec, params, images[s]);
            auto gout = fedmix::soft_dice_loss_gradient(cache.output, targets[s]);
            for (auto& g : gout.values) g /= 4.0;
            fedmix::backward_into(spec, params, images[s], cache, gout, grad);
        }
        adam_step(params, grad, state);
    }
    double mean_dice = 0.0;
    for (int s = 0; s < 4; ++s)
        mean_dice +=
            fedmix::dice_coefficient(fedmix::harden(fedmix::forward(spec, params, images[s])), targets[s]);
    EXPECT_GT(mean_dice / 4.0, 0.8);
}
