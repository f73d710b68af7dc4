#include <gtest/gtest.h>

#include "fedmix/serialize.hpp"
#include "fedmix/synthdata.hpp"
#include "test_util.hpp"

using fedmix::BoxCorners;
using fedmix::ClientDataSpec;
using fedmix::Grid2D;
using fedmix::Supervision;
using fedmix::SupervisionLevel;

TEST(DegradeSupervision, PixelLevelKeepsTruthExactly) {
    fedmix::rng::Stream rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const auto truth = testutil::random_binary_grid(6, 5, rng);
        const auto sup = fedmix::degrade_supervision(truth, SupervisionLevel::PixelLevel);
        ASSERT_TRUE(sup.canonical.has_value());
        EXPECT_EQ(*sup.canonical, truth);
        EXPECT_EQ(*sup.mask, truth);
        EXPECT_FALSE(sup.constraint_only);
    }
}

TEST(DegradeSupervision, HandEnumeratedBoundingBox) {
    // Foreground at (1,1) and (2,3) on 4x4: box rows 1-2, cols 1-3, six ones.
    Grid2D truth(4, 4);
    truth.at(1, 1) = 1.0;
    truth.at(2, 3) = 1.0;
    const auto sup = fedmix::degrade_supervision(truth, SupervisionLevel::BoundingBox);
    ASSERT_TRUE(sup.box.has_value());
    EXPECT_EQ(*sup.box, (BoxCorners{1, 1, 2, 3}));
    ASSERT_TRUE(sup.canonical.has_value());
    EXPECT_NEAR(fedmix::grid_sum(*sup.canonical), 6.0, 0.0);
    for (int r = 1; r <= 2; ++r)
        for (int c = 1; c <= 3; ++c) EXPECT_EQ(sup.canonical->at(r, c), 1.0);
}

TEST(DegradeSupervision, EmptyTruthImageLevelIsNegativeAllZero) {
    Grid2D truth(3, 3);
    const auto sup = fedmix::degrade_supervision(truth, SupervisionLevel::ImageLevel);
    ASSERT_TRUE(sup.positive.has_value());
    EXPECT_FALSE(*sup.positive);
    EXPECT_FALSE(sup.constraint_only);
    EXPECT_EQ(fedmix::grid_sum(*sup.canonical), 0.0);
}

TEST(DegradeSupervision, FullForegroundBoundingBoxIsAllOne) {
    Grid2D truth(3, 4, 1.0);
    const auto sup = fedmix::degrade_supervision(truth, SupervisionLevel::BoundingBox);
    EXPECT_EQ(*sup.box, (BoxCorners{0, 0, 2, 3}));
    EXPECT_EQ(fedmix::grid_sum(*sup.canonical), 12.0);
}

TEST(DegradeSupervision, EmptyTruthBoundingBoxHasNoBoxAndAllZeroCanonical) {
    Grid2D truth(4, 4);
    const auto sup = fedmix::degrade_supervision(truth, SupervisionLevel::BoundingBox);
    EXPECT_FALSE(sup.box.has_value());
    EXPECT_EQ(fedmix::grid_sum(*sup.canonical), 0.0);
}

TEST(DegradeSupervision, BoxIsMinimalSupersetOfTruth) {
    fedmix::rng::Stream rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const auto truth = testutil::random_binary_grid(7, 9, rng, 0.15);
        const auto sup = fedmix::degrade_supervision(truth, SupervisionLevel::BoundingBox);
        // Superset pixelwise.
        for (std::size_t i = 0; i < truth.size(); ++i)
            EXPECT_GE(sup.canonical->values[i], truth.values[i]);
        if (!sup.box) {
            EXPECT_EQ(fedmix::grid_sum(truth), 0.0);
            continue;
        }
        // Minimal: every side of the box touches a foreground pixel.
        auto row_has_fg = [&](int r) {
            for (int c = 0; c < truth.width; ++c)
                if (truth.at(r, c) != 0.0) return true;
            return false;
        };
        auto col_has_fg = [&](int c) {
            for (int r = 0; r < truth.height; ++r)
                if (truth.at(r, c) != 0.0) return true;
            return false;
        };
        EXPECT_TRUE(row_has_fg(sup.box->r0));
        EXPECT_TRUE(row_has_fg(sup.box->r1));
        EXPECT_TRUE(col_has_fg(sup.box->c0));
        EXPECT_TRUE(col_has_fg(sup.box->c1));
    }
}

TEST(DegradeSupervision, ImageLevelClassMatchesForegroundPresence) {
    fedmix::rng::Stream rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const auto truth = testutil::random_binary_grid(5, 5, rng, 0.05);
        const auto sup = fedmix::degrade_supervision(truth, SupervisionLevel::ImageLevel);
        EXPECT_EQ(*sup.positive, fedmix::grid_sum(truth) > 0.0);
    }
}

TEST(DegradeSupervision, NonBinaryTruthThrows) {
    Grid2D truth(2, 2, {0.0, 0.5, 1.0, 0.0});
    EXPECT_THROW(fedmix::degrade_supervision(truth, SupervisionLevel::PixelLevel), fedmix::ValidationError);
}

TEST(Canonicalize, BoxOnThreeByThree) {
    Grid2D truth(3, 3);
    truth.at(0, 0) = truth.at(1, 1) = 1.0;  // box (0,0)-(1,1)
    const auto sup = fedmix::degrade_supervision(truth, SupervisionLevel::BoundingBox);
    const auto canon = fedmix::canonicalize(sup);
    ASSERT_TRUE(canon.grid.has_value());
    EXPECT_EQ(canon.grid->values, (std::vector<double>{1, 1, 0, 1, 1, 0, 0, 0, 0}));
}

TEST(Canonicalize, PixelMaskIsItselfAndIdempotent) {
    Grid2D truth(2, 2, {1, 0, 0, 1});
    const auto sup = fedmix::degrade_supervision(truth, SupervisionLevel::PixelLevel);
    const auto canon = fedmix::canonicalize(sup);
    EXPECT_EQ(*canon.grid, truth);
    EXPECT_EQ(fedmix::canonicalize(sup), canon);
}

TEST(Canonicalize, PositiveImageLevelIsConstraintOnly) {
    Grid2D truth(2, 2, {0, 1, 0, 0});
    const auto sup = fedmix::degrade_supervision(truth, SupervisionLevel::ImageLevel);
    const auto canon = fedmix::canonicalize(sup);
    EXPECT_TRUE(canon.constraint_only);
    EXPECT_FALSE(canon.grid.has_value());
}

TEST(Canonicalize, UnlabeledThrows) {
    Supervision sup;
    sup.level = SupervisionLevel::Unlabeled;
    EXPECT_THROW(fedmix::canonicalize(sup), fedmix::UsageError);
}

TEST(GenerateClient, DeterministicPerSeed) {
    ClientDataSpec spec;
    const auto a = fedmix::generate_client(spec, SupervisionLevel::Unlabeled, 20, 99, 1);
    const auto b = fedmix::generate_client(spec, SupervisionLevel::Unlabeled, 20, 99, 1);
    EXPECT_EQ(a, b);
    EXPECT_EQ(fedmix::io::encode_dataset(a), fedmix::io::encode_dataset(b));
    const auto c = fedmix::generate_client(spec, SupervisionLevel::Unlabeled, 20, 100, 1);
    EXPECT_NE(a, c);
}

TEST(GenerateClient, HundredSamplesSplitEightyTwenty) {
    ClientDataSpec spec;
    const auto ds = fedmix::generate_client(spec, SupervisionLevel::PixelLevel, 100, 7, 0);
    EXPECT_EQ(ds.train.size(), 80u);
    EXPECT_EQ(ds.test.size(), 20u);
}

TEST(GenerateClient, TooFewSamplesThrows) {
    ClientDataSpec spec;
    EXPECT_THROW(fedmix::generate_client(spec, SupervisionLevel::PixelLevel, 4, 7), fedmix::ConfigError);
}

TEST(GenerateClient, PixelLevelSupervisionEqualsTruth) {
    ClientDataSpec spec;
    const auto ds = fedmix::generate_client(spec, SupervisionLevel::PixelLevel, 12, 3, 2);
    for (const auto& s : ds.train) EXPECT_EQ(*s.supervision.canonical, s.truth_mask);
    for (const auto& s : ds.test) EXPECT_EQ(*s.supervision.canonical, s.truth_mask);
}

TEST(GenerateClient, ImageLevelClientsContainHealthyImages) {
    ClientDataSpec spec;
    const auto ds = fedmix::generate_client(spec, SupervisionLevel::ImageLevel, 100, 5, 3);
    int healthy = 0;
    for (const auto& s : ds.train) healthy += fedmix::grid_sum(s.truth_mask) == 0.0 ? 1 : 0;
    for (const auto& s : ds.test) healthy += fedmix::grid_sum(s.truth_mask) == 0.0 ? 1 : 0;
    EXPECT_GT(healthy, 0);
    EXPECT_LT(healthy, 40);  // around 15% of 100
}

TEST(GenerateClient, ImagesAreInUnitRangeAndIdsUnique) {
    ClientDataSpec spec;
    spec.intensity_offset = 0.2;
    spec.noise_sigma = 0.15;
    const auto ds = fedmix::generate_client(spec, SupervisionLevel::BoundingBox, 30, 11, 4);
    std::vector<std::uint64_t> ids;
    auto check = [&](const fedmix::Sample& s) {
        ids.push_back(s.id);
        for (double v : s.image.values) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
        EXPECT_EQ(s.supervision.level, SupervisionLevel::BoundingBox);
    };
    for (const auto& s : ds.train) check(s);
    for (const auto& s : ds.test) check(s);
    std::sort(ids.begin(), ids.end());
    EXPECT_EQ(std::adjacent_find(ids.begin(), ids.end()), ids.end());
}

TEST(DatasetSerialization, RoundTripIsExact) {
    ClientDataSpec spec;
    spec.intensity_offset = -0.05;
    const auto ds = fedmix::generate_client(spec, SupervisionLevel::BoundingBox, 15, 21, 6);
    const auto bytes = fedmix::io::encode_dataset(ds);
    const auto back = fedmix::io::decode_dataset(bytes, spec);
    EXPECT_EQ(back, ds);
    EXPECT_EQ(fedmix::io::encode_dataset(back), bytes);
}

TEST(DatasetSerialization, CorruptMagicRejected) {
    ClientDataSpec spec;
    const auto ds = fedmix::generate_client(spec, SupervisionLevel::Unlabeled, 6, 1, 0);
    auto bytes = fedmix::io::encode_dataset(ds);
    bytes[0] = 'X';
    EXPECT_THROW(fedmix::io::decode_dataset(bytes), fedmix::ValidationError);
    auto truncated = fedmix::io::encode_dataset(ds).substr(0, 40);
    EXPECT_THROW(fedmix::io::decode_dataset(truncated), fedmix::ValidationError);
}

TEST(ParamSerialization, RoundTripIsExact) {
    fedmix::rng::Stream rng(8);
    fedmix::ParamVector params(129);
    for (auto& p : params) p = rng.normal();
    const auto bytes = fedmix::io::encode_params(params);
    EXPECT_EQ(fedmix::io::decode_params(bytes), params);
}

TEST(ParamSerialization, LengthFieldValidated) {
    fedmix::ParamVector params{1.0, 2.0};
    auto bytes = fedmix::io::encode_params(params);
    bytes.resize(bytes.size() - 8);
    EXPECT_THROW(fedmix::io::decode_params(bytes), fedmix::ValidationError);
}
