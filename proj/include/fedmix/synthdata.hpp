#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedmix/errors.hpp"
#include "fedmix/grid.hpp"
#include "fedmix/rng.hpp"

namespace fedmix {

// Label strength a client holds. Each client has exactly one level.
enum class SupervisionLevel : std::uint8_t {
    PixelLevel = 0,   // L: full segmentation mask
    BoundingBox = 1,  // B: tight axis-aligned box
    ImageLevel = 2,   // I: lesion present / absent flag
    Unlabeled = 3,    // U: raw images only
};

inline char level_code(SupervisionLevel level) {
    switch (level) {
        case SupervisionLevel::PixelLevel: return 'L';
        case SupervisionLevel::BoundingBox: return 'B';
        case SupervisionLevel::ImageLevel: return 'I';
        case SupervisionLevel::Unlabeled: return 'U';
    }
    return '?';
}

inline SupervisionLevel level_from_code(char code) {
    switch (code) {
        case 'L': return SupervisionLevel::PixelLevel;
        case 'B': return SupervisionLevel::BoundingBox;
        case 'I': return SupervisionLevel::ImageLevel;
        case 'U': return SupervisionLevel::Unlabeled;
        default: throw ValidationError(std::string("unknown supervision level code '") + code + "'");
    }
}

// Inclusive box corners.
struct BoxCorners {
    int r0 = 0, c0 = 0, r1 = 0, c1 = 0;
    bool operator==(const BoxCorners&) const = default;
};

// Tagged label record plus its canonical pixel-grid form. The canonical grid
// is present whenever the sample is labeled at all; for a positive image-level
// class it is flagged constraint-only and must not be used as a target mask.
struct Supervision {
    SupervisionLevel level = SupervisionLevel::Unlabeled;
    std::optional<Grid2D> mask;     // PixelLevel payload
    std::optional<BoxCorners> box;  // BoundingBox payload; absent for empty truth
    std::optional<bool> positive;   // ImageLevel payload
    std::optional<Grid2D> canonical;
    bool constraint_only = false;

    bool operator==(const Supervision&) const = default;
};

// Canonical pixel-grid view of a supervision record. A positive image-level
// class canonicalizes to a constraint with no target grid.
struct CanonicalLabel {
    bool constraint_only = false;
    std::optional<Grid2D> grid;

    bool operator==(const CanonicalLabel&) const = default;
};

struct Sample {
    std::uint64_t id = 0;
    Grid2D image;       // intensities in [0,1]
    Grid2D truth_mask;  // evaluation only; never read on the training path
    Supervision supervision;

    bool operator==(const Sample&) const = default;
};

inline void require_binary(const Grid2D& g, const char* op) {
    for (double v : g.values)
        if (v != 0.0 && v != 1.0) throw ValidationError(std::string(op) + ": grid is not binary");
}

// Tight axis-aligned box around all foreground; nullopt for empty masks.
inline std::optional<BoxCorners> tight_box(const Grid2D& mask) {
    int r0 = mask.height, c0 = mask.width, r1 = -1, c1 = -1;
    for (int r = 0; r < mask.height; ++r)
        for (int c = 0; c < mask.width; ++c)
            if (mask.at(r, c) != 0.0) {
                r0 = std::min(r0, r);
                c0 = std::min(c0, c);
                r1 = std::max(r1, r);
                c1 = std::max(c1, c);
            }
    if (r1 < 0) return std::nullopt;
    return BoxCorners{r0, c0, r1, c1};
}

inline Grid2D box_grid(const BoxCorners& box, int height, int width) {
    Grid2D g(height, width);
    for (int r = box.r0; r <= box.r1; ++r)
        for (int c = box.c0; c <= box.c1; ++c) g.at(r, c) = 1.0;
    return g;
}

// Weakens a pixel mask into the given supervision level and attaches the
// canonical pixel-grid form. An empty-truth bounding box degrades to an
// all-background canonical grid: the annotator saw nothing to box.
inline Supervision degrade_supervision(const Grid2D& truth, SupervisionLevel level) {
    require_binary(truth, "degrade_supervision");
    Supervision sup;
    sup.level = level;
    switch (level) {
        case SupervisionLevel::PixelLevel:
            sup.mask = truth;
            sup.canonical = truth;
            break;
        case SupervisionLevel::BoundingBox: {
            sup.box = tight_box(truth);
            sup.canonical = sup.box ? box_grid(*sup.box, truth.height, truth.width)
                                    : Grid2D(truth.height, truth.width, 0.0);
            break;
        }
        case SupervisionLevel::ImageLevel: {
            const bool any_fg = grid_sum(truth) > 0.0;
            sup.positive = any_fg;
            if (any_fg) {
                sup.canonical = Grid2D(truth.height, truth.width, 1.0);
                sup.constraint_only = true;
            } else {
                sup.canonical = Grid2D(truth.height, truth.width, 0.0);
            }
            break;
        }
        case SupervisionLevel::Unlabeled:
            break;
    }
    return sup;
}

// Canonical pixel-grid form of a labeled record; idempotent.
inline CanonicalLabel canonicalize(const Supervision& sup) {
    if (sup.level == SupervisionLevel::Unlabeled)
        throw UsageError("canonicalize: unlabeled supervision has no canonical form");
    if (sup.constraint_only) return CanonicalLabel{true, std::nullopt};
    return CanonicalLabel{false, sup.canonical};
}

// Generation parameters for one client. Offsets, noise and lesion size ranges
// carry the inter-client distribution shift.
struct ClientDataSpec {
    int image_height = 32;
    int image_width = 32;
    double intensity_offset = 0.0;
    double noise_sigma = 0.05;
    double lesion_radius_min = 0.15;  // fraction of min(height, width)
    double lesion_radius_max = 0.35;
    double healthy_fraction = -1.0;  // <0: 0.15 for ImageLevel clients, else 0
    double background_level = 0.30;
    double foreground_level = 0.75;
    double texture_amplitude = 0.05;
    int distractor_count = 0;         // bright non-lesion artifacts per image
    double distractor_radius = 0.07;  // fraction of min(height, width)

    double resolved_healthy_fraction(SupervisionLevel level) const {
        if (healthy_fraction >= 0.0) return healthy_fraction;
        return level == SupervisionLevel::ImageLevel ? 0.15 : 0.0;
    }

    bool operator==(const ClientDataSpec&) const = default;
};

struct ClientDataset {
    int client_id = 0;
    SupervisionLevel level = SupervisionLevel::Unlabeled;
    ClientDataSpec spec;
    std::uint64_t seed = 0;
    std::vector<Sample> train;
    std::vector<Sample> test;

    bool operator==(const ClientDataset&) const = default;
};

namespace detail {

inline Sample generate_sample(const ClientDataSpec& spec, SupervisionLevel level, std::uint64_t id, bool healthy,
                              rng::Stream& rng) {
    const int h = spec.image_height, w = spec.image_width;
    Grid2D truth(h, w);
    if (!healthy) {
        const double min_dim = static_cast<double>(std::min(h, w));
        const double cy = rng.uniform(0.30, 0.70) * h;
        const double cx = rng.uniform(0.30, 0.70) * w;
        const double ry = rng.uniform(spec.lesion_radius_min, spec.lesion_radius_max) * min_dim;
        const double rx = rng.uniform(spec.lesion_radius_min, spec.lesion_radius_max) * min_dim;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double dy = (y - cy) / ry, dx = (x - cx) / rx;
                if (dy * dy + dx * dx <= 1.0) truth.at(y, x) = 1.0;
            }
    }
    // Bright artifacts that are not lesions; the truth mask ignores them.
    Grid2D bright(truth);
    const double min_dim = static_cast<double>(std::min(h, w));
    for (int d = 0; d < spec.distractor_count; ++d) {
        const double cy = rng.uniform(0.05, 0.95) * h;
        const double cx = rng.uniform(0.05, 0.95) * w;
        const double radius = rng.uniform(0.6, 1.0) * spec.distractor_radius * min_dim;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double dy = (y - cy) / radius, dx = (x - cx) / radius;
                if (dy * dy + dx * dx <= 1.0) bright.at(y, x) = 1.0;
            }
    }
    // Textured background: a random linear ramp plus white noise.
    const double ramp_y = rng.uniform(-1.0, 1.0);
    const double ramp_x = rng.uniform(-1.0, 1.0);
    Grid2D image(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double base = bright.at(y, x) != 0.0 ? spec.foreground_level : spec.background_level;
            const double ramp = spec.texture_amplitude *
                                (ramp_y * (static_cast<double>(y) / h - 0.5) +
                                 ramp_x * (static_cast<double>(x) / w - 0.5));
            const double v = base + spec.intensity_offset + ramp + spec.noise_sigma * rng.normal();
            image.at(y, x) = std::clamp(v, 0.0, 1.0);
        }
    Sample sample;
    sample.id = id;
    sample.image = std::move(image);
    sample.truth_mask = truth;
    sample.supervision = degrade_supervision(truth, level);
    return sample;
}

}  // namespace detail

// Deterministic synthetic client: n samples, seeded 80/20 train/test split by
// sample id. Equal (spec, level, n, seed) always give equal bytes.
inline ClientDataset generate_client(const ClientDataSpec& spec, SupervisionLevel level, int n, std::uint64_t seed,
                                     int client_id = 0) {
    if (n < 5) throw ConfigError("generate_client: need at least 5 samples, got " + std::to_string(n));
    if (spec.lesion_radius_min <= 0.0 || spec.lesion_radius_max < spec.lesion_radius_min)
        throw ConfigError("generate_client: invalid lesion radius range");

    // Content depends on the seed alone; client_id only prefixes sample ids.
    // Two clients constructed with equal seeds hold equal data.
    rng::Stream rng(rng::derive(seed, {rng::kTagData}));
    const double healthy_fraction = spec.resolved_healthy_fraction(level);

    std::vector<Sample> samples;
    samples.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const bool healthy = rng.uniform() < healthy_fraction;
        const std::uint64_t id = (static_cast<std::uint64_t>(client_id) << 32) | static_cast<std::uint64_t>(i);
        samples.push_back(detail::generate_sample(spec, level, id, healthy, rng));
    }

    // Seeded split; test gets floor(n/5), train the rest.
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng::Stream split_rng(rng::derive(seed, {rng::kTagSplit}));
    split_rng.shuffle(order);
    const std::size_t test_count = samples.size() / 5;

    ClientDataset dataset;
    dataset.client_id = client_id;
    dataset.level = level;
    dataset.spec = spec;
    dataset.seed = seed;
    for (std::size_t i = 0; i < order.size(); ++i) {
        auto& dest = i < samples.size() - test_count ? dataset.train : dataset.test;
        dest.push_back(std::move(samples[order[i]]));
    }
    auto by_id = [](const Sample& a, const Sample& b) { return a.id < b.id; };
    std::sort(dataset.train.begin(), dataset.train.end(), by_id);
    std::sort(dataset.test.begin(), dataset.test.end(), by_id);
    return dataset;
}

}  // namespace fedmix
