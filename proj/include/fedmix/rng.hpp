#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace fedmix::rng {

// splitmix64 step; used both as a mixer and to derive substream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derives an independent substream seed from a base seed and a list of tags
// (client index, round, purpose). Same inputs always give the same seed.
inline std::uint64_t derive(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t s = base ^ 0xd6e8feb86659fd93ULL;
    std::uint64_t out = splitmix64(s);
    for (std::uint64_t t : tags) {
        s ^= t + 0x9e3779b97f4a7c15ULL + (out << 6) + (out >> 2);
        out = splitmix64(s);
    }
    return out;
}

// Purpose tags for derive(); keeping them distinct keeps substreams independent.
inline constexpr std::uint64_t kTagData = 0x01;
inline constexpr std::uint64_t kTagInitF1 = 0x02;
inline constexpr std::uint64_t kTagInitF2 = 0x03;
inline constexpr std::uint64_t kTagBatch = 0x04;
inline constexpr std::uint64_t kTagSplit = 0x05;

// mt19937_64 wrapper with hand-pinned scalar transforms. The std engine is
// fully specified by the standard, but the std distributions are not; going
// through these helpers keeps byte-exact reproducibility part of the contract.
class Stream {
public:
    explicit Stream(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform index in [0, n). Modulo bias is negligible for n << 2^64.
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

    // Box-Muller, one cached spare per pair.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    // Fisher-Yates; pinned here because std::shuffle's permutation is
    // implementation-defined.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = index(i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace fedmix::rng
