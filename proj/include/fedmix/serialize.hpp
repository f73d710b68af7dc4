#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "fedmix/errors.hpp"
#include "fedmix/micromodel.hpp"
#include "fedmix/synthdata.hpp"

// All on-disk formats are little-endian. Checkpoints: "FMPV", version u32,
// length u64, then raw f64 values. Datasets: "FMDS", version u32, client_id
// u32, level u8, height u32, width u32, train count u64, test count u64, seed
// u64, then train and test samples as (id u64, image f64*H*W, truth f64*H*W).
// Supervision is not stored; it is re-derived from the truth mask on import.

static_assert(std::endian::native == std::endian::little, "on-disk formats assume a little-endian host");

namespace fedmix::io {

inline constexpr char kParamsMagic[4] = {'F', 'M', 'P', 'V'};
inline constexpr char kDatasetMagic[4] = {'F', 'M', 'D', 'S'};
inline constexpr std::uint32_t kFormatVersion = 1;

namespace detail {

template <typename T>
void put(std::string& out, const T& value) {
    const auto* bytes = reinterpret_cast<const char*>(&value);
    out.append(bytes, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& cursor) {
    if (cursor + sizeof(T) > in.size()) throw ValidationError("truncated file");
    T value;
    std::memcpy(&value, in.data() + cursor, sizeof(T));
    cursor += sizeof(T);
    return value;
}

inline void put_grid(std::string& out, const Grid2D& g) {
    out.append(reinterpret_cast<const char*>(g.values.data()), g.values.size() * sizeof(double));
}

inline Grid2D take_grid(const std::string& in, std::size_t& cursor, int h, int w) {
    const std::size_t count = static_cast<std::size_t>(h) * w;
    if (cursor + count * sizeof(double) > in.size()) throw ValidationError("truncated grid data");
    std::vector<double> values(count);
    std::memcpy(values.data(), in.data() + cursor, count * sizeof(double));
    cursor += count * sizeof(double);
    return Grid2D(h, w, std::move(values));
}

}  // namespace detail

// FNV-1a 64-bit; used for dataset provenance hashes in run manifests.
inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char b : bytes) {
        hash ^= b;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open file: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write file: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string encode_params(const ParamVector& params) {
    std::string out;
    out.append(kParamsMagic, 4);
    detail::put(out, kFormatVersion);
    detail::put(out, static_cast<std::uint64_t>(params.size()));
    out.append(reinterpret_cast<const char*>(params.data()), params.size() * sizeof(double));
    return out;
}

inline ParamVector decode_params(const std::string& bytes) {
    std::size_t cursor = 0;
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kParamsMagic, 4) != 0)
        throw ValidationError("not a parameter checkpoint (bad magic)");
    cursor = 4;
    const auto version = detail::take<std::uint32_t>(bytes, cursor);
    if (version != kFormatVersion)
        throw ValidationError("unsupported checkpoint version " + std::to_string(version));
    const auto length = detail::take<std::uint64_t>(bytes, cursor);
    if (bytes.size() - cursor != length * sizeof(double))
        throw ValidationError("checkpoint length field does not match payload");
    ParamVector params(length);
    std::memcpy(params.data(), bytes.data() + cursor, length * sizeof(double));
    return params;
}

inline void save_params(const std::string& path, const ParamVector& params) {
    write_file(path, encode_params(params));
}

inline ParamVector load_params(const std::string& path) { return decode_params(read_file(path)); }

inline std::string encode_dataset(const ClientDataset& dataset) {
    std::string out;
    out.append(kDatasetMagic, 4);
    detail::put(out, kFormatVersion);
    detail::put(out, static_cast<std::uint32_t>(dataset.client_id));
    detail::put(out, static_cast<std::uint8_t>(dataset.level));
    detail::put(out, static_cast<std::uint32_t>(dataset.spec.image_height));
    detail::put(out, static_cast<std::uint32_t>(dataset.spec.image_width));
    detail::put(out, static_cast<std::uint64_t>(dataset.train.size()));
    detail::put(out, static_cast<std::uint64_t>(dataset.test.size()));
    detail::put(out, dataset.seed);
    auto put_samples = [&out](const std::vector<Sample>& samples) {
        for (const auto& s : samples) {
            detail::put(out, s.id);
            detail::put_grid(out, s.image);
            detail::put_grid(out, s.truth_mask);
        }
    };
    put_samples(dataset.train);
    put_samples(dataset.test);
    return out;
}

// Reconstructs the dataset; supervision is re-derived from each truth mask,
// which is exact because generation derives it the same way. The generation
// spec is carried by the JSON sidecar, not this payload.
inline ClientDataset decode_dataset(const std::string& bytes, const ClientDataSpec& spec = {}) {
    std::size_t cursor = 0;
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kDatasetMagic, 4) != 0)
        throw ValidationError("not a dataset file (bad magic)");
    cursor = 4;
    const auto version = detail::take<std::uint32_t>(bytes, cursor);
    if (version != kFormatVersion)
        throw ValidationError("unsupported dataset version " + std::to_string(version));
    ClientDataset dataset;
    dataset.spec = spec;
    dataset.client_id = static_cast<int>(detail::take<std::uint32_t>(bytes, cursor));
    dataset.level = static_cast<SupervisionLevel>(detail::take<std::uint8_t>(bytes, cursor));
    const int h = static_cast<int>(detail::take<std::uint32_t>(bytes, cursor));
    const int w = static_cast<int>(detail::take<std::uint32_t>(bytes, cursor));
    dataset.spec.image_height = h;
    dataset.spec.image_width = w;
    const auto n_train = detail::take<std::uint64_t>(bytes, cursor);
    const auto n_test = detail::take<std::uint64_t>(bytes, cursor);
    dataset.seed = detail::take<std::uint64_t>(bytes, cursor);
    auto take_samples = [&](std::uint64_t count, std::vector<Sample>& dest) {
        for (std::uint64_t i = 0; i < count; ++i) {
            Sample s;
            s.id = detail::take<std::uint64_t>(bytes, cursor);
            s.image = detail::take_grid(bytes, cursor, h, w);
            s.truth_mask = detail::take_grid(bytes, cursor, h, w);
            s.supervision = degrade_supervision(s.truth_mask, dataset.level);
            dest.push_back(std::move(s));
        }
    };
    take_samples(n_train, dataset.train);
    take_samples(n_test, dataset.test);
    if (cursor != bytes.size()) throw ValidationError("trailing bytes after dataset payload");
    return dataset;
}

inline void save_dataset(const std::string& path, const ClientDataset& dataset) {
    write_file(path, encode_dataset(dataset));
}

inline ClientDataset load_dataset(const std::string& path, const ClientDataSpec& spec = {}) {
    return decode_dataset(read_file(path), spec);
}

}  // namespace fedmix::io
