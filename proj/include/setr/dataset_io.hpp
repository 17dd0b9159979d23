#pragma once

#include <filesystem>

#include "setr/data.hpp"

namespace setr {

/// Processed dataset: normalized windows plus everything needed to re-derive
/// the train/validation split.
struct DatasetFile {
    std::size_t window_len = 0;
    LabelMap labels;
    NormStats stats;
    std::string schema;
    std::uint64_t seed = 0;
    double train_fraction = 0.8;
    SplitMode split_mode = SplitMode::kStratified;
    std::vector<WindowedSample> samples;

    /// Re-derives the split from (samples, seed, fraction, mode).
    SplitIndices split() const;

    friend bool operator==(const DatasetFile&, const DatasetFile&) = default;
};

/// Dataset container, version 1, little-endian:
///
///   "SETRDATA"                      8-byte magic
///   u32 version = 1
///   u32 window_len, u32 channels (3), u32 K
///   K x (u32 length, bytes)         labels, id order
///   f64 x 3 mu, f64 x 3 sigma
///   u32 length, bytes               schema name
///   u64 seed, f64 train_fraction, u8 split mode (0 stratified, 1 by user)
///   u64 sample count
///   per sample: u32 label, i64 user_id, u64 start_index,
///               window_len x 3 f32 (row-major)
inline constexpr std::uint32_t kDatasetVersion = 1;

void save_dataset(const std::filesystem::path& path, const DatasetFile& dataset);
DatasetFile load_dataset(const std::filesystem::path& path);

/// Split, fit normalization on the training part only, normalize every
/// sample with those statistics.
DatasetFile prepare_dataset(std::vector<WindowedSample> windows, LabelMap labels, std::size_t window_len,
                            std::string schema, std::uint64_t seed, double train_fraction, SplitMode mode);

}  // namespace setr
