#pragma once

#include <filesystem>

#include "setr/model.hpp"

namespace setr {

/// Parameter checkpoint container, version 1. All integers and values are
/// little-endian.
///
///   "SETRCKPT"                      8-byte magic
///   u32   version                   = 1
///   u8    value width               4 (float32) or 8 (float64)
///   u64 x 9  model config           input_channels, window_len, model_dim,
///                                   num_layers, num_heads, ffn_hidden (resolved),
///                                   se_reduction, pool_hidden, num_classes
///   u32   tensor count
///   per tensor, in ModelParams::named() order:
///     u32 name length, name bytes
///     u32 rank, rank x u64 dims
///     numel values of the stated width
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct Checkpoint {
    ModelConfig config;
    ModelParams<T> params;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ModelParams<T>& params);

/// Loads and validates names and shapes against the stored config. Values
/// stored at a different width are converted.
template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace setr
