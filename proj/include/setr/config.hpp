#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "setr/data.hpp"
#include "setr/model.hpp"
#include "setr/training.hpp"

namespace setr {

enum class Precision { kF32, kF64 };

/// Everything a CLI run needs. Defaults follow the reference configuration;
/// see `setr keys` for the full key list.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;

    FieldSchema schema;
    std::vector<std::string> activities = default_activity_whitelist();
    std::size_t window_stride = 100;
    std::int64_t gap_tolerance = 0;
    SplitMode split_mode = SplitMode::kStratified;
    double train_fraction = 0.8;
    Precision precision = Precision::kF32;

    std::size_t synth_classes = 3;
    std::size_t synth_per_class = 200;
    std::size_t synth_window_len = 64;
    double synth_noise = 1.0;

    std::string raw_path;
    std::string dataset_path;
    std::string output_dir = "out";
    std::string checkpoint_path;
    std::string eval_split = "validation";

    double gradcheck_threshold = 1e-4;
    std::size_t gradcheck_coords = 500;
    double gradcheck_eps = 1e-5;
    std::size_t gradcheck_batch = 4;

    // Where each key was last set ("<file>:<line>" or "command line").
    std::map<std::string, std::string> origin;

    /// Throws ConfigError naming the key, where it was set, and the constraint.
    void validate() const;

    /// Resolved key/value pairs in key-table order.
    std::vector<std::pair<std::string, std::string>> entries() const;

    std::filesystem::path resolved_dataset_path() const;
    std::filesystem::path resolved_checkpoint_path() const;
};

/// Names of all recognized keys.
std::vector<std::string> config_keys();

/// Applies "key = value" lines ('#' starts a comment) on top of `config`.
void apply_config_text(RunConfig& config, std::string_view text, const std::string& source);

/// Applies one "key=value" command-line override.
void apply_override(RunConfig& config, std::string_view assignment);

/// defaults < file < overrides, then validate(). Without a file, falls back to
/// $SETR_CONFIG_DIR/setr.conf when that exists; relative file paths that do
/// not exist are also looked up in $SETR_CONFIG_DIR.
RunConfig load_config(const std::optional<std::filesystem::path>& file, std::span<const std::string> overrides);

inline constexpr const char* kConfigDirEnv = "SETR_CONFIG_DIR";

}  // namespace setr
