#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "setr/errors.hpp"

namespace setr {

inline constexpr std::size_t kAxes = 3;

/// Which comma-separated field holds which column. The line must end with
/// ';' and split into exactly field_count fields; unmapped fields are ignored.
struct FieldSchema {
    std::string name = "wisdm6";
    std::size_t field_count = 6;
    std::size_t user = 0;
    std::size_t activity = 1;
    std::size_t timestamp = 2;
    std::size_t x = 3;
    std::size_t y = 4;
    std::size_t z = 5;

    /// "user,activity,timestamp,x,y,z;" (public raw accelerometer layout).
    static FieldSchema wisdm6();
    /// 18-field layout, same leading columns.
    static FieldSchema wisdm18();
    static FieldSchema by_name(std::string_view name);

    void validate() const;
};

struct RawRecord {
    std::int64_t user_id = 0;
    std::string activity;
    std::int64_t timestamp = 0;
    double ax = 0.0;
    double ay = 0.0;
    double az = 0.0;

    friend bool operator==(const RawRecord&, const RawRecord&) = default;
};

struct ParseResult {
    std::vector<RawRecord> records;
    std::size_t lines = 0;
    std::size_t rejected = 0;
};

/// One line; nullopt if it fails any acceptance rule.
std::optional<RawRecord> parse_line(std::string_view line, const FieldSchema& schema);

/// Keeps well-formed lines and counts the rest. Throws DataError if no line
/// survives or the stream fails.
ParseResult parse_raw(std::istream& in, const FieldSchema& schema);
ParseResult parse_raw_file(const std::filesystem::path& path, const FieldSchema& schema);

/// Inverse of parse_line for accepted records (shortest round-trip floats).
std::string serialize_record(const RawRecord& record, const FieldSchema& schema);

/// Walking, Jogging, Upstairs, Downstairs, Sitting, Standing.
std::vector<std::string> default_activity_whitelist();

/// Drops records whose activity is not listed; returns how many were dropped.
/// An empty whitelist keeps everything.
std::size_t filter_activities(std::vector<RawRecord>& records, std::span<const std::string> whitelist);

/// Bijection between activity strings and ids 0..K-1 in lexicographic order.
class LabelMap {
public:
    LabelMap() = default;
    explicit LabelMap(std::vector<std::string> labels);

    std::size_t size() const { return labels_.size(); }
    int id(const std::string& label) const;
    const std::string& label(int id) const;
    const std::vector<std::string>& labels() const { return labels_; }

    friend bool operator==(const LabelMap&, const LabelMap&) = default;

private:
    std::vector<std::string> labels_;
    std::map<std::string, int> ids_;
};

LabelMap encode_labels(std::span<const RawRecord> records);

struct WindowedSample {
    std::vector<float> x;  // window_len x 3, row-major
    int label = 0;
    std::int64_t user_id = 0;
    std::size_t start_index = 0;

    friend bool operator==(const WindowedSample&, const WindowedSample&) = default;
};

struct WindowOptions {
    std::size_t window_len = 200;
    std::size_t stride = 100;
    // Maximum timestamp step inside a window; 0 disables the check.
    std::int64_t gap_tolerance = 0;
};

/// Per-user sliding windows over timestamp-sorted records (stable for equal
/// timestamps). A window is kept only if every step has the same label.
/// Output is ordered by (user_id, start_index).
std::vector<WindowedSample> make_windows(std::span<const RawRecord> records, const LabelMap& labels,
                                         const WindowOptions& options);

struct NormStats {
    std::array<double, kAxes> mu{};
    std::array<double, kAxes> sigma{1.0, 1.0, 1.0};

    friend bool operator==(const NormStats&, const NormStats&) = default;
};

/// Pooled per-axis mean and population standard deviation over every step of
/// every given window. Throws DataError for an empty set or a constant axis.
NormStats compute_norm_stats(std::span<const WindowedSample> train);
NormStats compute_norm_stats(std::span<const WindowedSample> samples, std::span<const std::size_t> indices);

void apply_normalization(WindowedSample& sample, const NormStats& stats);

enum class SplitMode { kStratified, kByUser };

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::uint64_t seed = 0;
};

/// Per class: seeded shuffle, first ceil(fraction * n_c) go to train. Both
/// index lists are returned in ascending order.
SplitIndices stratified_split(std::span<const WindowedSample> samples, double train_fraction, std::uint64_t seed);

/// Whole users go to one side: ceil(fraction * users) users train.
SplitIndices split_by_user(std::span<const WindowedSample> samples, double train_fraction, std::uint64_t seed);

struct ClassProfile {
    std::array<double, kAxes> amplitude{};
    std::array<double, kAxes> offset{};
    std::array<double, kAxes> noise{};
    double frequency = 0.05;  // cycles per step
};

struct SynthSpec {
    std::size_t num_classes = 3;
    std::size_t per_class = 200;
    std::size_t window_len = 64;
    std::uint64_t seed = 0;
    double noise_scale = 1.0;
    // Overrides the built-in profiles when non-empty (size must equal num_classes).
    std::vector<ClassProfile> profiles;
};

struct SynthDataset {
    std::vector<WindowedSample> samples;
    LabelMap labels;
};

/// Built-in profile of class k out of K: distinct offsets, amplitudes and
/// noise levels per axis.
ClassProfile default_class_profile(std::size_t k);

/// Noisy sinusoids around per-class offsets; noise is Gaussian clipped at
/// 4 sigma so every signal is bounded. Classes are named synth_00, synth_01...
SynthDataset synthesize_dataset(const SynthSpec& spec);

}  // namespace setr
