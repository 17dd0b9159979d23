#include "setr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "setr/random.hpp"

namespace setr {

namespace {

constexpr std::string_view kWhitespace = " \t\r\n\f\v";

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(kWhitespace);
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(kWhitespace);
    return s.substr(first, last - first + 1);
}

template <typename V>
bool parse_number(std::string_view text, V& out) {
    if (text.empty()) return false;
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, out);
    if (ec != std::errc() || ptr != end) return false;
    if constexpr (std::is_floating_point_v<V>) return std::isfinite(out);
    return true;
}

template <typename V>
std::string to_text(V value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

}  // namespace

// ---------------------------------------------------------------- schema

FieldSchema FieldSchema::wisdm6() { return {}; }

FieldSchema FieldSchema::wisdm18() {
    FieldSchema s;
    s.name = "wisdm18";
    s.field_count = 18;
    return s;
}

FieldSchema FieldSchema::by_name(std::string_view name) {
    if (name == "wisdm6") return wisdm6();
    if (name == "wisdm18") return wisdm18();
    throw ConfigError("unknown field schema '" + std::string(name) + "' (expected wisdm6 or wisdm18)");
}

void FieldSchema::validate() const {
    const std::array<std::size_t, 6> idx{user, activity, timestamp, x, y, z};
    for (std::size_t i : idx) {
        if (i >= field_count) {
            throw ConfigError("field schema: index " + std::to_string(i) + " outside " + std::to_string(field_count) +
                              " fields");
        }
    }
    std::set<std::size_t> distinct(idx.begin(), idx.end());
    if (distinct.size() != idx.size()) throw ConfigError("field schema: field indices must be distinct");
}

// ---------------------------------------------------------------- parsing

std::optional<RawRecord> parse_line(std::string_view line, const FieldSchema& schema) {
    const auto last = line.find_last_not_of(kWhitespace);
    if (last == std::string_view::npos || line[last] != ';') return std::nullopt;
    line = line.substr(0, last);

    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (true) {
        const auto comma = line.find(',', pos);
        fields.push_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
        if (fields.size() > schema.field_count) return std::nullopt;
    }
    if (fields.size() != schema.field_count) return std::nullopt;

    RawRecord r;
    r.activity = std::string(trim(fields[schema.activity]));
    if (r.activity.empty()) return std::nullopt;
    if (!parse_number(fields[schema.user], r.user_id) || !parse_number(fields[schema.timestamp], r.timestamp) ||
        !parse_number(fields[schema.x], r.ax) || !parse_number(fields[schema.y], r.ay) ||
        !parse_number(fields[schema.z], r.az)) {
        return std::nullopt;
    }
    return r;
}

ParseResult parse_raw(std::istream& in, const FieldSchema& schema) {
    schema.validate();
    ParseResult result;
    std::string line;
    while (std::getline(in, line)) {
        ++result.lines;
        if (auto record = parse_line(line, schema)) {
            result.records.push_back(std::move(*record));
        } else {
            ++result.rejected;
        }
    }
    if (in.bad()) throw DataError("I/O error while reading raw sensor data");
    if (result.records.empty()) {
        throw DataError("no well-formed records among " + std::to_string(result.lines) + " lines");
    }
    return result;
}

ParseResult parse_raw_file(const std::filesystem::path& path, const FieldSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open raw data file " + path.string());
    try {
        return parse_raw(in, schema);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::string serialize_record(const RawRecord& r, const FieldSchema& schema) {
    std::vector<std::string> fields(schema.field_count);
    fields[schema.user] = to_text(r.user_id);
    fields[schema.activity] = r.activity;
    fields[schema.timestamp] = to_text(r.timestamp);
    fields[schema.x] = to_text(r.ax);
    fields[schema.y] = to_text(r.ay);
    fields[schema.z] = to_text(r.az);
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) line += ',';
        line += fields[i];
    }
    line += ';';
    return line;
}

std::vector<std::string> default_activity_whitelist() {
    return {"Walking", "Jogging", "Upstairs", "Downstairs", "Sitting", "Standing"};
}

std::size_t filter_activities(std::vector<RawRecord>& records, std::span<const std::string> whitelist) {
    if (whitelist.empty()) return 0;
    const std::set<std::string> keep(whitelist.begin(), whitelist.end());
    const auto removed = std::erase_if(records, [&](const RawRecord& r) { return !keep.contains(r.activity); });
    return static_cast<std::size_t>(removed);
}

// ---------------------------------------------------------------- labels

LabelMap::LabelMap(std::vector<std::string> labels) : labels_(std::move(labels)) {
    std::sort(labels_.begin(), labels_.end());
    if (std::adjacent_find(labels_.begin(), labels_.end()) != labels_.end()) {
        throw DataError("label map: duplicate label");
    }
    for (std::size_t i = 0; i < labels_.size(); ++i) ids_.emplace(labels_[i], static_cast<int>(i));
}

int LabelMap::id(const std::string& label) const {
    auto it = ids_.find(label);
    if (it == ids_.end()) throw DataError("unknown label '" + label + "'");
    return it->second;
}

const std::string& LabelMap::label(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= labels_.size()) {
        throw ContractError("label id " + std::to_string(id) + " out of range");
    }
    return labels_[static_cast<std::size_t>(id)];
}

LabelMap encode_labels(std::span<const RawRecord> records) {
    std::set<std::string> distinct;
    for (const auto& r : records) distinct.insert(r.activity);
    return LabelMap(std::vector<std::string>(distinct.begin(), distinct.end()));
}

// ---------------------------------------------------------------- windows

std::vector<WindowedSample> make_windows(std::span<const RawRecord> records, const LabelMap& labels,
                                         const WindowOptions& options) {
    if (options.window_len == 0 || options.stride == 0) throw ContractError("window length and stride must be >= 1");
    std::map<std::int64_t, std::vector<std::size_t>> by_user;
    for (std::size_t i = 0; i < records.size(); ++i) by_user[records[i].user_id].push_back(i);

    std::vector<WindowedSample> windows;
    const std::size_t T = options.window_len;
    for (auto& [user, idx] : by_user) {
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return records[a].timestamp < records[b].timestamp; });
        std::vector<int> ids(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) ids[i] = labels.id(records[idx[i]].activity);

        for (std::size_t start = 0; start + T <= idx.size(); start += options.stride) {
            bool keep = std::all_of(ids.begin() + static_cast<std::ptrdiff_t>(start),
                                    ids.begin() + static_cast<std::ptrdiff_t>(start + T),
                                    [&](int id) { return id == ids[start]; });
            if (keep && options.gap_tolerance > 0) {
                for (std::size_t t = start + 1; t < start + T && keep; ++t) {
                    keep = records[idx[t]].timestamp - records[idx[t - 1]].timestamp <= options.gap_tolerance;
                }
            }
            if (!keep) continue;
            WindowedSample w;
            w.label = ids[start];
            w.user_id = user;
            w.start_index = start;
            w.x.resize(T * kAxes);
            for (std::size_t t = 0; t < T; ++t) {
                const RawRecord& r = records[idx[start + t]];
                w.x[t * kAxes + 0] = static_cast<float>(r.ax);
                w.x[t * kAxes + 1] = static_cast<float>(r.ay);
                w.x[t * kAxes + 2] = static_cast<float>(r.az);
            }
            windows.push_back(std::move(w));
        }
    }
    return windows;
}

// ---------------------------------------------------------------- normalization

NormStats compute_norm_stats(std::span<const WindowedSample> samples, std::span<const std::size_t> indices) {
    if (indices.empty()) throw DataError("normalization statistics need at least one training window");
    std::array<double, kAxes> total{};
    std::size_t count = 0;
    for (std::size_t i : indices) {
        const auto& x = samples[i].x;
        for (std::size_t j = 0; j < x.size(); ++j) total[j % kAxes] += x[j];
        count += x.size() / kAxes;
    }
    if (count == 0) throw DataError("normalization statistics need non-empty windows");
    NormStats stats;
    for (std::size_t a = 0; a < kAxes; ++a) stats.mu[a] = total[a] / static_cast<double>(count);
    std::array<double, kAxes> sq{};
    for (std::size_t i : indices) {
        const auto& x = samples[i].x;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double c = x[j] - stats.mu[j % kAxes];
            sq[j % kAxes] += c * c;
        }
    }
    static constexpr const char* kAxisName[kAxes] = {"x", "y", "z"};
    for (std::size_t a = 0; a < kAxes; ++a) {
        stats.sigma[a] = std::sqrt(sq[a] / static_cast<double>(count));
        if (!std::isfinite(stats.sigma[a]) || stats.sigma[a] <= 1e-12 * std::max(1.0, std::abs(stats.mu[a]))) {
            throw DataError(std::string("degenerate data: axis ") + kAxisName[a] + " has zero variance");
        }
    }
    return stats;
}

NormStats compute_norm_stats(std::span<const WindowedSample> train) {
    std::vector<std::size_t> all(train.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return compute_norm_stats(train, all);
}

void apply_normalization(WindowedSample& sample, const NormStats& stats) {
    for (std::size_t j = 0; j < sample.x.size(); ++j) {
        const std::size_t a = j % kAxes;
        sample.x[j] = static_cast<float>((sample.x[j] - stats.mu[a]) / stats.sigma[a]);
    }
}

// ---------------------------------------------------------------- splitting

namespace {

std::size_t train_count(double fraction, std::size_t n) {
    // Tolerance keeps exact products (0.8 * 10) from rounding up.
    return std::min(n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));
}

void check_fraction(double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw ConfigError("train fraction must lie in (0, 1), got " + std::to_string(fraction));
    }
}

}  // namespace

SplitIndices stratified_split(std::span<const WindowedSample> samples, double train_fraction, std::uint64_t seed) {
    check_fraction(train_fraction);
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < samples.size(); ++i) by_class[samples[i].label].push_back(i);

    SplitIndices split;
    split.seed = seed;
    Rng rng(seed);
    for (auto& [label, idx] : by_class) {
        if (idx.size() < 2) {
            throw DataError("stratified split: class " + std::to_string(label) + " has " +
                            std::to_string(idx.size()) + " sample(s), need at least 2");
        }
        rng.shuffle(std::span(idx));
        const std::size_t n_train = train_count(train_fraction, idx.size());
        split.train.insert(split.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
        split.validation.insert(split.validation.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.validation.begin(), split.validation.end());
    return split;
}

SplitIndices split_by_user(std::span<const WindowedSample> samples, double train_fraction, std::uint64_t seed) {
    check_fraction(train_fraction);
    std::set<std::int64_t> user_set;
    for (const auto& s : samples) user_set.insert(s.user_id);
    if (user_set.size() < 2) throw DataError("split by user: need at least 2 users");
    std::vector<std::int64_t> users(user_set.begin(), user_set.end());
    Rng rng(seed);
    rng.shuffle(std::span(users));
    const std::set<std::int64_t> train_users(users.begin(),
                                             users.begin() + static_cast<std::ptrdiff_t>(
                                                                 std::min(users.size() - 1,
                                                                          train_count(train_fraction, users.size()))));
    SplitIndices split;
    split.seed = seed;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        (train_users.contains(samples[i].user_id) ? split.train : split.validation).push_back(i);
    }
    return split;
}

// ---------------------------------------------------------------- synthetic data

ClassProfile default_class_profile(std::size_t k) {
    const double kd = static_cast<double>(k);
    ClassProfile p;
    const std::array<double, kAxes> direction{1.0, -0.5, 0.25};
    for (std::size_t a = 0; a < kAxes; ++a) {
        p.offset[a] = 3.5 * kd * direction[a];
        p.amplitude[a] = 0.5 + 0.25 * static_cast<double>((k + a) % 3);
        p.noise[a] = 0.2 + 0.1 * static_cast<double>((k + a) % 2);
    }
    p.frequency = 0.04 + 0.015 * kd;
    return p;
}

SynthDataset synthesize_dataset(const SynthSpec& spec) {
    if (spec.num_classes < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
    if (spec.per_class == 0 || spec.window_len == 0) throw ConfigError("synthetic dataset needs samples and steps");
    if (!spec.profiles.empty() && spec.profiles.size() != spec.num_classes) {
        throw ConfigError("synthetic dataset: profile count does not match class count");
    }
    std::vector<std::string> names;
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "synth_%02zu", k);
        names.emplace_back(buf);
    }
    SynthDataset out;
    out.labels = LabelMap(names);

    Rng rng(spec.seed);
    const std::size_t T = spec.window_len;
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
        const ClassProfile profile = spec.profiles.empty() ? default_class_profile(k) : spec.profiles[k];
        for (std::size_t n = 0; n < spec.per_class; ++n) {
            WindowedSample s;
            s.label = static_cast<int>(k);
            s.user_id = static_cast<std::int64_t>(n % 10);
            s.start_index = n;
            s.x.resize(T * kAxes);
            std::array<double, kAxes> phase{};
            for (auto& ph : phase) ph = rng.uniform(0.0, 2.0 * std::numbers::pi);
            for (std::size_t t = 0; t < T; ++t) {
                for (std::size_t a = 0; a < kAxes; ++a) {
                    const double noise = std::clamp(rng.normal(), -4.0, 4.0);
                    const double angle = 2.0 * std::numbers::pi * profile.frequency * static_cast<double>(t) + phase[a];
                    const double value = profile.offset[a] + profile.amplitude[a] * std::sin(angle) +
                                         spec.noise_scale * profile.noise[a] * noise;
                    s.x[t * kAxes + a] = static_cast<float>(value);
                }
            }
            out.samples.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace setr
