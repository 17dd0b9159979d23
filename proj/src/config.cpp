#include "setr/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace setr {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    return s.substr(first, s.find_last_not_of(" \t\r\n") - first + 1);
}

// Thrown by value parsers; the caller adds key and location.
struct BadValue {
    std::string expected;
};

template <typename V>
V parse_number(std::string_view text, const char* expected) {
    V value{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (text.empty() || ec != std::errc() || ptr != end) throw BadValue{expected};
    return value;
}

std::size_t parse_size(std::string_view s) { return parse_number<std::size_t>(s, "a non-negative integer"); }
double parse_real(std::string_view s) { return parse_number<double>(s, "a real number"); }

template <typename V>
std::string text(V v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

struct KeySpec {
    const char* name;
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define SIZE_KEY(key, field)                                                        \
    KeySpec {                                                                       \
        key, [](RunConfig& c, std::string_view v) { c.field = parse_size(v); },     \
            [](const RunConfig& c) { return text(c.field); }                        \
    }
#define REAL_KEY(key, field)                                                        \
    KeySpec {                                                                       \
        key, [](RunConfig& c, std::string_view v) { c.field = parse_real(v); },     \
            [](const RunConfig& c) { return text(c.field); }                        \
    }
#define STRING_KEY(key, field)                                                      \
    KeySpec {                                                                       \
        key, [](RunConfig& c, std::string_view v) { c.field = std::string(v); },    \
            [](const RunConfig& c) { return c.field; }                              \
    }

const std::vector<KeySpec>& key_table() {
    static const std::vector<KeySpec> table = {
        SIZE_KEY("input_channels", model.input_channels),
        SIZE_KEY("window_len", model.window_len),
        SIZE_KEY("model_dim", model.model_dim),
        SIZE_KEY("num_layers", model.num_layers),
        SIZE_KEY("num_heads", model.num_heads),
        KeySpec{"ffn_hidden",
                [](RunConfig& c, std::string_view v) { c.model.ffn_hidden = v == "auto" ? 0 : parse_size(v); },
                [](const RunConfig& c) { return text(c.model.ffn_width()); }},
        SIZE_KEY("se_reduction", model.se_reduction),
        SIZE_KEY("pool_hidden", model.pool_hidden),
        SIZE_KEY("num_classes", model.num_classes),
        REAL_KEY("learning_rate", train.learning_rate),
        SIZE_KEY("batch_size", train.batch_size),
        SIZE_KEY("epochs", train.epochs),
        REAL_KEY("beta1", train.beta1),
        REAL_KEY("beta2", train.beta2),
        REAL_KEY("adam_eps", train.adam_eps),
        KeySpec{"seed",
                [](RunConfig& c, std::string_view v) {
                    c.train.seed = parse_number<std::uint64_t>(v, "a non-negative integer");
                },
                [](const RunConfig& c) { return text(c.train.seed); }},
        SIZE_KEY("workers", train.workers),
        KeySpec{"precision",
                [](RunConfig& c, std::string_view v) {
                    if (v == "f32") {
                        c.precision = Precision::kF32;
                    } else if (v == "f64") {
                        c.precision = Precision::kF64;
                    } else {
                        throw BadValue{"f32 or f64"};
                    }
                },
                [](const RunConfig& c) { return std::string(c.precision == Precision::kF64 ? "f64" : "f32"); }},
        KeySpec{"schema",
                [](RunConfig& c, std::string_view v) {
                    if (v != "wisdm6" && v != "wisdm18") throw BadValue{"wisdm6 or wisdm18"};
                    c.schema = FieldSchema::by_name(v);
                },
                [](const RunConfig& c) { return c.schema.name; }},
        SIZE_KEY("field_count", schema.field_count),
        SIZE_KEY("field_user", schema.user),
        SIZE_KEY("field_activity", schema.activity),
        SIZE_KEY("field_timestamp", schema.timestamp),
        SIZE_KEY("field_x", schema.x),
        SIZE_KEY("field_y", schema.y),
        SIZE_KEY("field_z", schema.z),
        KeySpec{"activities",
                [](RunConfig& c, std::string_view v) {
                    c.activities.clear();
                    if (v == "*") return;
                    std::size_t pos = 0;
                    while (pos <= v.size()) {
                        const auto comma = v.find(',', pos);
                        const auto item = trim(v.substr(pos, comma == std::string_view::npos ? v.npos : comma - pos));
                        if (item.empty()) throw BadValue{"a comma-separated list of activity names, or *"};
                        c.activities.emplace_back(item);
                        if (comma == std::string_view::npos) break;
                        pos = comma + 1;
                    }
                },
                [](const RunConfig& c) {
                    if (c.activities.empty()) return std::string("*");
                    std::string out;
                    for (const auto& a : c.activities) out += (out.empty() ? "" : ",") + a;
                    return out;
                }},
        SIZE_KEY("window_stride", window_stride),
        KeySpec{"gap_tolerance",
                [](RunConfig& c, std::string_view v) {
                    c.gap_tolerance = parse_number<std::int64_t>(v, "an integer tick count");
                },
                [](const RunConfig& c) { return text(c.gap_tolerance); }},
        KeySpec{"split_mode",
                [](RunConfig& c, std::string_view v) {
                    if (v == "stratified") {
                        c.split_mode = SplitMode::kStratified;
                    } else if (v == "by_user") {
                        c.split_mode = SplitMode::kByUser;
                    } else {
                        throw BadValue{"stratified or by_user"};
                    }
                },
                [](const RunConfig& c) {
                    return std::string(c.split_mode == SplitMode::kByUser ? "by_user" : "stratified");
                }},
        REAL_KEY("train_fraction", train_fraction),
        SIZE_KEY("synth_classes", synth_classes),
        SIZE_KEY("synth_per_class", synth_per_class),
        SIZE_KEY("synth_window_len", synth_window_len),
        REAL_KEY("synth_noise", synth_noise),
        STRING_KEY("raw_path", raw_path),
        STRING_KEY("dataset_path", dataset_path),
        STRING_KEY("output_dir", output_dir),
        STRING_KEY("checkpoint_path", checkpoint_path),
        KeySpec{"eval_split",
                [](RunConfig& c, std::string_view v) {
                    if (v != "validation" && v != "train" && v != "all") throw BadValue{"validation, train or all"};
                    c.eval_split = std::string(v);
                },
                [](const RunConfig& c) { return c.eval_split; }},
        REAL_KEY("gradcheck_threshold", gradcheck_threshold),
        SIZE_KEY("gradcheck_coords", gradcheck_coords),
        REAL_KEY("gradcheck_eps", gradcheck_eps),
        SIZE_KEY("gradcheck_batch", gradcheck_batch),
    };
    return table;
}

#undef SIZE_KEY
#undef REAL_KEY
#undef STRING_KEY

void assign(RunConfig& config, std::string_view key, std::string_view value, const std::string& where) {
    for (const auto& spec : key_table()) {
        if (key != spec.name) continue;
        try {
            spec.set(config, value);
        } catch (const BadValue& bad) {
            throw ConfigError(where + ": key '" + std::string(key) + "': cannot parse '" + std::string(value) +
                              "', expected " + bad.expected);
        }
        config.origin[spec.name] = where;
        return;
    }
    throw ConfigError(where + ": unknown key '" + std::string(key) + "'");
}

std::filesystem::path locate_config(const std::filesystem::path& file) {
    if (std::filesystem::exists(file) || file.is_absolute()) return file;
    if (const char* dir = std::getenv(kConfigDirEnv)) {
        const std::filesystem::path candidate = std::filesystem::path(dir) / file;
        if (std::filesystem::exists(candidate)) return candidate;
    }
    return file;
}

}  // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& spec : key_table()) keys.emplace_back(spec.name);
    return keys;
}

void apply_config_text(RunConfig& config, std::string_view text, const std::string& source) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = source + ":" + std::to_string(line_no);
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'key = value'");
        const auto key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError(where + ": missing key before '='");
        assign(config, key, trim(line.substr(eq + 1)), where);
    }
}

void apply_override(RunConfig& config, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) {
        throw ConfigError("command line: override '" + std::string(assignment) + "' is not key=value");
    }
    assign(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)), "command line");
}

RunConfig load_config(const std::optional<std::filesystem::path>& file, std::span<const std::string> overrides) {
    RunConfig config;
    std::optional<std::filesystem::path> path;
    if (file) {
        path = locate_config(*file);
    } else if (const char* dir = std::getenv(kConfigDirEnv)) {
        const auto fallback = std::filesystem::path(dir) / "setr.conf";
        if (std::filesystem::exists(fallback)) path = fallback;
    }
    if (path) {
        std::ifstream in(*path);
        if (!in) throw ConfigError("cannot read config file " + path->string());
        std::stringstream buffer;
        buffer << in.rdbuf();
        apply_config_text(config, buffer.str(), path->string());
    }
    for (const auto& o : overrides) apply_override(config, o);
    config.validate();
    return config;
}

void RunConfig::validate() const {
    auto fail = [&](std::initializer_list<const char*> keys, const std::string& constraint) {
        std::string where;
        for (const char* k : keys) {
            auto it = origin.find(k);
            where += std::string(where.empty() ? "" : ", ") + k + " (" +
                     (it == origin.end() ? std::string("default") : it->second) + ")";
        }
        throw ConfigError("invalid configuration: " + where + ": " + constraint);
    };
    const ModelConfig& m = model;
    if (m.input_channels != kAxes) fail({"input_channels"}, "must be 3 (x, y, z acceleration)");
    if (m.window_len < 1) fail({"window_len"}, "must be >= 1");
    if (m.model_dim < 1) fail({"model_dim"}, "must be >= 1");
    if (m.num_layers < 1) fail({"num_layers"}, "must be >= 1");
    if (m.num_heads < 1) fail({"num_heads"}, "must be >= 1");
    if (m.model_dim % m.num_heads != 0) fail({"model_dim", "num_heads"}, "model_dim must be divisible by num_heads");
    if (m.se_reduction < 1) fail({"se_reduction"}, "must be >= 1");
    if (m.model_dim % m.se_reduction != 0) {
        fail({"model_dim", "se_reduction"}, "model_dim must be divisible by se_reduction");
    }
    if (m.pool_hidden < 1) fail({"pool_hidden"}, "must be >= 1");
    if (m.num_classes < 2) fail({"num_classes"}, "must be >= 2");
    if (!(train.learning_rate >= 0.0) || !std::isfinite(train.learning_rate)) {
        fail({"learning_rate"}, "must be finite and >= 0");
    }
    if (train.batch_size < 1) fail({"batch_size"}, "must be >= 1");
    if (train.epochs < 1) fail({"epochs"}, "must be >= 1");
    if (!(train.beta1 >= 0.0 && train.beta1 < 1.0)) fail({"beta1"}, "must lie in [0, 1)");
    if (!(train.beta2 >= 0.0 && train.beta2 < 1.0)) fail({"beta2"}, "must lie in [0, 1)");
    if (!(train.adam_eps > 0.0)) fail({"adam_eps"}, "must be > 0");
    if (train.workers < 1) fail({"workers"}, "must be >= 1");
    try {
        schema.validate();
    } catch (const ConfigError& e) {
        fail({"field_count", "field_user", "field_activity", "field_timestamp", "field_x", "field_y", "field_z"},
             e.what());
    }
    if (window_stride < 1) fail({"window_stride"}, "must be >= 1");
    if (gap_tolerance < 0) fail({"gap_tolerance"}, "must be >= 0 (0 disables)");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail({"train_fraction"}, "must lie in (0, 1)");
    if (synth_classes < 2) fail({"synth_classes"}, "must be >= 2");
    if (synth_per_class < 2) fail({"synth_per_class"}, "must be >= 2");
    if (synth_window_len < 1) fail({"synth_window_len"}, "must be >= 1");
    if (!(synth_noise >= 0.0)) fail({"synth_noise"}, "must be >= 0");
    if (!(gradcheck_threshold > 0.0)) fail({"gradcheck_threshold"}, "must be > 0");
    if (!(gradcheck_eps > 0.0)) fail({"gradcheck_eps"}, "must be > 0");
    if (gradcheck_batch < 1) fail({"gradcheck_batch"}, "must be >= 1");
    if (output_dir.empty()) fail({"output_dir"}, "must not be empty");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& spec : key_table()) out.emplace_back(spec.name, spec.get(*this));
    return out;
}

std::filesystem::path RunConfig::resolved_dataset_path() const {
    return dataset_path.empty() ? std::filesystem::path(output_dir) / "dataset.bin" : std::filesystem::path(dataset_path);
}

std::filesystem::path RunConfig::resolved_checkpoint_path() const {
    return checkpoint_path.empty() ? std::filesystem::path(output_dir) / "checkpoint_best.bin"
                                   : std::filesystem::path(checkpoint_path);
}

}  // namespace setr
