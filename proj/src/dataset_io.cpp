#include "setr/dataset_io.hpp"

#include <fstream>

#include "setr/binary_io.hpp"

namespace setr {

namespace {
constexpr std::string_view kMagic = "SETRDATA";
}

SplitIndices DatasetFile::split() const {
    return split_mode == SplitMode::kByUser ? split_by_user(samples, train_fraction, seed)
                                            : stratified_split(samples, train_fraction, seed);
}

void save_dataset(const std::filesystem::path& path, const DatasetFile& ds) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write dataset " + path.string());
    out.write(kMagic.data(), kMagic.size());
    io::write_le<std::uint32_t>(out, kDatasetVersion);
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.window_len));
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(kAxes));
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.labels.size()));
    for (const auto& label : ds.labels.labels()) io::write_string(out, label);
    for (double m : ds.stats.mu) io::write_le(out, m);
    for (double s : ds.stats.sigma) io::write_le(out, s);
    io::write_string(out, ds.schema);
    io::write_le<std::uint64_t>(out, ds.seed);
    io::write_le<double>(out, ds.train_fraction);
    io::write_le<std::uint8_t>(out, ds.split_mode == SplitMode::kByUser ? 1 : 0);
    io::write_le<std::uint64_t>(out, ds.samples.size());
    for (const auto& s : ds.samples) {
        if (s.x.size() != ds.window_len * kAxes) throw ContractError("dataset sample has wrong window size");
        io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.label));
        io::write_le<std::int64_t>(out, s.user_id);
        io::write_le<std::uint64_t>(out, s.start_index);
        io::write_array(out, std::span<const float>(s.x));
    }
    if (!out) throw DataError("failed writing dataset " + path.string());
}

DatasetFile load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset " + path.string());
    const std::string where = "dataset " + path.string();
    io::expect_magic(in, kMagic, where);
    if (const auto v = io::read_le<std::uint32_t>(in); v != kDatasetVersion) {
        throw DataError(where + ": unsupported version " + std::to_string(v));
    }
    DatasetFile ds;
    ds.window_len = io::read_le<std::uint32_t>(in);
    if (const auto c = io::read_le<std::uint32_t>(in); c != kAxes) {
        throw DataError(where + ": expected 3 channels, found " + std::to_string(c));
    }
    const auto k = io::read_le<std::uint32_t>(in);
    if (ds.window_len == 0 || k == 0 || k > 4096) throw DataError(where + ": corrupt header");
    std::vector<std::string> labels(k);
    for (auto& l : labels) l = io::read_string(in, 4096);
    ds.labels = LabelMap(labels);
    if (ds.labels.labels() != labels) throw DataError(where + ": labels not in lexicographic id order");
    for (double& m : ds.stats.mu) m = io::read_le<double>(in);
    for (double& s : ds.stats.sigma) s = io::read_le<double>(in);
    ds.schema = io::read_string(in, 4096);
    ds.seed = io::read_le<std::uint64_t>(in);
    ds.train_fraction = io::read_le<double>(in);
    const auto mode = io::read_le<std::uint8_t>(in);
    if (mode > 1) throw DataError(where + ": unknown split mode");
    ds.split_mode = mode == 1 ? SplitMode::kByUser : SplitMode::kStratified;
    const auto n = io::read_le<std::uint64_t>(in);
    ds.samples.resize(n);
    for (auto& s : ds.samples) {
        const auto label = io::read_le<std::uint32_t>(in);
        if (label >= k) throw DataError(where + ": sample label " + std::to_string(label) + " out of range");
        s.label = static_cast<int>(label);
        s.user_id = io::read_le<std::int64_t>(in);
        s.start_index = io::read_le<std::uint64_t>(in);
        s.x.resize(ds.window_len * kAxes);
        io::read_array(in, std::span<float>(s.x));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw DataError(where + ": trailing bytes");
    return ds;
}

DatasetFile prepare_dataset(std::vector<WindowedSample> windows, LabelMap labels, std::size_t window_len,
                            std::string schema, std::uint64_t seed, double train_fraction, SplitMode mode) {
    if (windows.empty()) throw DataError("no windows to prepare");
    DatasetFile ds;
    ds.window_len = window_len;
    ds.labels = std::move(labels);
    ds.schema = std::move(schema);
    ds.seed = seed;
    ds.train_fraction = train_fraction;
    ds.split_mode = mode;
    ds.samples = std::move(windows);
    const SplitIndices split = ds.split();
    ds.stats = compute_norm_stats(ds.samples, split.train);
    for (auto& s : ds.samples) apply_normalization(s, ds.stats);
    return ds;
}

}  // namespace setr
