#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "setr/checkpoint.hpp"
#include "setr/dataset_io.hpp"
#include "setr/errors.hpp"
#include "test_util.hpp"

namespace setr {
namespace {

template <typename T>
std::vector<double> flatten(const ModelParams<T>& p) {
    std::vector<double> out;
    for (const auto& n : p.named())
        for (T v : n.tensor.data()) out.push_back(static_cast<double>(v));
    return out;
}

std::string read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

TEST(Checkpoint, RoundTripBothWidths) {
    auto dir = test::scratch_dir("ckpt");
    auto c = test::tiny_config();
    c.ffn_hidden = 24;
    auto pd = ModelParams<double>::init(c, 3);
    save_checkpoint(dir / "d.bin", c, pd);
    auto back = load_checkpoint<double>(dir / "d.bin");
    EXPECT_EQ(flatten(back.params), flatten(pd));
    EXPECT_EQ(back.config.model_dim, c.model_dim);
    EXPECT_EQ(back.config.ffn_width(), 24u);

    auto as_float = load_checkpoint<float>(dir / "d.bin");
    auto pf = flatten(as_float.params), want = flatten(pd);
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_EQ(pf[i], static_cast<double>(static_cast<float>(want[i])));

    save_checkpoint(dir / "f.bin", c, as_float.params);
    EXPECT_EQ(flatten(load_checkpoint<float>(dir / "f.bin").params), pf);
}

TEST(Checkpoint, BytesAreDeterministic) {
    auto dir = test::scratch_dir("ckpt_bytes");
    auto c = test::tiny_config();
    save_checkpoint(dir / "a.bin", c, ModelParams<float>::init(c, 9));
    save_checkpoint(dir / "b.bin", c, ModelParams<float>::init(c, 9));
    EXPECT_EQ(read_bytes(dir / "a.bin"), read_bytes(dir / "b.bin"));
}

TEST(Checkpoint, CorruptFilesAreDataErrors) {
    auto dir = test::scratch_dir("ckpt_bad");
    auto c = test::tiny_config();
    save_checkpoint(dir / "ok.bin", c, ModelParams<float>::init(c, 1));
    const std::string bytes = read_bytes(dir / "ok.bin");
    std::ofstream(dir / "short.bin", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    std::ofstream(dir / "long.bin", std::ios::binary) << bytes << "x";
    std::string wrong = bytes;
    wrong[0] = 'X';
    std::ofstream(dir / "magic.bin", std::ios::binary) << wrong;
    EXPECT_THROW(load_checkpoint<float>(dir / "short.bin"), DataError);
    EXPECT_THROW(load_checkpoint<float>(dir / "long.bin"), DataError);
    EXPECT_THROW(load_checkpoint<float>(dir / "magic.bin"), DataError);
    EXPECT_THROW(load_checkpoint<float>(dir / "missing.bin"), DataError);
}

DatasetFile small_dataset() {
    SynthSpec spec;
    spec.per_class = 15;
    spec.window_len = 10;
    spec.seed = 5;
    auto data = synthesize_dataset(spec);
    return prepare_dataset(std::move(data.samples), data.labels, 10, "synthetic", 5, 0.8, SplitMode::kStratified);
}

TEST(Dataset, PrepareNormalizesWithTrainingStatistics) {
    auto ds = small_dataset();
    auto split = ds.split();
    EXPECT_EQ(split.train.size(), 36u);
    EXPECT_EQ(split.validation.size(), 9u);
    for (std::size_t a = 0; a < 3; ++a) {
        double sum = 0, sq = 0, n = 0;
        for (auto i : split.train)
            for (std::size_t t = 0; t < 10; ++t) {
                const double v = ds.samples[i].x[t * 3 + a];
                sum += v;
                sq += v * v;
                n += 1;
            }
        const double mean = sum / n;
        EXPECT_NEAR(mean, 0.0, 1e-5);
        EXPECT_NEAR(sq / n - mean * mean, 1.0, 1e-4);
    }
}

TEST(Dataset, RoundTrip) {
    auto dir = test::scratch_dir("dataset");
    auto ds = small_dataset();
    save_dataset(dir / "d.bin", ds);
    auto back = load_dataset(dir / "d.bin");
    EXPECT_EQ(back, ds);
    EXPECT_EQ(back.split().train, ds.split().train);
}

TEST(Dataset, TruncatedIsDataError) {
    auto dir = test::scratch_dir("dataset_bad");
    save_dataset(dir / "d.bin", small_dataset());
    const std::string bytes = read_bytes(dir / "d.bin");
    std::ofstream(dir / "cut.bin", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
    EXPECT_THROW(load_dataset(dir / "cut.bin"), DataError);
    EXPECT_THROW(load_dataset(dir / "nope.bin"), DataError);
}

}  // namespace
}  // namespace setr
