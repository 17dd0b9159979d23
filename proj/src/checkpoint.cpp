#include "setr/checkpoint.hpp"

#include <fstream>

#include "setr/binary_io.hpp"

namespace setr {

namespace {

constexpr std::string_view kMagic = "SETRCKPT";

template <typename Stored, typename T>
void read_values(std::istream& in, std::span<T> out) {
    if constexpr (std::is_same_v<Stored, T>) {
        io::read_array(in, out);
    } else {
        std::vector<Stored> buffer(out.size());
        io::read_array(in, std::span<Stored>(buffer));
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(buffer[i]);
    }
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ModelParams<T>& params) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out.write(kMagic.data(), kMagic.size());
    io::write_le<std::uint32_t>(out, kCheckpointVersion);
    io::write_le<std::uint8_t>(out, sizeof(T));
    for (std::size_t v : {config.input_channels, config.window_len, config.model_dim, config.num_layers,
                          config.num_heads, config.ffn_width(), config.se_reduction, config.pool_hidden,
                          config.num_classes}) {
        io::write_le<std::uint64_t>(out, v);
    }
    const auto named = params.named();
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(named.size()));
    for (const auto& [name, tensor] : named) {
        io::write_string(out, name);
        io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.shape().rank()));
        for (std::size_t d : tensor.shape().dims()) io::write_le<std::uint64_t>(out, d);
        io::write_array(out, tensor.data());
    }
    if (!out) throw DataError("failed writing checkpoint " + path.string());
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    const std::string where = "checkpoint " + path.string();
    io::expect_magic(in, kMagic, where);
    if (const auto version = io::read_le<std::uint32_t>(in); version != kCheckpointVersion) {
        throw DataError(where + ": unsupported version " + std::to_string(version));
    }
    const auto width = io::read_le<std::uint8_t>(in);
    if (width != 4 && width != 8) throw DataError(where + ": bad value width " + std::to_string(width));

    Checkpoint<T> ck;
    ModelConfig& c = ck.config;
    for (std::size_t* field : {&c.input_channels, &c.window_len, &c.model_dim, &c.num_layers, &c.num_heads,
                               &c.ffn_hidden, &c.se_reduction, &c.pool_hidden, &c.num_classes}) {
        *field = static_cast<std::size_t>(io::read_le<std::uint64_t>(in));
    }
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw DataError(where + ": " + e.what());
    }
    ck.params = ModelParams<T>::zeros(c);
    auto named = ck.params.named();
    if (io::read_le<std::uint32_t>(in) != named.size()) throw DataError(where + ": wrong tensor count");
    for (auto& [name, tensor] : named) {
        const std::string stored = io::read_string(in, 4096);
        if (stored != name) throw DataError(where + ": expected tensor " + name + ", found " + stored);
        const auto rank = io::read_le<std::uint32_t>(in);
        std::vector<std::size_t> dims(rank);
        for (auto& d : dims) d = static_cast<std::size_t>(io::read_le<std::uint64_t>(in));
        if (rank != tensor.shape().rank() || dims != tensor.shape().dims()) {
            throw DataError(where + ": tensor " + name + " has wrong shape");
        }
        if (width == 4) {
            read_values<float>(in, tensor.mutable_data());
        } else {
            read_values<double>(in, tensor.mutable_data());
        }
    }
    if (in.peek() != std::char_traits<char>::eof()) throw DataError(where + ": trailing bytes");
    return ck;
}

template void save_checkpoint(const std::filesystem::path&, const ModelConfig&, const ModelParams<float>&);
template void save_checkpoint(const std::filesystem::path&, const ModelConfig&, const ModelParams<double>&);
template Checkpoint<float> load_checkpoint(const std::filesystem::path&);
template Checkpoint<double> load_checkpoint(const std::filesystem::path&);

}  // namespace setr
