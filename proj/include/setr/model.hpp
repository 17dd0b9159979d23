#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "setr/tensor.hpp"

namespace setr {

/// Architecture hyperparameters. Defaults are the reference configuration
/// (3 accelerometer axes, 200-step windows, d = 128, 2 layers of 4 heads,
/// SE reduction 16, pooling width 64, 6 classes).
struct ModelConfig {
    std::size_t input_channels = 3;
    std::size_t window_len = 200;
    std::size_t model_dim = 128;
    std::size_t num_layers = 2;
    std::size_t num_heads = 4;
    std::size_t ffn_hidden = 0;  // 0 selects 4 * model_dim
    std::size_t se_reduction = 16;
    std::size_t pool_hidden = 64;
    std::size_t num_classes = 6;

    std::size_t head_dim() const { return model_dim / num_heads; }
    std::size_t ffn_width() const { return ffn_hidden == 0 ? 4 * model_dim : ffn_hidden; }
    std::size_t se_hidden() const { return model_dim / se_reduction; }

    /// Throws ConfigError naming the violated constraint.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct EncoderLayerParams {
    Tensor<T> w_q, b_q;
    // The key projection has no bias: it would add a per-query constant to
    // every score, which the row softmax cancels exactly.
    Tensor<T> w_k;
    Tensor<T> w_v, b_v;
    Tensor<T> w_o, b_o;
    Tensor<T> ffn_w1, ffn_b1;
    Tensor<T> ffn_w2, ffn_b2;
    Tensor<T> ln1_gamma, ln1_beta;
    Tensor<T> ln2_gamma, ln2_beta;
};

template <typename T>
struct NamedTensor {
    std::string name;
    Tensor<T> tensor;
};

/// Every learnable weight. Row-vector convention: activations are [.., in]
/// and weights are [in, out], except w_c which is stored [K, d].
template <typename T>
struct ModelParams {
    Tensor<T> w_proj, b_proj;
    std::vector<EncoderLayerParams<T>> layers;
    Tensor<T> w1_se, w2_se;
    Tensor<T> w_a, v;
    Tensor<T> w_c, b_c;

    /// Fan-based uniform weights, zero biases and betas, unit gammas.
    static ModelParams init(const ModelConfig& config, std::uint64_t seed);
    /// All-zero tensors of the right shapes (gammas included).
    static ModelParams zeros(const ModelConfig& config);

    /// Canonical order; names are the checkpoint keys ("layers.0.w_q", ...).
    /// Returned tensors alias the parameters.
    std::vector<NamedTensor<T>> named() const;

    ModelParams clone() const;
    void zero_grad();
};

/// Expected shape of every parameter, in named() order.
std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelConfig& config);

template <typename T>
struct AttentionOutput {
    Tensor<T> out;   // [B, T, d]
    Tensor<T> maps;  // [B, heads, T, T]
};

template <typename T>
struct GatedOutput {
    Tensor<T> out;   // [B, T, d]
    Tensor<T> gate;  // [B, d]
};

template <typename T>
struct PooledOutput {
    Tensor<T> context;  // [B, d]
    Tensor<T> alpha;    // [B, T]
};

/// Result of a full forward pass over a batch [B, T, C].
template <typename T>
struct ForwardResult {
    Tensor<T> logits;                       // [B, K]
    Tensor<T> class_probs;                  // [B, K]
    Tensor<T> pool_weights;                 // [B, T]
    Tensor<T> se_gate;                      // [B, d]
    std::vector<Tensor<T>> attention_maps;  // per layer, [B, heads, T, T]
};

// Stage functions. Each accepts a batch [B, T, .] or a single window [T, .]
// and returns outputs of matching rank.

template <typename T>
Tensor<T> input_projection(Tape<T>& tape, const Tensor<T>& x, const ModelParams<T>& params);

template <typename T>
AttentionOutput<T> multi_head_self_attention(Tape<T>& tape, const Tensor<T>& h, const EncoderLayerParams<T>& layer,
                                             std::size_t num_heads);

/// Post-norm layer: LN(h + attn(h)), then LN(. + FFN(.)).
template <typename T>
AttentionOutput<T> encoder_layer(Tape<T>& tape, const Tensor<T>& h, const EncoderLayerParams<T>& layer,
                                 std::size_t num_heads);

template <typename T>
GatedOutput<T> se_module(Tape<T>& tape, const Tensor<T>& h, const ModelParams<T>& params);

template <typename T>
PooledOutput<T> temporal_attention_pool(Tape<T>& tape, const Tensor<T>& h, const ModelParams<T>& params);

/// Logits W_c c + b_c; apply softmax for probabilities.
template <typename T>
Tensor<T> classify(Tape<T>& tape, const Tensor<T>& context, const ModelParams<T>& params);

template <typename T>
ForwardResult<T> forward(Tape<T>& tape, const Tensor<T>& x, const ModelParams<T>& params,
                         const ModelConfig& config);

/// Mean cross-entropy of forward(x) against labels.
template <typename T>
Tensor<T> model_loss(Tape<T>& tape, const Tensor<T>& x, std::span<const int> labels,
                     const ModelParams<T>& params, const ModelConfig& config);

}  // namespace setr
