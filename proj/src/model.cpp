#include "setr/model.hpp"

#include <cmath>

#include "setr/random.hpp"

namespace setr {

void ModelConfig::validate() const {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError("model config: " + what);
    };
    require(input_channels >= 1, "input_channels must be >= 1");
    require(window_len >= 1, "window_len must be >= 1");
    require(model_dim >= 1, "model_dim must be >= 1");
    require(num_layers >= 1, "num_layers must be >= 1");
    require(num_heads >= 1, "num_heads must be >= 1");
    require(se_reduction >= 1, "se_reduction must be >= 1");
    require(pool_hidden >= 1, "pool_hidden must be >= 1");
    require(num_classes >= 2, "num_classes must be >= 2");
    require(model_dim % num_heads == 0, "model_dim (" + std::to_string(model_dim) +
                                            ") must be divisible by num_heads (" + std::to_string(num_heads) + ")");
    require(model_dim % se_reduction == 0, "model_dim (" + std::to_string(model_dim) +
                                               ") must be divisible by se_reduction (" +
                                               std::to_string(se_reduction) + ")");
}

std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelConfig& c) {
    const std::size_t d = c.model_dim;
    std::vector<std::pair<std::string, Shape>> shapes = {
        {"w_proj", Shape{c.input_channels, d}},
        {"b_proj", Shape{d}},
    };
    for (std::size_t l = 0; l < c.num_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        shapes.insert(shapes.end(), {
                                        {p + "w_q", Shape{d, d}},
                                        {p + "b_q", Shape{d}},
                                        {p + "w_k", Shape{d, d}},
                                        {p + "w_v", Shape{d, d}},
                                        {p + "b_v", Shape{d}},
                                        {p + "w_o", Shape{d, d}},
                                        {p + "b_o", Shape{d}},
                                        {p + "ffn_w1", Shape{d, c.ffn_width()}},
                                        {p + "ffn_b1", Shape{c.ffn_width()}},
                                        {p + "ffn_w2", Shape{c.ffn_width(), d}},
                                        {p + "ffn_b2", Shape{d}},
                                        {p + "ln1_gamma", Shape{d}},
                                        {p + "ln1_beta", Shape{d}},
                                        {p + "ln2_gamma", Shape{d}},
                                        {p + "ln2_beta", Shape{d}},
                                    });
    }
    shapes.insert(shapes.end(), {
                                    {"w1_se", Shape{d, c.se_hidden()}},
                                    {"w2_se", Shape{c.se_hidden(), d}},
                                    {"w_a", Shape{d, c.pool_hidden}},
                                    {"v", Shape{c.pool_hidden}},
                                    {"w_c", Shape{c.num_classes, d}},
                                    {"b_c", Shape{c.num_classes}},
                                });
    return shapes;
}

namespace {

// Visits every parameter in canonical order (the order of parameter_shapes).
template <typename Params, typename Fn>
void visit(Params& p, Fn&& fn) {
    fn("w_proj", p.w_proj);
    fn("b_proj", p.b_proj);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const std::string pre = "layers." + std::to_string(l) + ".";
        auto& L = p.layers[l];
        fn(pre + "w_q", L.w_q);
        fn(pre + "b_q", L.b_q);
        fn(pre + "w_k", L.w_k);
        fn(pre + "w_v", L.w_v);
        fn(pre + "b_v", L.b_v);
        fn(pre + "w_o", L.w_o);
        fn(pre + "b_o", L.b_o);
        fn(pre + "ffn_w1", L.ffn_w1);
        fn(pre + "ffn_b1", L.ffn_b1);
        fn(pre + "ffn_w2", L.ffn_w2);
        fn(pre + "ffn_b2", L.ffn_b2);
        fn(pre + "ln1_gamma", L.ln1_gamma);
        fn(pre + "ln1_beta", L.ln1_beta);
        fn(pre + "ln2_gamma", L.ln2_gamma);
        fn(pre + "ln2_beta", L.ln2_beta);
    }
    fn("w1_se", p.w1_se);
    fn("w2_se", p.w2_se);
    fn("w_a", p.w_a);
    fn("v", p.v);
    fn("w_c", p.w_c);
    fn("b_c", p.b_c);
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <typename Fn>
auto in_stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const DimensionError& e) {
        throw DimensionError("stage " + name + ": " + e.what());
    } catch (const ContractError& e) {
        throw ContractError("stage " + name + ": " + e.what());
    } catch (const NumericError& e) {
        throw NumericError("stage " + name + ": " + e.what());
    }
}

// Lifts a single window [T, .] to a batch of one.
template <typename T>
Tensor<T> as_batch(Tape<T>& tape, const Tensor<T>& x, const char* what) {
    const Shape& s = x.shape();
    if (s.rank() == 3) return x;
    if (s.rank() == 2) return reshape(tape, x, Shape{1, s[0], s[1]});
    throw DimensionError(std::string(what) + ": expected [T, .] or [B, T, .], got " + s.str());
}

template <typename T>
Tensor<T> like_input(Tape<T>& tape, const Tensor<T>& y, const Tensor<T>& input) {
    if (input.shape().rank() == 3) return y;
    std::vector<std::size_t> dims(y.shape().dims().begin() + 1, y.shape().dims().end());
    return reshape(tape, y, Shape(std::move(dims)));
}

template <typename T>
void require_last_dim(const Tensor<T>& x, std::size_t d, const char* what) {
    if (x.shape().back() != d) {
        throw DimensionError(std::string(what) + ": expected last dimension " + std::to_string(d) + ", got " +
                             x.shape().str());
    }
}

template <typename T>
AttentionOutput<T> attention_impl(Tape<T>& tape, const Tensor<T>& h, const EncoderLayerParams<T>& p,
                                  std::size_t heads, bool keep_maps) {
    const std::size_t batch = h.shape()[0];
    const std::size_t steps = h.shape()[1];
    const std::size_t d = h.shape()[2];
    if (heads == 0 || d % heads != 0) {
        throw ConfigError("attention: model_dim " + std::to_string(d) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
    const std::size_t dk = d / heads;

    auto split = [&](const Tensor<T>& x) {
        Tensor<T> r = reshape(tape, x, Shape{batch, steps, heads, dk});
        r = permute(tape, r, {0, 2, 1, 3});
        return reshape(tape, r, Shape{batch * heads, steps, dk});
    };
    Tensor<T> q = split(add(tape, matmul(tape, h, p.w_q), p.b_q));
    Tensor<T> k = split(matmul(tape, h, p.w_k));
    Tensor<T> v = split(add(tape, matmul(tape, h, p.w_v), p.b_v));

    Tensor<T> scores = scale(tape, bmm(tape, q, k, true), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk))));
    Tensor<T> weights = softmax(tape, scores, 2);
    Tensor<T> ctx = bmm(tape, weights, v);
    ctx = reshape(tape, ctx, Shape{batch, heads, steps, dk});
    ctx = permute(tape, ctx, {0, 2, 1, 3});
    ctx = reshape(tape, ctx, Shape{batch, steps, d});

    AttentionOutput<T> result;
    result.out = add(tape, matmul(tape, ctx, p.w_o), p.b_o);
    if (keep_maps) {
        result.maps = Tensor<T>::from(Shape{batch, heads, steps, steps},
                                      std::vector<T>(weights.data().begin(), weights.data().end()));
    }
    return result;
}

template <typename T>
AttentionOutput<T> encoder_impl(Tape<T>& tape, const Tensor<T>& h, const EncoderLayerParams<T>& p,
                                std::size_t heads, bool keep_maps) {
    AttentionOutput<T> attn = attention_impl(tape, h, p, heads, keep_maps);
    Tensor<T> h1 = layer_norm(tape, add(tape, h, attn.out), p.ln1_gamma, p.ln1_beta);
    Tensor<T> hidden = relu(tape, add(tape, matmul(tape, h1, p.ffn_w1), p.ffn_b1));
    Tensor<T> ffn = add(tape, matmul(tape, hidden, p.ffn_w2), p.ffn_b2);
    attn.out = layer_norm(tape, add(tape, h1, ffn), p.ln2_gamma, p.ln2_beta);
    return attn;
}

template <typename T>
GatedOutput<T> se_impl(Tape<T>& tape, const Tensor<T>& h, const ModelParams<T>& p) {
    const std::size_t batch = h.shape()[0];
    const std::size_t d = h.shape()[2];
    Tensor<T> squeezed = reduce_mean(tape, h, 1);
    Tensor<T> excited = relu(tape, matmul(tape, squeezed, p.w1_se));
    Tensor<T> gate = sigmoid(tape, matmul(tape, excited, p.w2_se));
    Tensor<T> out = mul(tape, h, reshape(tape, gate, Shape{batch, 1, d}));
    return {out, gate};
}

template <typename T>
PooledOutput<T> pool_impl(Tape<T>& tape, const Tensor<T>& h, const ModelParams<T>& p) {
    const std::size_t batch = h.shape()[0];
    const std::size_t steps = h.shape()[1];
    const std::size_t d = h.shape()[2];
    if (p.v.shape() != Shape{p.w_a.shape()[1]}) {
        throw DimensionError("pooling: v " + p.v.shape().str() + " does not match w_a " + p.w_a.shape().str());
    }
    Tensor<T> hidden = tanh(tape, matmul(tape, h, p.w_a));
    Tensor<T> v_col = reshape(tape, p.v, Shape{p.v.numel(), 1});
    Tensor<T> scores = reshape(tape, matmul(tape, hidden, v_col), Shape{batch, steps});
    Tensor<T> alpha = softmax(tape, scores, 1);
    Tensor<T> context = bmm(tape, reshape(tape, alpha, Shape{batch, 1, steps}), h);
    return {reshape(tape, context, Shape{batch, d}), alpha};
}

template <typename T>
Tensor<T> classify_impl(Tape<T>& tape, const Tensor<T>& context, const ModelParams<T>& p) {
    return add(tape, matmul(tape, context, transpose(tape, p.w_c)), p.b_c);
}

template <typename T>
ForwardResult<T> forward_impl(Tape<T>& tape, const Tensor<T>& x_in, const ModelParams<T>& p,
                              const ModelConfig& config, bool diagnostics) {
    config.validate();
    if (p.layers.size() != config.num_layers) {
        throw DimensionError("forward: parameters hold " + std::to_string(p.layers.size()) + " layers, config has " +
                             std::to_string(config.num_layers));
    }
    Tensor<T> x = as_batch(tape, x_in, "forward");
    if (x.shape()[1] != config.window_len || x.shape()[2] != config.input_channels) {
        throw DimensionError("forward: input " + x_in.shape().str() + " does not match window " +
                             std::to_string(config.window_len) + "x" + std::to_string(config.input_channels));
    }

    ForwardResult<T> result;
    Tensor<T> h = in_stage("input_projection", [&] { return input_projection(tape, x, p); });
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        AttentionOutput<T> layer = in_stage("encoder_layer[" + std::to_string(l) + "]", [&] {
            return encoder_impl(tape, h, p.layers[l], config.num_heads, diagnostics);
        });
        h = layer.out;
        if (diagnostics) result.attention_maps.push_back(layer.maps);
    }
    GatedOutput<T> gated = in_stage("se_module", [&] { return se_impl(tape, h, p); });
    PooledOutput<T> pooled = in_stage("temporal_attention_pool", [&] { return pool_impl(tape, gated.out, p); });
    result.logits = in_stage("classify", [&] { return classify_impl(tape, pooled.context, p); });
    result.se_gate = gated.gate;
    result.pool_weights = pooled.alpha;
    if (diagnostics) {
        Tape<T> detached(false);
        result.class_probs = softmax(detached, result.logits.detach(), 1);
    }
    return result;
}

}  // namespace

// ---------------------------------------------------------------- params

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig& config) {
    config.validate();
    ModelParams<T> p;
    p.layers.resize(config.num_layers);
    const auto shapes = parameter_shapes(config);
    std::size_t i = 0;
    visit(p, [&](const std::string& name, Tensor<T>& t) {
        if (shapes[i].first != name) throw ContractError("parameter order mismatch at " + name);
        t = Tensor<T>::zeros(shapes[i].second, true);
        ++i;
    });
    return p;
}

template <typename T>
ModelParams<T> ModelParams<T>::init(const ModelConfig& config, std::uint64_t seed) {
    ModelParams<T> p = zeros(config);
    Rng rng(seed);
    visit(p, [&](const std::string& name, Tensor<T>& t) {
        if (ends_with(name, "gamma")) {
            std::fill(t.mutable_data().begin(), t.mutable_data().end(), T(1));
            return;
        }
        const Shape& s = t.shape();
        const bool weight = s.rank() == 2 || name == "v";
        if (!weight) return;
        const double fan_sum = s.rank() == 2 ? static_cast<double>(s[0] + s[1]) : static_cast<double>(s[0] + 1);
        const double limit = std::sqrt(6.0 / fan_sum);
        for (T& value : t.mutable_data()) value = static_cast<T>(rng.uniform(-limit, limit));
    });
    return p;
}

template <typename T>
std::vector<NamedTensor<T>> ModelParams<T>::named() const {
    std::vector<NamedTensor<T>> out;
    visit(const_cast<ModelParams<T>&>(*this),
          [&](const std::string& name, Tensor<T>& t) { out.push_back({name, t}); });
    return out;
}

template <typename T>
ModelParams<T> ModelParams<T>::clone() const {
    ModelParams<T> copy = *this;
    visit(copy, [](const std::string&, Tensor<T>& t) { t = t.clone(); });
    return copy;
}

template <typename T>
void ModelParams<T>::zero_grad() {
    visit(*this, [](const std::string&, Tensor<T>& t) { t.zero_grad(); });
}

// ---------------------------------------------------------------- stages

template <typename T>
Tensor<T> input_projection(Tape<T>& tape, const Tensor<T>& x, const ModelParams<T>& p) {
    require_last_dim(x, p.w_proj.shape()[0], "input_projection");
    Tensor<T> xb = as_batch(tape, x, "input_projection");
    Tensor<T> h = add(tape, matmul(tape, xb, p.w_proj), p.b_proj);
    return like_input(tape, h, x);
}

template <typename T>
AttentionOutput<T> multi_head_self_attention(Tape<T>& tape, const Tensor<T>& h, const EncoderLayerParams<T>& layer,
                                             std::size_t num_heads) {
    require_last_dim(h, layer.w_q.shape()[0], "multi_head_self_attention");
    AttentionOutput<T> r = attention_impl(tape, as_batch(tape, h, "multi_head_self_attention"), layer, num_heads, true);
    r.out = like_input(tape, r.out, h);
    return r;
}

template <typename T>
AttentionOutput<T> encoder_layer(Tape<T>& tape, const Tensor<T>& h, const EncoderLayerParams<T>& layer,
                                 std::size_t num_heads) {
    require_last_dim(h, layer.w_q.shape()[0], "encoder_layer");
    AttentionOutput<T> r = encoder_impl(tape, as_batch(tape, h, "encoder_layer"), layer, num_heads, true);
    r.out = like_input(tape, r.out, h);
    return r;
}

template <typename T>
GatedOutput<T> se_module(Tape<T>& tape, const Tensor<T>& h, const ModelParams<T>& params) {
    require_last_dim(h, params.w1_se.shape()[0], "se_module");
    GatedOutput<T> r = se_impl(tape, as_batch(tape, h, "se_module"), params);
    r.out = like_input(tape, r.out, h);
    if (h.shape().rank() == 2) r.gate = reshape(tape, r.gate, Shape{r.gate.shape()[1]});
    return r;
}

template <typename T>
PooledOutput<T> temporal_attention_pool(Tape<T>& tape, const Tensor<T>& h, const ModelParams<T>& params) {
    require_last_dim(h, params.w_a.shape()[0], "temporal_attention_pool");
    PooledOutput<T> r = pool_impl(tape, as_batch(tape, h, "temporal_attention_pool"), params);
    if (h.shape().rank() == 2) {
        r.context = reshape(tape, r.context, Shape{r.context.shape()[1]});
        r.alpha = reshape(tape, r.alpha, Shape{r.alpha.shape()[1]});
    }
    return r;
}

template <typename T>
Tensor<T> classify(Tape<T>& tape, const Tensor<T>& context, const ModelParams<T>& params) {
    require_last_dim(context, params.w_c.shape()[1], "classify");
    if (context.shape().rank() == 1) {
        Tensor<T> logits = classify_impl(tape, reshape(tape, context, Shape{1, context.numel()}), params);
        return reshape(tape, logits, Shape{logits.numel()});
    }
    if (context.shape().rank() != 2) throw DimensionError("classify: expected [d] or [B, d], got " + context.shape().str());
    return classify_impl(tape, context, params);
}

template <typename T>
ForwardResult<T> forward(Tape<T>& tape, const Tensor<T>& x, const ModelParams<T>& params, const ModelConfig& config) {
    return forward_impl(tape, x, params, config, true);
}

template <typename T>
Tensor<T> model_loss(Tape<T>& tape, const Tensor<T>& x, std::span<const int> labels, const ModelParams<T>& params,
                     const ModelConfig& config) {
    ForwardResult<T> r = forward_impl(tape, x, params, config, false);
    return cross_entropy(tape, r.logits, labels);
}

#define SETR_INSTANTIATE_MODEL(T)                                                                                 \
    template struct ModelParams<T>;                                                                               \
    template Tensor<T> input_projection(Tape<T>&, const Tensor<T>&, const ModelParams<T>&);                       \
    template AttentionOutput<T> multi_head_self_attention(Tape<T>&, const Tensor<T>&, const EncoderLayerParams<T>&, \
                                                          std::size_t);                                           \
    template AttentionOutput<T> encoder_layer(Tape<T>&, const Tensor<T>&, const EncoderLayerParams<T>&,          \
                                              std::size_t);                                                       \
    template GatedOutput<T> se_module(Tape<T>&, const Tensor<T>&, const ModelParams<T>&);                         \
    template PooledOutput<T> temporal_attention_pool(Tape<T>&, const Tensor<T>&, const ModelParams<T>&);          \
    template Tensor<T> classify(Tape<T>&, const Tensor<T>&, const ModelParams<T>&);                               \
    template ForwardResult<T> forward(Tape<T>&, const Tensor<T>&, const ModelParams<T>&, const ModelConfig&);     \
    template Tensor<T> model_loss(Tape<T>&, const Tensor<T>&, std::span<const int>, const ModelParams<T>&,        \
                                  const ModelConfig&);

SETR_INSTANTIATE_MODEL(float)
SETR_INSTANTIATE_MODEL(double)

#undef SETR_INSTANTIATE_MODEL

}  // namespace setr
