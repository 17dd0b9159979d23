#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "setr/errors.hpp"

namespace setr {

/// Dimension sizes of a dense row-major tensor. Every dimension is >= 1.
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<std::size_t> dims);
    explicit Shape(std::vector<std::size_t> dims);

    std::size_t rank() const { return dims_.size(); }
    std::size_t operator[](std::size_t axis) const { return dims_[axis]; }
    std::size_t back() const { return dims_.back(); }
    std::size_t numel() const;
    const std::vector<std::size_t>& dims() const { return dims_; }

    std::string str() const;

    friend bool operator==(const Shape&, const Shape&) = default;

private:
    std::vector<std::size_t> dims_;
};

/// Shared handle to a value in the computation graph. Copies alias the same
/// storage; use clone() for an independent copy.
///
/// A tensor carries its data, an optional gradient buffer of identical
/// shape, and a requires_grad flag. Leaves created with requires_grad are
/// the parameters that Tape::backward() populates.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);

    bool defined() const { return storage_ != nullptr; }
    const Shape& shape() const { return storage_->shape; }
    std::size_t numel() const { return storage_->data.size(); }

    std::span<const T> data() const { return storage_->data; }
    std::span<T> mutable_data() { return storage_->data; }
    T item() const;
    T at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const { return storage_->requires_grad; }
    void set_requires_grad(bool value) { storage_->requires_grad = value; }

    bool has_grad() const { return !storage_->grad.empty(); }
    /// Gradient buffer; empty until a backward pass reaches this tensor.
    std::span<const T> grad() const { return storage_->grad; }
    std::span<T> mutable_grad();
    void zero_grad();

    Tensor clone() const;
    /// Same data, no gradient history.
    Tensor detach() const;

    bool all_finite() const;

    // Storage is exposed to the op implementations and backward closures.
    struct Storage {
        Shape shape;
        std::vector<T> data;
        std::vector<T> grad;
        bool requires_grad = false;
    };
    const std::shared_ptr<Storage>& storage() const { return storage_; }
    explicit Tensor(std::shared_ptr<Storage> storage) : storage_(std::move(storage)) {}

private:
    std::shared_ptr<Storage> storage_;
};

/// Ordered record of the differentiable operations of one forward pass.
/// Single use: after backward() the tape is consumed.
///
/// A tape constructed with record = false evaluates ops without keeping any
/// history (inference, finite-difference probes).
template <typename T>
class Tape {
public:
    explicit Tape(bool record = true) : record_(record) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return record_ && !consumed_; }
    std::size_t size() const { return entries_.size(); }

    void push(std::function<void()> backward_rule);

    /// Reverse-topological sweep from a scalar loss. Gradients accumulate into
    /// every requires_grad tensor reachable from the loss.
    void backward(const Tensor<T>& loss);

private:
    std::vector<std::function<void()>> entries_;
    bool record_;
    bool consumed_ = false;
};

enum class Activation { kRelu, kTanh, kSigmoid };

// ---------------------------------------------------------------------------
// Operations. Each records its backward rule on the tape when the tape is
// recording and at least one operand requires a gradient.
//
// Broadcasting (add/sub/mul): b is aligned to a from the trailing axis; each
// of b's axes must equal a's or be 1, and missing leading axes repeat. The
// result always has a's shape.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape);

/// a[..., m, k] · b[k, n] -> [..., m, n]
template <typename T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

/// Batched product a[N, m, k] · b[N, k, n]; with transpose_b, b is [N, n, k].
template <typename T>
Tensor<T> bmm(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

template <typename T>
Tensor<T> transpose(Tape<T>& tape, const Tensor<T>& x);

/// Generic axis permutation: output axis i is input axis perm[i].
template <typename T>
Tensor<T> permute(Tape<T>& tape, const Tensor<T>& x, const std::vector<std::size_t>& perm);

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T factor);

/// Pointwise activation. The relu derivative at exactly 0 is 0. Sigmoid uses
/// the branch form 1/(1+e^-x) for x >= 0 and e^x/(1+e^x) otherwise.
template <typename T>
Tensor<T> activation(Tape<T>& tape, Activation kind, const Tensor<T>& x);

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x) { return activation(tape, Activation::kRelu, x); }
template <typename T>
Tensor<T> tanh(Tape<T>& tape, const Tensor<T>& x) { return activation(tape, Activation::kTanh, x); }
template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x) { return activation(tape, Activation::kSigmoid, x); }

/// Max-shifted softmax along one axis.
template <typename T>
Tensor<T> softmax(Tape<T>& tape, const Tensor<T>& x, std::size_t axis);

inline constexpr double kLayerNormEps = 1e-5;

/// Normalizes over the last axis with the biased (1/d) variance, eps inside
/// the square root, then applies gamma and beta.
template <typename T>
Tensor<T> layer_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps = static_cast<T>(kLayerNormEps));

/// Mean along one axis; the axis is removed from the shape.
template <typename T>
Tensor<T> reduce_mean(Tape<T>& tape, const Tensor<T>& x, std::size_t axis);

/// Sum of all elements as a rank-0 tensor.
template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x);

/// Mean over the batch of -log softmax(logits)[label], evaluated with a
/// max-shifted log-sum-exp. logits is [B, K]; the result is rank 0.
template <typename T>
Tensor<T> cross_entropy(Tape<T>& tape, const Tensor<T>& logits, std::span<const int> labels);

/// Observes the sign pattern of every relu input while installed. Used by the
/// gradient checker to detect perturbations that straddle a kink.
class ReluProbe {
public:
    ReluProbe();
    ~ReluProbe();
    ReluProbe(const ReluProbe&) = delete;
    ReluProbe& operator=(const ReluProbe&) = delete;

    const std::vector<bool>& pattern() const { return pattern_; }
    void observe(bool positive) { pattern_.push_back(positive); }

    static ReluProbe* active();

private:
    std::vector<bool> pattern_;
    ReluProbe* previous_;
};

}  // namespace setr
