#include "setr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace setr {

// ---------------------------------------------------------------- Shape

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    for (std::size_t d : dims_) {
        if (d == 0) throw DimensionError("shape " + str() + " has a zero-sized dimension");
    }
}

std::size_t Shape::numel() const {
    return std::accumulate(dims_.begin(), dims_.end(), std::size_t{1}, std::multiplies<>());
}

std::string Shape::str() const {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < dims_.size(); ++i) out << (i ? "," : "") << dims_[i];
    out << ']';
    return out.str();
}

// ---------------------------------------------------------------- Tensor

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    auto s = std::make_shared<Storage>();
    s->data.assign(shape.numel(), value);
    s->shape = std::move(shape);
    s->requires_grad = requires_grad;
    return Tensor(std::move(s));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> data, bool requires_grad) {
    if (shape.numel() != data.size()) {
        throw DimensionError("shape " + shape.str() + " holds " + std::to_string(shape.numel()) +
                             " values, got " + std::to_string(data.size()));
    }
    auto s = std::make_shared<Storage>();
    s->shape = std::move(shape);
    s->data = std::move(data);
    s->requires_grad = requires_grad;
    return Tensor(std::move(s));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return from(Shape{}, {value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape().str());
    return storage_->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
    const Shape& s = shape();
    if (index.size() != s.rank()) throw DimensionError("index rank mismatch for shape " + s.str());
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
        if (i >= s[axis]) throw DimensionError("index out of range for shape " + s.str());
        flat = flat * s[axis] + i;
        ++axis;
    }
    return storage_->data[flat];
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
    if (storage_->grad.empty()) storage_->grad.assign(storage_->data.size(), T(0));
    return storage_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
    std::fill(storage_->grad.begin(), storage_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
    auto s = std::make_shared<Storage>(*storage_);
    return Tensor(std::move(s));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return from(shape(), storage_->data, false);
}

template <typename T>
bool Tensor<T>::all_finite() const {
    return std::all_of(storage_->data.begin(), storage_->data.end(),
                       [](T v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;

// ---------------------------------------------------------------- Tape

template <typename T>
void Tape<T>::push(std::function<void()> backward_rule) {
    entries_.push_back(std::move(backward_rule));
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
    if (consumed_) throw ContractError("backward called twice on the same tape");
    if (!record_) throw ContractError("backward on a tape that does not record");
    if (loss.numel() != 1) {
        throw ContractError("backward requires a scalar loss, got shape " + loss.shape().str());
    }
    if (!loss.requires_grad()) {
        throw ContractError("loss was not produced by taped operations on requires_grad tensors");
    }
    Tensor<T> root = loss;
    root.mutable_grad()[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    entries_.clear();
    consumed_ = true;
}

template class Tape<float>;
template class Tape<double>;

// ---------------------------------------------------------------- ReluProbe

namespace {
thread_local ReluProbe* g_active_probe = nullptr;
}

ReluProbe::ReluProbe() : previous_(g_active_probe) { g_active_probe = this; }
ReluProbe::~ReluProbe() { g_active_probe = previous_; }
ReluProbe* ReluProbe::active() { return g_active_probe; }

// ---------------------------------------------------------------- kernels

namespace {

template <typename T>
using StoragePtr = std::shared_ptr<typename Tensor<T>::Storage>;

template <typename T>
std::vector<T>& grad_buffer(typename Tensor<T>::Storage& s) {
    if (s.grad.empty()) s.grad.assign(s.data.size(), T(0));
    return s.grad;
}

template <typename T>
bool wants_grad(const Tape<T>& tape, std::initializer_list<const Tensor<T>*> inputs) {
    if (!tape.recording()) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor<T>* t) { return t->requires_grad(); });
}

template <typename T>
Tensor<T> make_output(Shape shape, bool requires_grad) {
    return Tensor<T>::zeros(std::move(shape), requires_grad);
}

// C[m,n] += A[m,k] B[k,n]. Four rows of C share each pass over a row of B.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        T* __restrict c0 = c + i * n;
        T* __restrict c1 = c0 + n;
        T* __restrict c2 = c1 + n;
        T* __restrict c3 = c2 + n;
        for (std::size_t p = 0; p < k; ++p) {
            const T a0 = a[i * k + p], a1 = a[(i + 1) * k + p], a2 = a[(i + 2) * k + p], a3 = a[(i + 3) * k + p];
            const T* __restrict brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                const T bv = brow[j];
                c0[j] += a0 * bv;
                c1[j] += a1 * bv;
                c2[j] += a2 * bv;
                c3[j] += a3 * bv;
            }
        }
    }
    for (; i < m; ++i) {
        T* __restrict crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a[i * k + p];
            const T* __restrict brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,n] += A[m,k] B[n,k]^T. B is transposed into a scratch buffer first so
// the inner loop runs over contiguous memory.
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    thread_local std::vector<T> bt;
    bt.resize(k * n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    gemm_nn(a, bt.data(), c, m, k, n);
}

// C[m,n] += A[k,m]^T B[k,n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        const T* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const T av = a[p * m + i];
            T* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// Splits a shape around `axis` into (outer, length, inner) extents.
struct AxisView {
    std::size_t outer = 1;
    std::size_t length = 1;
    std::size_t inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis, const char* op) {
    if (axis >= shape.rank()) {
        throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                             " out of range for shape " + shape.str());
    }
    AxisView v;
    for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
    v.length = shape[axis];
    for (std::size_t i = axis + 1; i < shape.rank(); ++i) v.inner *= shape[i];
    return v;
}

// Index map from each element of `a` to the broadcast element of `b`.
std::vector<std::size_t> broadcast_index(const Shape& a, const Shape& b, const char* op) {
    if (b.rank() > a.rank()) {
        throw DimensionError(std::string(op) + ": cannot broadcast " + b.str() + " onto " + a.str());
    }
    const std::size_t offset = a.rank() - b.rank();
    std::vector<std::size_t> stride(a.rank(), 0);
    std::size_t running = 1;
    for (std::size_t i = b.rank(); i-- > 0;) {
        const std::size_t ad = a[i + offset];
        if (b[i] != ad && b[i] != 1) {
            throw DimensionError(std::string(op) + ": cannot broadcast " + b.str() + " onto " + a.str());
        }
        stride[i + offset] = b[i] == 1 ? 0 : running;
        running *= b[i];
    }
    const std::size_t n = a.numel();
    std::vector<std::size_t> map(n);
    std::vector<std::size_t> counter(a.rank(), 0);
    std::size_t bi = 0;
    for (std::size_t flat = 0; flat < n; ++flat) {
        map[flat] = bi;
        for (std::size_t ax = a.rank(); ax-- > 0;) {
            ++counter[ax];
            bi += stride[ax];
            if (counter[ax] < a[ax]) break;
            bi -= stride[ax] * counter[ax];
            counter[ax] = 0;
        }
    }
    return map;
}

enum class BinaryKind { kAdd, kSub, kMul };

template <typename T>
Tensor<T> binary(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b, BinaryKind kind, const char* op) {
    const bool same = a.shape() == b.shape();
    std::vector<std::size_t> map;
    if (!same) map = broadcast_index(a.shape(), b.shape(), op);
    const bool rg = wants_grad(tape, {&a, &b});
    Tensor<T> out = make_output<T>(a.shape(), rg);
    auto ad = a.data();
    auto bd = b.data();
    auto od = out.mutable_data();
    const std::size_t n = od.size();
    for (std::size_t i = 0; i < n; ++i) {
        const T bv = bd[same ? i : map[i]];
        switch (kind) {
            case BinaryKind::kAdd: od[i] = ad[i] + bv; break;
            case BinaryKind::kSub: od[i] = ad[i] - bv; break;
            case BinaryKind::kMul: od[i] = ad[i] * bv; break;
        }
    }
    if (rg) {
        tape.push([as = a.storage(), bs = b.storage(), os = out.storage(), map = std::move(map), same, kind] {
            if (os->grad.empty()) return;
            const auto& g = os->grad;
            const std::size_t n = g.size();
            if (as->requires_grad) {
                auto& ga = grad_buffer<T>(*as);
                for (std::size_t i = 0; i < n; ++i) {
                    ga[i] += kind == BinaryKind::kMul ? g[i] * bs->data[same ? i : map[i]] : g[i];
                }
            }
            if (bs->requires_grad) {
                auto& gb = grad_buffer<T>(*bs);
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t j = same ? i : map[i];
                    switch (kind) {
                        case BinaryKind::kAdd: gb[j] += g[i]; break;
                        case BinaryKind::kSub: gb[j] -= g[i]; break;
                        case BinaryKind::kMul: gb[j] += g[i] * as->data[i]; break;
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------- ops

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape) {
    if (shape.numel() != x.numel()) {
        throw DimensionError("reshape: cannot view " + x.shape().str() + " as " + shape.str());
    }
    const bool rg = wants_grad(tape, {&x});
    Tensor<T> out = Tensor<T>::from(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()), rg);
    if (rg) {
        tape.push([xs = x.storage(), os = out.storage()] {
            if (os->grad.empty()) return;
            auto& gx = grad_buffer<T>(*xs);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += os->grad[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.rank() < 2 || bs.rank() != 2 || as.back() != bs[0]) {
        throw DimensionError("matmul: shapes " + as.str() + " and " + bs.str() + " are incompatible");
    }
    const std::size_t k = bs[0];
    const std::size_t n = bs[1];
    const std::size_t rows = a.numel() / k;
    std::vector<std::size_t> dims = as.dims();
    dims.back() = n;
    const bool rg = wants_grad(tape, {&a, &b});
    Tensor<T> out = make_output<T>(Shape(std::move(dims)), rg);
    gemm_nn(a.data().data(), b.data().data(), out.mutable_data().data(), rows, k, n);
    if (rg) {
        tape.push([as_ = a.storage(), bs_ = b.storage(), os = out.storage(), rows, k, n] {
            if (os->grad.empty()) return;
            const T* g = os->grad.data();
            if (as_->requires_grad) gemm_nt(g, bs_->data.data(), grad_buffer<T>(*as_).data(), rows, n, k);
            if (bs_->requires_grad) gemm_tn(as_->data.data(), g, grad_buffer<T>(*bs_).data(), k, rows, n);
        });
    }
    return out;
}

template <typename T>
Tensor<T> bmm(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    const bool ok = as.rank() == 3 && bs.rank() == 3 && as[0] == bs[0] &&
                    (transpose_b ? as[2] == bs[2] : as[2] == bs[1]);
    if (!ok) {
        throw DimensionError("bmm: shapes " + as.str() + " and " + bs.str() +
                             (transpose_b ? " (b transposed)" : "") + " are incompatible");
    }
    const std::size_t batch = as[0];
    const std::size_t m = as[1];
    const std::size_t k = as[2];
    const std::size_t n = transpose_b ? bs[1] : bs[2];
    const bool rg = wants_grad(tape, {&a, &b});
    Tensor<T> out = make_output<T>(Shape{batch, m, n}, rg);
    const T* ap = a.data().data();
    const T* bp = b.data().data();
    T* op = out.mutable_data().data();
    for (std::size_t i = 0; i < batch; ++i) {
        if (transpose_b) {
            gemm_nt(ap + i * m * k, bp + i * n * k, op + i * m * n, m, k, n);
        } else {
            gemm_nn(ap + i * m * k, bp + i * k * n, op + i * m * n, m, k, n);
        }
    }
    if (rg) {
        tape.push([as_ = a.storage(), bs_ = b.storage(), os = out.storage(), batch, m, k, n, transpose_b] {
            if (os->grad.empty()) return;
            const T* g = os->grad.data();
            const T* ad = as_->data.data();
            const T* bd = bs_->data.data();
            T* ga = as_->requires_grad ? grad_buffer<T>(*as_).data() : nullptr;
            T* gb = bs_->requires_grad ? grad_buffer<T>(*bs_).data() : nullptr;
            for (std::size_t i = 0; i < batch; ++i) {
                const T* gi = g + i * m * n;
                const T* ai = ad + i * m * k;
                const T* bi = bd + i * k * n;
                if (transpose_b) {
                    if (ga) gemm_nn(gi, bi, ga + i * m * k, m, n, k);
                    if (gb) gemm_tn(gi, ai, gb + i * n * k, n, m, k);
                } else {
                    if (ga) gemm_nt(gi, bi, ga + i * m * k, m, n, k);
                    if (gb) gemm_tn(ai, gi, gb + i * k * n, k, m, n);
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> transpose(Tape<T>& tape, const Tensor<T>& x) {
    if (x.shape().rank() != 2) throw DimensionError("transpose: expected a matrix, got " + x.shape().str());
    return permute(tape, x, {1, 0});
}

template <typename T>
Tensor<T> permute(Tape<T>& tape, const Tensor<T>& x, const std::vector<std::size_t>& perm) {
    const Shape& xs = x.shape();
    const std::size_t rank = xs.rank();
    std::vector<bool> seen(rank, false);
    bool valid = perm.size() == rank;
    for (std::size_t p : perm) {
        if (!valid || p >= rank || seen[p]) {
            valid = false;
            break;
        }
        seen[p] = true;
    }
    if (!valid) throw DimensionError("permute: invalid axis order for shape " + xs.str());

    std::vector<std::size_t> in_stride(rank, 1);
    for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * xs[i];
    std::vector<std::size_t> out_dims(rank);
    std::vector<std::size_t> stride(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        out_dims[i] = xs[perm[i]];
        stride[i] = in_stride[perm[i]];
    }
    const std::size_t n = x.numel();
    // source[flat_out] = flat_in
    std::vector<std::size_t> source(n);
    std::vector<std::size_t> counter(rank, 0);
    std::size_t src = 0;
    for (std::size_t flat = 0; flat < n; ++flat) {
        source[flat] = src;
        for (std::size_t ax = rank; ax-- > 0;) {
            ++counter[ax];
            src += stride[ax];
            if (counter[ax] < out_dims[ax]) break;
            src -= stride[ax] * counter[ax];
            counter[ax] = 0;
        }
    }
    const bool rg = wants_grad(tape, {&x});
    Tensor<T> out = make_output<T>(Shape(std::move(out_dims)), rg);
    auto xd = x.data();
    auto od = out.mutable_data();
    for (std::size_t i = 0; i < n; ++i) od[i] = xd[source[i]];
    if (rg) {
        tape.push([xs_ = x.storage(), os = out.storage(), source = std::move(source)] {
            if (os->grad.empty()) return;
            auto& gx = grad_buffer<T>(*xs_);
            for (std::size_t i = 0; i < source.size(); ++i) gx[source[i]] += os->grad[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    return binary(tape, a, b, BinaryKind::kAdd, "add");
}

template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    return binary(tape, a, b, BinaryKind::kSub, "sub");
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    return binary(tape, a, b, BinaryKind::kMul, "mul");
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T factor) {
    const bool rg = wants_grad(tape, {&x});
    Tensor<T> out = make_output<T>(x.shape(), rg);
    auto xd = x.data();
    auto od = out.mutable_data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = xd[i] * factor;
    if (rg) {
        tape.push([xs = x.storage(), os = out.storage(), factor] {
            if (os->grad.empty()) return;
            auto& gx = grad_buffer<T>(*xs);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += os->grad[i] * factor;
        });
    }
    return out;
}

template <typename T>
Tensor<T> activation(Tape<T>& tape, Activation kind, const Tensor<T>& x) {
    const bool rg = wants_grad(tape, {&x});
    Tensor<T> out = make_output<T>(x.shape(), rg);
    auto xd = x.data();
    auto od = out.mutable_data();
    switch (kind) {
        case Activation::kRelu:
            if (ReluProbe* probe = ReluProbe::active()) {
                for (T v : xd) probe->observe(v > T(0));
            }
            for (std::size_t i = 0; i < od.size(); ++i) od[i] = xd[i] > T(0) ? xd[i] : T(0);
            break;
        case Activation::kTanh:
            for (std::size_t i = 0; i < od.size(); ++i) od[i] = std::tanh(xd[i]);
            break;
        case Activation::kSigmoid:
            for (std::size_t i = 0; i < od.size(); ++i) {
                const T v = xd[i];
                if (v >= T(0)) {
                    od[i] = T(1) / (T(1) + std::exp(-v));
                } else {
                    const T e = std::exp(v);
                    od[i] = e / (T(1) + e);
                }
            }
            break;
    }
    if (rg) {
        tape.push([xs = x.storage(), os = out.storage(), kind] {
            if (os->grad.empty()) return;
            auto& gx = grad_buffer<T>(*xs);
            const auto& g = os->grad;
            const auto& y = os->data;
            for (std::size_t i = 0; i < gx.size(); ++i) {
                switch (kind) {
                    case Activation::kRelu: gx[i] += xs->data[i] > T(0) ? g[i] : T(0); break;
                    case Activation::kTanh: gx[i] += g[i] * (T(1) - y[i] * y[i]); break;
                    case Activation::kSigmoid: gx[i] += g[i] * y[i] * (T(1) - y[i]); break;
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> softmax(Tape<T>& tape, const Tensor<T>& x, std::size_t axis) {
    const AxisView v = axis_view(x.shape(), axis, "softmax");
    const bool rg = wants_grad(tape, {&x});
    Tensor<T> out = make_output<T>(x.shape(), rg);
    auto xd = x.data();
    auto od = out.mutable_data();
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t in = 0; in < v.inner; ++in) {
            const std::size_t base = o * v.length * v.inner + in;
            T mx = xd[base];
            for (std::size_t l = 1; l < v.length; ++l) mx = std::max(mx, xd[base + l * v.inner]);
            double total = 0.0;
            for (std::size_t l = 0; l < v.length; ++l) {
                const T e = std::exp(xd[base + l * v.inner] - mx);
                od[base + l * v.inner] = e;
                total += e;
            }
            const T inv = static_cast<T>(1.0 / total);
            for (std::size_t l = 0; l < v.length; ++l) od[base + l * v.inner] *= inv;
        }
    }
    if (rg) {
        tape.push([xs = x.storage(), os = out.storage(), v] {
            if (os->grad.empty()) return;
            auto& gx = grad_buffer<T>(*xs);
            const auto& g = os->grad;
            const auto& y = os->data;
            for (std::size_t o = 0; o < v.outer; ++o) {
                for (std::size_t in = 0; in < v.inner; ++in) {
                    const std::size_t base = o * v.length * v.inner + in;
                    double dot = 0.0;
                    for (std::size_t l = 0; l < v.length; ++l) {
                        const std::size_t i = base + l * v.inner;
                        dot += static_cast<double>(g[i]) * y[i];
                    }
                    const T d = static_cast<T>(dot);
                    for (std::size_t l = 0; l < v.length; ++l) {
                        const std::size_t i = base + l * v.inner;
                        gx[i] += y[i] * (g[i] - d);
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> layer_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    const Shape& xs = x.shape();
    if (xs.rank() < 1 || gamma.shape() != Shape{xs.back()} || beta.shape() != Shape{xs.back()}) {
        throw DimensionError("layer_norm: input " + xs.str() + " with gamma " + gamma.shape().str() +
                             " and beta " + beta.shape().str());
    }
    const std::size_t d = xs.back();
    const std::size_t rows = x.numel() / d;
    const bool rg = wants_grad(tape, {&x, &gamma, &beta});
    Tensor<T> out = make_output<T>(xs, rg);
    std::vector<T> xhat(x.numel());
    std::vector<T> rstd(rows);
    auto xd = x.data();
    auto gd = gamma.data();
    auto bd = beta.data();
    auto od = out.mutable_data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = xd.data() + r * d;
        double mean = 0.0;
        for (std::size_t i = 0; i < d; ++i) mean += row[i];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double c = row[i] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
        rstd[r] = static_cast<T>(inv);
        for (std::size_t i = 0; i < d; ++i) {
            const T h = static_cast<T>((row[i] - mean) * inv);
            xhat[r * d + i] = h;
            od[r * d + i] = h * gd[i] + bd[i];
        }
    }
    if (rg) {
        tape.push([xs_ = x.storage(), gs = gamma.storage(), bs = beta.storage(), os = out.storage(),
                   xhat = std::move(xhat), rstd = std::move(rstd), rows, d] {
            if (os->grad.empty()) return;
            const auto& g = os->grad;
            if (gs->requires_grad || bs->requires_grad) {
                auto& gg = grad_buffer<T>(*gs);
                auto& gb = grad_buffer<T>(*bs);
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t i = 0; i < d; ++i) {
                        gg[i] += g[r * d + i] * xhat[r * d + i];
                        gb[i] += g[r * d + i];
                    }
                }
            }
            if (xs_->requires_grad) {
                auto& gx = grad_buffer<T>(*xs_);
                const auto& gamma_v = gs->data;
                for (std::size_t r = 0; r < rows; ++r) {
                    double mean_dh = 0.0;
                    double mean_dh_h = 0.0;
                    for (std::size_t i = 0; i < d; ++i) {
                        const double dh = static_cast<double>(g[r * d + i]) * gamma_v[i];
                        mean_dh += dh;
                        mean_dh_h += dh * xhat[r * d + i];
                    }
                    mean_dh /= static_cast<double>(d);
                    mean_dh_h /= static_cast<double>(d);
                    for (std::size_t i = 0; i < d; ++i) {
                        const double dh = static_cast<double>(g[r * d + i]) * gamma_v[i];
                        gx[r * d + i] += static_cast<T>(rstd[r] * (dh - mean_dh - xhat[r * d + i] * mean_dh_h));
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> reduce_mean(Tape<T>& tape, const Tensor<T>& x, std::size_t axis) {
    const AxisView v = axis_view(x.shape(), axis, "reduce_mean");
    std::vector<std::size_t> dims = x.shape().dims();
    dims.erase(dims.begin() + static_cast<std::ptrdiff_t>(axis));
    const bool rg = wants_grad(tape, {&x});
    Tensor<T> out = make_output<T>(Shape(std::move(dims)), rg);
    auto xd = x.data();
    auto od = out.mutable_data();
    const double inv_len = 1.0 / static_cast<double>(v.length);
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t in = 0; in < v.inner; ++in) {
            double total = 0.0;
            for (std::size_t l = 0; l < v.length; ++l) total += xd[(o * v.length + l) * v.inner + in];
            od[o * v.inner + in] = static_cast<T>(total * inv_len);
        }
    }
    if (rg) {
        tape.push([xs = x.storage(), os = out.storage(), v, inv_len] {
            if (os->grad.empty()) return;
            auto& gx = grad_buffer<T>(*xs);
            for (std::size_t o = 0; o < v.outer; ++o) {
                for (std::size_t l = 0; l < v.length; ++l) {
                    for (std::size_t in = 0; in < v.inner; ++in) {
                        gx[(o * v.length + l) * v.inner + in] +=
                            static_cast<T>(os->grad[o * v.inner + in] * inv_len);
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
    const bool rg = wants_grad(tape, {&x});
    double total = 0.0;
    for (T v : x.data()) total += v;
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total), rg);
    if (rg) {
        tape.push([xs = x.storage(), os = out.storage()] {
            if (os->grad.empty()) return;
            auto& gx = grad_buffer<T>(*xs);
            for (auto& g : gx) g += os->grad[0];
        });
    }
    return out;
}

template <typename T>
Tensor<T> cross_entropy(Tape<T>& tape, const Tensor<T>& logits, std::span<const int> labels) {
    const Shape& s = logits.shape();
    if (s.rank() != 2 || s[0] != labels.size()) {
        throw DimensionError("cross_entropy: logits " + s.str() + " with " + std::to_string(labels.size()) +
                             " labels");
    }
    const std::size_t batch = s[0];
    const std::size_t classes = s[1];
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw ContractError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                                std::to_string(classes) + ")");
        }
    }
    const bool rg = wants_grad(tape, {&logits});
    auto z = logits.data();
    std::vector<double> log_norm(batch);
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const T* row = z.data() + b * classes;
        const T mx = *std::max_element(row, row + classes);
        double acc = 0.0;
        for (std::size_t k = 0; k < classes; ++k) acc += std::exp(static_cast<double>(row[k] - mx));
        log_norm[b] = static_cast<double>(mx) + std::log(acc);
        total += log_norm[b] - static_cast<double>(row[labels[b]]);
    }
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(batch)), rg);
    if (rg) {
        tape.push([ls = logits.storage(), os = out.storage(), log_norm = std::move(log_norm),
                   targets = std::vector<int>(labels.begin(), labels.end()), batch, classes] {
            if (os->grad.empty()) return;
            auto& gl = grad_buffer<T>(*ls);
            const double g = static_cast<double>(os->grad[0]) / static_cast<double>(batch);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t k = 0; k < classes; ++k) {
                    const std::size_t i = b * classes + k;
                    double p = std::exp(static_cast<double>(ls->data[i]) - log_norm[b]);
                    if (static_cast<int>(k) == targets[b]) p -= 1.0;
                    gl[i] += static_cast<T>(g * p);
                }
            }
        });
    }
    return out;
}

#define SETR_INSTANTIATE_OPS(T)                                                                        \
    template Tensor<T> reshape(Tape<T>&, const Tensor<T>&, Shape);                                     \
    template Tensor<T> matmul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                           \
    template Tensor<T> bmm(Tape<T>&, const Tensor<T>&, const Tensor<T>&, bool);                        \
    template Tensor<T> transpose(Tape<T>&, const Tensor<T>&);                                          \
    template Tensor<T> permute(Tape<T>&, const Tensor<T>&, const std::vector<std::size_t>&);           \
    template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> sub(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> scale(Tape<T>&, const Tensor<T>&, T);                                           \
    template Tensor<T> activation(Tape<T>&, Activation, const Tensor<T>&);                             \
    template Tensor<T> softmax(Tape<T>&, const Tensor<T>&, std::size_t);                               \
    template Tensor<T> layer_norm(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);  \
    template Tensor<T> reduce_mean(Tape<T>&, const Tensor<T>&, std::size_t);                           \
    template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                                                \
    template Tensor<T> cross_entropy(Tape<T>&, const Tensor<T>&, std::span<const int>);

SETR_INSTANTIATE_OPS(float)
SETR_INSTANTIATE_OPS(double)

#undef SETR_INSTANTIATE_OPS

}  // namespace setr
