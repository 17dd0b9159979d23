#include "setr/training.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <cmath>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace setr {

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be a finite value >= 0");
    }
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
    if (workers < 1) throw ConfigError("workers must be >= 1");
}

template <typename T>
AdamState<T> AdamState<T>::for_params(const ModelParams<T>& params) {
    AdamState<T> s;
    for (const auto& [name, t] : params.named()) {
        s.m.emplace_back(t.numel(), T(0));
        s.v.emplace_back(t.numel(), T(0));
    }
    return s;
}

template <typename T>
void adam_step(ModelParams<T>& params, AdamState<T>& state, const TrainConfig& config) {
    auto named = params.named();
    if (state.m.size() != named.size() || state.v.size() != named.size()) {
        throw ContractError("adam_step: optimizer state does not match the parameters");
    }
    for (std::size_t i = 0; i < named.size(); ++i) {
        if (!named[i].tensor.has_grad()) throw ContractError("adam_step: no gradient for parameter " + named[i].name);
        if (state.m[i].size() != named[i].tensor.numel()) {
            throw ContractError("adam_step: state shape mismatch for parameter " + named[i].name);
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(config.beta1, t);
    const double correction2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < named.size(); ++i) {
        auto values = named[i].tensor.mutable_data();
        auto grads = named[i].tensor.grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < values.size(); ++j) {
            const double g = grads[j];
            const double mj = config.beta1 * m[j] + (1.0 - config.beta1) * g;
            const double vj = config.beta2 * v[j] + (1.0 - config.beta2) * g * g;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            const double update = config.learning_rate * (mj / correction1) / (std::sqrt(vj / correction2) + config.adam_eps);
            values[j] = static_cast<T>(values[j] - update);
        }
    }
}

std::string epoch_record_json(const EpochRecord& r) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["train_loss"] = r.train_loss;
    j["val_loss"] = r.val_loss;
    j["val_accuracy"] = r.val_accuracy;
    j["val_macro_precision"] = r.val_macro_precision;
    j["val_macro_recall"] = r.val_macro_recall;
    j["val_macro_f1"] = r.val_macro_f1;
    return j.dump();
}

template <typename T>
Tensor<T> make_batch(std::span<const WindowedSample> samples, std::span<const std::size_t> indices,
                     std::size_t window_len, std::vector<int>* labels) {
    if (indices.empty()) throw ContractError("make_batch: empty batch");
    const std::size_t stride = window_len * kAxes;
    std::vector<T> data;
    data.reserve(indices.size() * stride);
    if (labels) labels->clear();
    for (std::size_t i : indices) {
        const auto& s = samples[i];
        if (s.x.size() != stride) {
            throw DimensionError("sample " + std::to_string(i) + " has " + std::to_string(s.x.size()) +
                                 " values, expected " + std::to_string(stride));
        }
        data.insert(data.end(), s.x.begin(), s.x.end());
        if (labels) labels->push_back(s.label);
    }
    return Tensor<T>::from(Shape{indices.size(), window_len, kAxes}, std::move(data));
}

template <typename T>
EvalResult evaluate(const ModelParams<T>& params, const ModelConfig& config, std::span<const WindowedSample> samples,
                    std::span<const std::size_t> indices, std::size_t batch_size, std::size_t workers) {
    if (indices.empty()) throw ContractError("evaluate: empty dataset");
    if (batch_size == 0) batch_size = 1;
    const std::size_t n = indices.size();
    const std::size_t K = config.num_classes;
    std::vector<double> losses(n);
    std::vector<int> predictions(n);
    for (std::size_t i : indices) {
        if (samples[i].label < 0 || static_cast<std::size_t>(samples[i].label) >= K) {
            throw ContractError("evaluate: label " + std::to_string(samples[i].label) + " out of range");
        }
    }

    const std::size_t num_batches = (n + batch_size - 1) / batch_size;
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t b = next++; b < num_batches; b = next++) {
            const std::size_t lo = b * batch_size;
            const std::size_t hi = std::min(n, lo + batch_size);
            Tape<T> tape(false);
            Tensor<T> x = make_batch<T>(samples, indices.subspan(lo, hi - lo), config.window_len);
            ForwardResult<T> r = forward(tape, x, params, config);
            auto logits = r.logits.data();
            for (std::size_t s = lo; s < hi; ++s) {
                const T* row = logits.data() + (s - lo) * K;
                std::size_t best = 0;
                for (std::size_t k = 1; k < K; ++k) {
                    if (row[k] > row[best]) best = k;
                }
                const T mx = row[best];
                double acc = 0.0;
                for (std::size_t k = 0; k < K; ++k) acc += std::exp(static_cast<double>(row[k] - mx));
                const int truth = samples[indices[s]].label;
                losses[s] = static_cast<double>(mx) + std::log(acc) - static_cast<double>(row[truth]);
                predictions[s] = static_cast<int>(best);
            }
        }
    };
    std::exception_ptr failure;
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        std::mutex failure_mutex;
        for (std::size_t w = 0; w < std::min(workers, num_batches); ++w) {
            pool.emplace_back([&] {
                try {
                    work();
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next = num_batches;
                }
            });
        }
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }

    EvalResult result;
    result.confusion = ConfusionMatrix(K);
    double total = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        total += losses[s];
        result.confusion.update(samples[indices[s]].label, predictions[s]);
    }
    result.loss = total / static_cast<double>(n);
    result.predictions = std::move(predictions);
    return result;
}

template <typename T>
double train_epoch(ModelParams<T>& params, const ModelConfig& model_config, std::span<const WindowedSample> samples,
                   std::span<const std::size_t> train_indices, AdamState<T>& state, const TrainConfig& config,
                   Rng& shuffler, std::size_t epoch) {
    if (train_indices.empty()) throw ContractError("train_epoch: empty training set");
    std::vector<std::size_t> order(train_indices.begin(), train_indices.end());
    shuffler.shuffle(std::span(order));

    double total = 0.0;
    std::vector<int> labels;
    for (std::size_t lo = 0, batch = 0; lo < order.size(); lo += config.batch_size, ++batch) {
        const std::size_t hi = std::min(order.size(), lo + config.batch_size);
        Tensor<T> x = make_batch<T>(samples, std::span(order).subspan(lo, hi - lo), model_config.window_len, &labels);
        params.zero_grad();
        Tape<T> tape;
        Tensor<T> loss = model_loss(tape, x, labels, params, model_config);
        const double value = loss.item();
        if (!std::isfinite(value)) {
            std::ostringstream msg;
            msg << "non-finite training loss " << value << " at epoch " << epoch << ", batch " << batch;
            throw NumericError(msg.str());
        }
        tape.backward(loss);
        adam_step(params, state, config);
        total += value * static_cast<double>(hi - lo);
    }
    return total / static_cast<double>(order.size());
}

template <typename T>
FitResult<T> fit(ModelParams<T>& params, const ModelConfig& model_config, std::span<const WindowedSample> samples,
                 const SplitIndices& split, const TrainConfig& config, const FitOptions& options) {
    config.validate();
    model_config.validate();
    if (split.train.empty() || split.validation.empty()) {
        throw ContractError("fit: training and validation sets must both be non-empty");
    }
    std::vector<std::size_t> sorted_train = split.train;
    std::sort(sorted_train.begin(), sorted_train.end());
    for (std::size_t i : split.validation) {
        if (std::binary_search(sorted_train.begin(), sorted_train.end(), i)) {
            throw ContractError("fit: sample " + std::to_string(i) + " is in both training and validation sets");
        }
    }

    FitResult<T> result;
    if (options.measure_initial_loss) {
        result.initial_train_loss =
            evaluate(params, model_config, samples, split.train, config.batch_size, config.workers).loss;
    }
    AdamState<T> state = AdamState<T>::for_params(params);
    Rng shuffler(config.seed ^ 0x9e3779b97f4a7c15ULL);
    double best_accuracy = -1.0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = train_epoch(params, model_config, samples, split.train, state, config, shuffler, epoch);
        EvalResult val = evaluate(params, model_config, samples, split.validation, config.batch_size, config.workers);
        const MetricSummary m = summarize(val.confusion);
        record.val_loss = val.loss;
        record.val_accuracy = m.accuracy;
        record.val_macro_precision = m.macro_precision;
        record.val_macro_recall = m.macro_recall;
        record.val_macro_f1 = m.macro_f1;
        result.records.push_back(record);
        result.final_confusion = val.confusion;
        if (m.accuracy > best_accuracy) {
            best_accuracy = m.accuracy;
            result.best_params = params.clone();
            result.best_epoch = epoch;
        }
        if (options.on_epoch && !options.on_epoch(record)) break;
    }
    return result;
}

#define SETR_INSTANTIATE_TRAINING(T)                                                                                \
    template struct AdamState<T>;                                                                                   \
    template void adam_step(ModelParams<T>&, AdamState<T>&, const TrainConfig&);                                    \
    template Tensor<T> make_batch(std::span<const WindowedSample>, std::span<const std::size_t>, std::size_t,        \
                                  std::vector<int>*);                                                               \
    template EvalResult evaluate(const ModelParams<T>&, const ModelConfig&, std::span<const WindowedSample>,        \
                                 std::span<const std::size_t>, std::size_t, std::size_t);                           \
    template double train_epoch(ModelParams<T>&, const ModelConfig&, std::span<const WindowedSample>,               \
                                std::span<const std::size_t>, AdamState<T>&, const TrainConfig&, Rng&, std::size_t); \
    template FitResult<T> fit(ModelParams<T>&, const ModelConfig&, std::span<const WindowedSample>,                 \
                              const SplitIndices&, const TrainConfig&, const FitOptions&);

SETR_INSTANTIATE_TRAINING(float)
SETR_INSTANTIATE_TRAINING(double)

#undef SETR_INSTANTIATE_TRAINING

}  // namespace setr
