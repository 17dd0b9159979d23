#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "setr/data.hpp"
#include "setr/metrics.hpp"
#include "setr/model.hpp"
#include "setr/random.hpp"

namespace setr {

struct TrainConfig {
    double learning_rate = 0.001;
    std::size_t batch_size = 64;
    std::size_t epochs = 65;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    // Evaluation threads; the result does not depend on this value.
    std::size_t workers = 1;

    void validate() const;
};

/// First and second moments per parameter, in ModelParams::named() order.
template <typename T>
struct AdamState {
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
    std::uint64_t step = 0;

    static AdamState for_params(const ModelParams<T>& params);
};

/// Bias-corrected Adam update using the gradients stored on the parameters.
/// Throws ContractError naming the first parameter without a gradient.
template <typename T>
void adam_step(ModelParams<T>& params, AdamState<T>& state, const TrainConfig& config);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    double val_macro_precision = 0.0;
    double val_macro_recall = 0.0;
    double val_macro_f1 = 0.0;
};

/// One JSON object, no trailing newline.
std::string epoch_record_json(const EpochRecord& record);

/// Stacks the selected windows into a [B, T, 3] tensor plus labels.
template <typename T>
Tensor<T> make_batch(std::span<const WindowedSample> samples, std::span<const std::size_t> indices,
                     std::size_t window_len, std::vector<int>* labels = nullptr);

struct EvalResult {
    double loss = 0.0;
    ConfusionMatrix confusion{2};
    std::vector<int> predictions;  // parallel to the evaluated indices
};

/// Frozen-parameter pass: argmax prediction (ties to the lowest class id),
/// confusion counts and mean per-sample loss. Batches may run on several
/// workers; the reduction is in index order.
template <typename T>
EvalResult evaluate(const ModelParams<T>& params, const ModelConfig& config, std::span<const WindowedSample> samples,
                    std::span<const std::size_t> indices, std::size_t batch_size = 64, std::size_t workers = 1);

/// Shuffled mini-batches (last ragged batch kept): forward, loss, backward,
/// Adam. Returns the sample-weighted mean training loss. Throws NumericError
/// on a non-finite loss.
template <typename T>
double train_epoch(ModelParams<T>& params, const ModelConfig& model_config, std::span<const WindowedSample> samples,
                   std::span<const std::size_t> train_indices, AdamState<T>& state, const TrainConfig& config,
                   Rng& shuffler, std::size_t epoch);

struct FitOptions {
    // Evaluate the untrained model on the training set first.
    bool measure_initial_loss = false;
    // Called after each epoch; returning false stops training.
    std::function<bool(const EpochRecord&)> on_epoch;
};

template <typename T>
struct FitResult {
    std::vector<EpochRecord> records;
    double initial_train_loss = 0.0;
    ModelParams<T> best_params;
    std::size_t best_epoch = 0;
    ConfusionMatrix final_confusion{2};
};

/// Trains params in place for config.epochs epochs with a validation pass
/// after each. best_params is the snapshot with the highest validation
/// accuracy (earliest on ties).
template <typename T>
FitResult<T> fit(ModelParams<T>& params, const ModelConfig& model_config, std::span<const WindowedSample> samples,
                 const SplitIndices& split, const TrainConfig& config, const FitOptions& options = {});

}  // namespace setr
