// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances are pinned here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "setr/checkpoint.hpp"
#include "setr/commands.hpp"
#include "setr/config.hpp"
#include "setr/dataset_io.hpp"
#include "setr/grad_check.hpp"
#include "setr/metrics.hpp"
#include "setr/training.hpp"

namespace {

using namespace setr;
namespace fs = std::filesystem;

constexpr double kGradTolerance = 1e-4;
constexpr std::size_t kGradCoordinates = 500;
constexpr double kGradCpuSeconds = 60.0;
constexpr double kPermutationTolerance = 1e-6;
constexpr double kSumTolerance = 1e-6;
constexpr double kMeanTolerance = 1e-5;
constexpr double kVarianceTolerance = 1e-4;
constexpr double kLearnAccuracy = 0.95;
constexpr std::size_t kLearnEpochs = 30;
constexpr double kLearnCpuSeconds = 300.0;
constexpr double kOverfitLoss = 0.05;
constexpr int kOverfitSteps = 200;
constexpr double kInitialLossLo = 1.64;
constexpr double kInitialLossHi = 2.14;
constexpr double kTraceSlack = 0.02;
constexpr double kMetricsTolerance = 1e-12;

struct Outcome {
    enum Status { kPass, kFail, kSkip } status;
    std::string detail;
};

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s.precision(precision);
    s << v;
    return s.str();
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.window_len = 8;
    c.model_dim = 16;
    c.num_heads = 2;
    c.se_reduction = 4;
    c.pool_hidden = 8;
    c.num_classes = 3;
    return c;
}

std::vector<WindowedSample> normalized_synth(SynthSpec spec) {
    auto data = synthesize_dataset(spec).samples;
    const NormStats stats = compute_norm_stats(data);
    for (auto& s : data) apply_normalization(s, stats);
    return data;
}

template <typename T>
Tensor<T> random_input(Rng& rng, std::size_t batch, std::size_t steps, std::size_t channels, double spread) {
    std::vector<T> v(batch * steps * channels);
    for (auto& x : v) x = static_cast<T>(rng.normal() * spread);
    return Tensor<T>::from({batch, steps, channels}, std::move(v));
}

// 1 -------------------------------------------------------------------------
Outcome gradient_fidelity() {
    const double start = cpu_seconds();
    const ModelConfig c = tiny_config();
    SynthSpec spec;
    spec.num_classes = 3;
    spec.per_class = 2;
    spec.window_len = c.window_len;
    spec.seed = 101;
    auto data = normalized_synth(spec);
    std::vector<std::size_t> pick{0, 2, 3, 5};
    std::vector<int> labels;
    const Tensor<double> x = make_batch<double>(data, pick, c.window_len, &labels);
    auto params = ModelParams<double>::init(c, 7);
    std::vector<Tensor<double>> leaves;
    for (const auto& n : params.named()) leaves.push_back(n.tensor);
    GradCheckOptions opt;
    opt.max_coordinates = kGradCoordinates;
    opt.seed = 11;
    const GradCheckReport r =
        grad_check([&](Tape<double>& tape) { return model_loss(tape, x, labels, params, c); }, leaves, opt);
    const double cpu = cpu_seconds() - start;
    const bool ok = r.checked >= kGradCoordinates && r.max_rel_error < kGradTolerance && cpu < kGradCpuSeconds;
    return {ok ? Outcome::kPass : Outcome::kFail,
            "max rel error " + fmt(r.max_rel_error, 3) + " over " + std::to_string(r.checked) + " coordinates (" +
                std::to_string(r.kinks_excluded) + " kinks excluded), " + fmt(cpu, 3) + " s CPU; need < " +
                fmt(kGradTolerance) + ", >= " + std::to_string(kGradCoordinates) + ", < " + fmt(kGradCpuSeconds) +
                " s"};
}

// 2 -------------------------------------------------------------------------
Outcome permutation_invariance() {
    const ModelConfig c;  // reference dimensions
    Rng rng(202);
    double worst = 0.0;
    for (int draw = 0; draw < 100; ++draw) {
        auto params = ModelParams<float>::init(c, 1000 + static_cast<std::uint64_t>(draw));
        auto x = random_input<float>(rng, 1, c.window_len, c.input_channels, 1.0 + 2.0 * rng.uniform());
        std::vector<std::size_t> perm(c.window_len);
        for (std::size_t t = 0; t < perm.size(); ++t) perm[t] = t;
        rng.shuffle(std::span(perm));
        std::vector<float> shuffled(x.numel());
        for (std::size_t t = 0; t < perm.size(); ++t)
            for (std::size_t a = 0; a < c.input_channels; ++a)
                shuffled[t * c.input_channels + a] = x.data()[perm[t] * c.input_channels + a];
        Tape<float> tape(false);
        auto p1 = forward(tape, x, params, c).class_probs;
        auto p2 = forward(tape, Tensor<float>::from(x.shape(), shuffled), params, c).class_probs;
        for (std::size_t k = 0; k < p1.numel(); ++k) {
            worst = std::max(worst, std::abs(static_cast<double>(p1.data()[k]) - p2.data()[k]));
        }
    }
    return {worst <= kPermutationTolerance ? Outcome::kPass : Outcome::kFail,
            "max |probs - probs_permuted| = " + fmt(worst, 3) + " over 100 draws at T=200, d=128 (f32); need <= " +
                fmt(kPermutationTolerance)};
}

// 3 -------------------------------------------------------------------------
Outcome normalization_contracts() {
    Rng rng(303);
    double worst_sum = 0.0;
    float min_value = 0.0f, gate_lo = 1.0f, gate_hi = 0.0f;
    std::size_t forwards = 0;
    for (int i = 0; i < 1000; ++i) {
        ModelConfig c;
        std::size_t batch = 1;
        if (i % 100 != 0) {
            const std::size_t dims[] = {8, 16, 32};
            c.model_dim = dims[rng.index(3)];
            c.num_heads = std::size_t{1} << rng.index(3);
            c.se_reduction = std::size_t{1} << rng.index(3);
            c.pool_hidden = 2 + rng.index(15);
            c.num_layers = 1 + rng.index(2);
            c.window_len = 1 + rng.index(40);
            c.num_classes = 2 + rng.index(7);
            batch = 1 + rng.index(3);
        }
        auto params = ModelParams<float>::init(c, 5000 + static_cast<std::uint64_t>(i));
        auto x = random_input<float>(rng, batch, c.window_len, c.input_channels, 0.5 + 5.0 * rng.uniform());
        Tape<float> tape(false);
        auto r = forward(tape, x, params, c);
        ++forwards;
        auto check_rows = [&](const Tensor<float>& t, std::size_t row) {
            auto d = t.data();
            for (std::size_t off = 0; off < d.size(); off += row) {
                double s = 0.0;
                for (std::size_t j = 0; j < row; ++j) {
                    s += d[off + j];
                    min_value = std::min(min_value, d[off + j]);
                }
                worst_sum = std::max(worst_sum, std::abs(s - 1.0));
            }
        };
        check_rows(r.pool_weights, c.window_len);
        check_rows(r.class_probs, c.num_classes);
        for (const auto& maps : r.attention_maps) check_rows(maps, c.window_len);
        for (float g : r.se_gate.data()) {
            gate_lo = std::min(gate_lo, g);
            gate_hi = std::max(gate_hi, g);
        }
    }
    const bool ok = worst_sum <= kSumTolerance && min_value >= 0.0f && gate_lo > 0.0f && gate_hi < 1.0f;
    return {ok ? Outcome::kPass : Outcome::kFail,
            std::to_string(forwards) + " forwards: max |row sum - 1| = " + fmt(worst_sum, 3) + ", min entry " +
                fmt(min_value, 3) + ", gate range [" + fmt(gate_lo, 6) + ", " + fmt(gate_hi, 6) + "]"};
}

// 4 -------------------------------------------------------------------------
Outcome preprocessing_oracles() {
    Rng rng(404);
    const char* acts[] = {"Walking", "Jogging", "Sitting", "Standing"};
    std::size_t mismatched_streams = 0, total_windows = 0;
    for (int stream = 0; stream < 200; ++stream) {
        const std::size_t users = 1 + rng.index(4);
        std::vector<RawRecord> records;
        std::vector<oracle::StreamPoint> points;
        for (std::size_t u = 0; u < users; ++u) {
            const std::size_t len = rng.index(400);
            std::string act = acts[rng.index(4)];
            for (std::size_t i = 0; i < len; ++i) {
                if (rng.uniform() < 0.01) act = acts[rng.index(4)];
                RawRecord r;
                r.user_id = static_cast<std::int64_t>(u * 7 + 3);
                r.activity = act;
                r.timestamp = static_cast<std::int64_t>(i) * 50;
                records.push_back(r);
            }
        }
        if (records.empty()) continue;
        Rng order_rng(static_cast<std::uint64_t>(stream));
        order_rng.shuffle(std::span(records));  // arrival order must not matter
        for (const auto& r : records) points.push_back({r.user_id, r.timestamp, r.activity});
        const std::size_t len = 10 + rng.index(60), stride = 1 + rng.index(40);
        const LabelMap labels = encode_labels(records);
        auto got = make_windows(records, labels, {len, stride, 0});
        auto want = oracle::enumerate_windows(points, len, stride);
        bool same = got.size() == want.size();
        for (std::size_t i = 0; same && i < got.size(); ++i) {
            same = got[i].user_id == want[i].user && got[i].start_index == want[i].start &&
                   labels.label(got[i].label) == want[i].activity;
        }
        mismatched_streams += !same;
        total_windows += want.size();
    }

    std::size_t worst_split = 0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<WindowedSample> samples;
        const std::size_t k = 2 + rng.index(5);
        std::vector<std::size_t> counts(k);
        for (std::size_t c = 0; c < k; ++c) {
            counts[c] = 2 + rng.index(150);
            for (std::size_t i = 0; i < counts[c]; ++i) {
                WindowedSample s;
                s.label = static_cast<int>(c);
                samples.push_back(s);
            }
        }
        rng.shuffle(std::span(samples));
        auto split = stratified_split(samples, 0.8, static_cast<std::uint64_t>(trial));
        std::vector<std::size_t> train(k, 0);
        for (auto i : split.train) ++train[static_cast<std::size_t>(samples[i].label)];
        for (std::size_t c = 0; c < k; ++c) {
            const double ideal = 0.8 * static_cast<double>(counts[c]);
            worst_split = std::max(worst_split,
                                   static_cast<std::size_t>(std::ceil(std::abs(static_cast<double>(train[c]) - ideal) - 1e-9)));
        }
    }

    SynthSpec spec;
    spec.seed = 404;
    auto synth = synthesize_dataset(spec);
    for (auto& s : synth.samples)
        for (auto& v : s.x) v = v * 3.0f + 10.0f;
    DatasetFile ds = prepare_dataset(std::move(synth.samples), synth.labels, spec.window_len, "synthetic", 4, 0.8,
                                     SplitMode::kStratified);
    double worst_mean = 0, worst_var = 0;
    const auto split = ds.split();
    for (std::size_t a = 0; a < kAxes; ++a) {
        double sum = 0, n = 0;
        for (auto i : split.train)
            for (std::size_t t = 0; t < ds.window_len; ++t) sum += ds.samples[i].x[t * kAxes + a], n += 1;
        const double mean = sum / n;
        double var = 0;
        for (auto i : split.train)
            for (std::size_t t = 0; t < ds.window_len; ++t) {
                const double d = ds.samples[i].x[t * kAxes + a] - mean;
                var += d * d;
            }
        var /= n;
        worst_mean = std::max(worst_mean, std::abs(mean));
        worst_var = std::max(worst_var, std::abs(var - 1.0));
    }
    const bool ok = mismatched_streams == 0 && worst_split <= 1 && worst_mean <= kMeanTolerance &&
                    worst_var <= kVarianceTolerance;
    return {ok ? Outcome::kPass : Outcome::kFail,
            std::to_string(mismatched_streams) + "/200 streams differ from brute force (" +
                std::to_string(total_windows) + " windows); worst split deviation " + std::to_string(worst_split) +
                " sample(s); train pool |mean| " + fmt(worst_mean, 3) + ", |var - 1| " + fmt(worst_var, 3)};
}

// 5 -------------------------------------------------------------------------
ModelConfig reduced_config() {
    ModelConfig c;
    c.window_len = 64;
    c.model_dim = 32;
    c.num_heads = 2;
    c.num_classes = 3;
    return c;
}

DatasetFile default_synthetic(std::uint64_t seed) {
    SynthSpec spec;  // 3 classes x 200 windows, T = 64
    spec.seed = seed;
    auto synth = synthesize_dataset(spec);
    return prepare_dataset(std::move(synth.samples), synth.labels, spec.window_len, "synthetic", seed, 0.8,
                           SplitMode::kStratified);
}

Outcome learnability() {
    const double start = cpu_seconds();
    std::string detail;
    bool ok = true;
    for (std::uint64_t seed : {1, 2, 3}) {
        const DatasetFile ds = default_synthetic(seed);
        const ModelConfig c = reduced_config();
        auto params = ModelParams<float>::init(c, seed);
        TrainConfig cfg;
        cfg.epochs = kLearnEpochs;
        cfg.seed = seed;
        double best = 0.0;
        std::size_t reached = 0;
        FitOptions opt;
        opt.on_epoch = [&](const EpochRecord& r) {
            best = std::max(best, r.val_accuracy);
            if (r.val_accuracy >= kLearnAccuracy) reached = r.epoch;
            return reached == 0;
        };
        fit(params, c, ds.samples, ds.split(), cfg, opt);
        ok = ok && reached != 0;
        detail += "seed " + std::to_string(seed) + ": " +
                  (reached ? "val acc " + fmt(best) + " at epoch " + std::to_string(reached)
                           : "best val acc " + fmt(best) + " in " + std::to_string(kLearnEpochs) + " epochs") +
                  "; ";
    }
    const double cpu = cpu_seconds() - start;
    ok = ok && cpu < kLearnCpuSeconds;
    return {ok ? Outcome::kPass : Outcome::kFail,
            detail + fmt(cpu, 3) + " s CPU total; need >= " + fmt(kLearnAccuracy) + " within " +
                std::to_string(kLearnEpochs) + " epochs, < " + fmt(kLearnCpuSeconds) + " s"};
}

// 6 -------------------------------------------------------------------------
Outcome overfit_one_batch() {
    const ModelConfig c = tiny_config();
    SynthSpec spec;
    spec.per_class = 6;
    spec.window_len = c.window_len;
    spec.seed = 606;
    auto data = normalized_synth(spec);
    std::vector<std::size_t> batch;
    for (std::size_t i = 0; i < 16; ++i) batch.push_back(i);
    std::vector<int> labels;
    auto x = make_batch<double>(data, batch, c.window_len, &labels);
    auto params = ModelParams<double>::init(c, 6);
    auto state = AdamState<double>::for_params(params);
    TrainConfig cfg;
    double loss = 0.0;
    int steps = 0;
    for (; steps < kOverfitSteps; ++steps) {
        params.zero_grad();
        Tape<double> tape;
        auto l = model_loss(tape, x, labels, params, c);
        loss = l.item();
        if (loss < kOverfitLoss) break;
        tape.backward(l);
        adam_step(params, state, cfg);
    }
    if (steps == kOverfitSteps) {
        Tape<double> tape(false);
        loss = model_loss(tape, x, labels, params, c).item();
    }
    return {loss < kOverfitLoss ? Outcome::kPass : Outcome::kFail,
            "batch of 16, lr " + fmt(cfg.learning_rate) + ": loss " + fmt(loss, 4) + " after " + std::to_string(steps) +
                " steps; need < " + fmt(kOverfitLoss) + " within " + std::to_string(kOverfitSteps)};
}

// 7 -------------------------------------------------------------------------
Outcome loss_sanity() {
    // Epoch-0 loss: reference dimensions, K = 6, untrained model on the
    // training pool. A single draw of the initialization scatters by a few
    // tenths, so the band is applied to the mean over ten draws.
    SynthSpec spec;
    spec.num_classes = 6;
    spec.per_class = 30;
    spec.window_len = 200;
    spec.seed = 707;
    auto synth = synthesize_dataset(spec);
    DatasetFile ds = prepare_dataset(std::move(synth.samples), synth.labels, spec.window_len, "synthetic", 7, 0.8,
                                     SplitMode::kStratified);
    const ModelConfig ref;
    const auto split = ds.split();
    constexpr int kDraws = 10;
    double initial = 0.0, lowest = 1e300, highest = -1e300;
    int outside = 0;
    for (int seed = 0; seed < kDraws; ++seed) {
        auto params = ModelParams<float>::init(ref, static_cast<std::uint64_t>(seed));
        const double loss = evaluate(params, ref, ds.samples, split.train).loss;
        initial += loss / kDraws;
        lowest = std::min(lowest, loss);
        highest = std::max(highest, loss);
        outside += loss < kInitialLossLo || loss > kInitialLossHi;
    }

    // Trace shape on the synthetic run.
    const DatasetFile syn = default_synthetic(0);
    const ModelConfig c = reduced_config();
    auto p = ModelParams<float>::init(c, 0);
    TrainConfig cfg;
    cfg.epochs = 15;
    auto fitted = fit(p, c, syn.samples, syn.split(), cfg);
    double worst_rise = -1e300;
    for (std::size_t e = 5; e < fitted.records.size(); ++e) {
        worst_rise = std::max(worst_rise, fitted.records[e].train_loss - fitted.records[e - 1].train_loss);
    }
    const bool ok = initial >= kInitialLossLo && initial <= kInitialLossHi && worst_rise <= kTraceSlack;
    return {ok ? Outcome::kPass : Outcome::kFail,
            "epoch-0 train loss, mean of " + std::to_string(kDraws) + " init draws, " + fmt(initial, 5) +
                " (single draws " + fmt(lowest, 4) + ".." + fmt(highest, 4) + ", " + std::to_string(outside) +
                " outside; ln 6 = " + fmt(std::log(6.0), 5) + ", band [" +
                fmt(kInitialLossLo) + ", " + fmt(kInitialLossHi) + "]); largest epoch-over-epoch rise after epoch 5 " +
                fmt(worst_rise, 3) + " over 15 epochs (slack " + fmt(kTraceSlack) + ")"};
}

// 8 -------------------------------------------------------------------------
Outcome metrics_oracle() {
    Rng rng(808);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int k = 1 + static_cast<int>(rng.index(10));
        const std::size_t n = 1 + rng.index(10000);
        const double skill = rng.uniform();
        std::vector<int> truth(n), pred(n);
        ConfusionMatrix cm(static_cast<std::size_t>(k));
        for (std::size_t i = 0; i < n; ++i) {
            truth[i] = static_cast<int>(rng.index(static_cast<std::uint64_t>(k)));
            pred[i] = rng.uniform() < skill ? truth[i] : static_cast<int>(rng.index(static_cast<std::uint64_t>(k)));
            cm.update(truth[i], pred[i]);
        }
        const MetricSummary got = summarize(cm);
        const oracle::Metrics want = oracle::metrics_from_lists(truth, pred, k);
        worst = std::max({worst, std::abs(got.accuracy - want.accuracy),
                          std::abs(got.macro_precision - want.macro_precision),
                          std::abs(got.macro_recall - want.macro_recall), std::abs(got.macro_f1 - want.macro_f1)});
        for (int c = 0; c < k; ++c) {
            worst = std::max({worst, std::abs(got.per_class[c].precision - want.precision[c]),
                              std::abs(got.per_class[c].recall - want.recall[c]),
                              std::abs(got.per_class[c].f1 - want.f1[c])});
        }
    }
    ConfusionMatrix degenerate(2);
    for (int i = 0; i < 50; ++i) {
        degenerate.update(0, 0);
        degenerate.update(1, 0);
    }
    const MetricSummary d = summarize(degenerate);
    const bool hand = d.accuracy == 0.5 && std::abs(d.macro_f1 - 1.0 / 3.0) <= kMetricsTolerance;
    return {worst <= kMetricsTolerance && hand ? Outcome::kPass : Outcome::kFail,
            "max deviation from brute force " + fmt(worst, 3) + " over 1000 instances; degenerate predictor accuracy " +
                fmt(d.accuracy) + ", macro F1 " + fmt(d.macro_f1, 6)};
}

// 9 -------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "setr_acceptance_determinism";
    fs::remove_all(root);
    std::vector<std::string> overrides{"model_dim=16", "num_heads=2", "se_reduction=4", "pool_hidden=8",
                                       "synth_per_class=40", "epochs=4", "batch_size=16", "seed=9", "workers=1"};
    auto run = [&](const std::string& name) {
        auto o = overrides;
        o.push_back("output_dir=" + (root / name).string());
        RunConfig cfg = load_config(std::nullopt, o);
        std::ostringstream log, err;
        const int a = run_command("synth", cfg, log, err);
        const int b = run_command("train", cfg, log, err);
        return a == 0 && b == 0;
    };
    if (!run("a") || !run("b")) return {Outcome::kFail, "pipeline run failed"};
    std::string detail;
    bool ok = true;
    for (const char* f : {"epoch_trace.jsonl", "checkpoint_final.bin", "checkpoint_best.bin"}) {
        const std::string a = slurp(root / "a" / f), b = slurp(root / "b" / f);
        const bool same = !a.empty() && a == b;
        ok = ok && same;
        detail += std::string(f) + (same ? " identical (" + std::to_string(a.size()) + " B); " : " DIFFERS; ");
    }
    fs::remove_all(root);
    return {ok ? Outcome::kPass : Outcome::kFail, detail + "workers=1"};
}

// 10 ------------------------------------------------------------------------
Outcome headline_numbers() {
    const char* raw = std::getenv("SETR_WISDM_RAW");
    if (raw == nullptr || !fs::exists(raw)) {
        return {Outcome::kSkip,
                "not binding; set SETR_WISDM_RAW to a raw accelerometer file to run the full pipeline at the "
                "reference settings"};
    }
    const fs::path out = fs::temp_directory_path() / "setr_acceptance_wisdm";
    RunConfig cfg = load_config(std::nullopt, std::vector<std::string>{"raw_path=" + std::string(raw),
                                                                       "output_dir=" + out.string()});
    std::ostringstream log, err;
    for (const char* command : {"preprocess", "train", "evaluate"}) {
        if (run_command(command, cfg, std::cout, err) != 0) {
            return {Outcome::kFail, std::string(command) + " failed: " + err.str()};
        }
    }
    const bool emitted = fs::exists(out / "epoch_trace.jsonl") && fs::exists(out / "confusion.csv");
    return {emitted ? Outcome::kPass : Outcome::kFail,
            "reported, not asserted: see " + (out / "metrics.json").string() + " (" + slurp(out / "metrics.json").substr(0, 200) + ")"};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "gradient fidelity", gradient_fidelity},
        {2, "time-permutation invariance", permutation_invariance},
        {3, "normalization contracts", normalization_contracts},
        {4, "preprocessing oracles", preprocessing_oracles},
        {5, "learnability", learnability},
        {6, "overfit one batch", overfit_one_batch},
        {7, "loss sanity", loss_sanity},
        {8, "metrics oracle", metrics_oracle},
        {9, "determinism", determinism},
        {10, "headline numbers (not binding)", headline_numbers},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto wall = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {Outcome::kFail, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall).count();
        const char* tag = o.status == Outcome::kPass ? "PASS" : o.status == Outcome::kFail ? "FAIL" : "SKIP";
        failures += o.status == Outcome::kFail;
        std::printf("[%s] %2d %s: %s [%.1f s]\n", tag, c.id, c.name, o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
