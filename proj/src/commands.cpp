#include "setr/commands.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "setr/checkpoint.hpp"
#include "setr/dataset_io.hpp"
#include "setr/grad_check.hpp"
#include "setr/metrics.hpp"
#include "setr/training.hpp"

namespace setr {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string file_digest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string() + " for digest");
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            hash ^= static_cast<unsigned char>(buf[i]);
            hash *= 0x100000001b3ULL;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016" PRIx64, hash);
    return hex;
}

namespace {

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << content;
}

void write_manifest(const RunConfig& config, std::string_view command, const std::vector<fs::path>& inputs,
                    const std::vector<fs::path>& outputs) {
    ordered_json manifest;
    manifest["command"] = command;
    ordered_json resolved = ordered_json::object();
    for (const auto& [key, value] : config.entries()) resolved[key] = value;
    manifest["config"] = resolved;
    ordered_json digests = ordered_json::object();
    for (const auto& p : inputs) digests[p.string()] = "fnv1a64:" + file_digest(p);
    manifest["inputs"] = digests;
    ordered_json outs = ordered_json::array();
    for (const auto& p : outputs) outs.push_back(p.string());
    manifest["outputs"] = outs;
    write_text(fs::path(config.output_dir) / ("manifest_" + std::string(command) + ".json"), manifest.dump(2) + "\n");
}

fs::path prepare_output_dir(const RunConfig& config) {
    const fs::path dir(config.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

int preprocess(const RunConfig& config, std::ostream& log) {
    if (config.raw_path.empty()) throw ConfigError("preprocess: raw_path is not set");
    const fs::path dir = prepare_output_dir(config);
    ParseResult parsed = parse_raw_file(config.raw_path, config.schema);
    const std::size_t kept = parsed.records.size();
    const std::size_t filtered = filter_activities(parsed.records, config.activities);
    if (parsed.records.empty()) throw DataError("preprocess: no records left after the activity filter");
    LabelMap labels = encode_labels(parsed.records);
    if (labels.size() < 2) throw DataError("preprocess: need at least 2 activity classes, found " +
                                           std::to_string(labels.size()));
    WindowOptions wo;
    wo.window_len = config.model.window_len;
    wo.stride = config.window_stride;
    wo.gap_tolerance = config.gap_tolerance;
    std::vector<WindowedSample> windows = make_windows(parsed.records, labels, wo);
    if (windows.empty()) throw DataError("preprocess: no label-consistent windows of length " +
                                         std::to_string(wo.window_len));
    std::vector<std::size_t> per_class(labels.size(), 0);
    for (const auto& w : windows) ++per_class[static_cast<std::size_t>(w.label)];

    DatasetFile ds = prepare_dataset(std::move(windows), labels, wo.window_len, config.schema.name, config.train.seed,
                                     config.train_fraction, config.split_mode);
    const fs::path out = config.resolved_dataset_path();
    save_dataset(out, ds);
    const SplitIndices split = ds.split();

    ordered_json report;
    report["lines"] = parsed.lines;
    report["records_kept"] = kept;
    report["lines_rejected"] = parsed.rejected;
    report["records_filtered_by_activity"] = filtered;
    report["labels"] = labels.labels();
    report["windows"] = ds.samples.size();
    ordered_json counts = ordered_json::object();
    for (std::size_t k = 0; k < labels.size(); ++k) counts[labels.label(static_cast<int>(k))] = per_class[k];
    report["windows_per_class"] = counts;
    report["train_windows"] = split.train.size();
    report["validation_windows"] = split.validation.size();
    report["norm_mu"] = ds.stats.mu;
    report["norm_sigma"] = ds.stats.sigma;
    const fs::path report_path = dir / "ingest_report.json";
    write_text(report_path, report.dump(2) + "\n");
    write_manifest(config, "preprocess", {config.raw_path}, {out, report_path});

    log << "preprocess: " << kept << " of " << parsed.lines << " lines kept (" << parsed.rejected << " rejected, "
        << filtered << " filtered by activity), " << ds.samples.size() << " windows -> " << out.string() << "\n";
    return kExitOk;
}

int synth(const RunConfig& config, std::ostream& log) {
    prepare_output_dir(config);
    SynthSpec spec;
    spec.num_classes = config.synth_classes;
    spec.per_class = config.synth_per_class;
    spec.window_len = config.synth_window_len;
    spec.seed = config.train.seed;
    spec.noise_scale = config.synth_noise;
    SynthDataset data = synthesize_dataset(spec);
    DatasetFile ds = prepare_dataset(std::move(data.samples), data.labels, spec.window_len, "synthetic",
                                     config.train.seed, config.train_fraction, SplitMode::kStratified);
    const fs::path out = config.resolved_dataset_path();
    save_dataset(out, ds);
    write_manifest(config, "synth", {}, {out});
    log << "synth: " << ds.samples.size() << " windows of " << spec.window_len << " steps, " << spec.num_classes
        << " classes -> " << out.string() << "\n";
    return kExitOk;
}

ModelConfig model_for_dataset(const RunConfig& config, const DatasetFile& ds, std::ostream& log) {
    ModelConfig mc = config.model;
    if (mc.window_len != ds.window_len || mc.num_classes != ds.labels.size()) {
        log << "note: using window_len=" << ds.window_len << " and num_classes=" << ds.labels.size()
            << " from the dataset\n";
    }
    mc.window_len = ds.window_len;
    mc.num_classes = ds.labels.size();
    mc.validate();
    return mc;
}

template <typename T>
int train(const RunConfig& config, std::ostream& log) {
    const fs::path dir = prepare_output_dir(config);
    const fs::path data_path = config.resolved_dataset_path();
    const DatasetFile ds = load_dataset(data_path);
    const ModelConfig mc = model_for_dataset(config, ds, log);
    const SplitIndices split = ds.split();

    ModelParams<T> params = ModelParams<T>::init(mc, config.train.seed);
    const fs::path trace_path = dir / "epoch_trace.jsonl";
    std::ofstream trace(trace_path, std::ios::binary | std::ios::trunc);
    if (!trace) throw DataError("cannot write " + trace_path.string());

    FitOptions options;
    options.on_epoch = [&](const EpochRecord& r) {
        trace << epoch_record_json(r) << "\n";
        trace.flush();
        log << "epoch " << r.epoch << "/" << config.train.epochs << "  train_loss " << std::fixed
            << std::setprecision(4) << r.train_loss << "  val_loss " << r.val_loss << "  val_acc " << r.val_accuracy
            << "  val_macro_f1 " << r.val_macro_f1 << "\n"
            << std::defaultfloat;
        return true;
    };
    FitResult<T> result = fit(params, mc, ds.samples, split, config.train, options);
    trace.close();

    const fs::path final_ck = dir / "checkpoint_final.bin";
    const fs::path best_ck = dir / "checkpoint_best.bin";
    const fs::path confusion = dir / "confusion.csv";
    save_checkpoint(final_ck, mc, params);
    save_checkpoint(best_ck, mc, result.best_params);
    write_confusion_csv(confusion, result.final_confusion, ds.labels.labels());
    write_manifest(config, "train", {data_path}, {trace_path, final_ck, best_ck, confusion});
    log << "train: best validation accuracy at epoch " << result.best_epoch << "\n";
    return kExitOk;
}

template <typename T>
int evaluate_command(const RunConfig& config, std::ostream& log) {
    const fs::path dir = prepare_output_dir(config);
    const fs::path data_path = config.resolved_dataset_path();
    const fs::path ck_path = config.resolved_checkpoint_path();
    if (!fs::exists(ck_path)) throw DataError("checkpoint not found: " + ck_path.string());
    const DatasetFile ds = load_dataset(data_path);
    Checkpoint<T> ck = load_checkpoint<T>(ck_path);
    if (ck.config.window_len != ds.window_len || ck.config.num_classes != ds.labels.size()) {
        throw DataError("checkpoint " + ck_path.string() + " expects window " + std::to_string(ck.config.window_len) +
                        " and " + std::to_string(ck.config.num_classes) + " classes; dataset has " +
                        std::to_string(ds.window_len) + " and " + std::to_string(ds.labels.size()));
    }
    std::vector<std::size_t> indices;
    if (config.eval_split == "all") {
        indices.resize(ds.samples.size());
        for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    } else {
        const SplitIndices split = ds.split();
        indices = config.eval_split == "train" ? split.train : split.validation;
    }
    const EvalResult r = evaluate(ck.params, ck.config, ds.samples, indices, config.train.batch_size,
                                  config.train.workers);
    const MetricSummary m = summarize(r.confusion);

    ordered_json metrics;
    metrics["split"] = config.eval_split;
    metrics["samples"] = indices.size();
    metrics["loss"] = r.loss;
    metrics["accuracy"] = m.accuracy;
    metrics["macro_precision"] = m.macro_precision;
    metrics["macro_recall"] = m.macro_recall;
    metrics["macro_f1"] = m.macro_f1;
    ordered_json per_class = ordered_json::array();
    for (std::size_t k = 0; k < m.per_class.size(); ++k) {
        per_class.push_back({{"label", ds.labels.label(static_cast<int>(k))},
                             {"precision", m.per_class[k].precision},
                             {"recall", m.per_class[k].recall},
                             {"f1", m.per_class[k].f1}});
    }
    metrics["per_class"] = per_class;
    const fs::path metrics_path = dir / "metrics.json";
    const fs::path confusion = dir / "eval_confusion.csv";
    write_text(metrics_path, metrics.dump(2) + "\n");
    write_confusion_csv(confusion, r.confusion, ds.labels.labels());
    write_manifest(config, "evaluate", {data_path, ck_path}, {metrics_path, confusion});
    log << "evaluate (" << config.eval_split << ", " << indices.size() << " windows): accuracy " << m.accuracy
        << ", macro F1 " << m.macro_f1 << ", loss " << r.loss << "\n";
    return kExitOk;
}

int gradcheck(const RunConfig& config, std::ostream& log) {
    const fs::path dir = prepare_output_dir(config);
    ModelConfig mc = config.model;
    mc.validate();
    SynthSpec spec;
    spec.num_classes = mc.num_classes;
    spec.per_class = (config.gradcheck_batch + mc.num_classes - 1) / mc.num_classes;
    spec.window_len = mc.window_len;
    spec.seed = config.train.seed;
    SynthDataset data = synthesize_dataset(spec);
    std::vector<std::size_t> pick;
    for (std::size_t i = 0; pick.size() < config.gradcheck_batch; ++i) {
        pick.push_back((i % mc.num_classes) * spec.per_class + i / mc.num_classes);
    }
    const NormStats stats = compute_norm_stats(data.samples, pick);
    for (auto& s : data.samples) apply_normalization(s, stats);
    std::vector<int> labels;
    const Tensor<double> x = make_batch<double>(data.samples, pick, mc.window_len, &labels);

    ModelParams<double> params = ModelParams<double>::init(mc, config.train.seed);
    const auto named = params.named();
    std::vector<Tensor<double>> leaves;
    for (const auto& n : named) leaves.push_back(n.tensor);
    GradCheckOptions options;
    options.eps = config.gradcheck_eps;
    options.max_coordinates = config.gradcheck_coords;
    options.seed = config.train.seed;
    const GradCheckReport report = grad_check(
        [&](Tape<double>& tape) { return model_loss(tape, x, labels, params, mc); }, leaves, options);

    std::vector<std::size_t> checked(named.size(), 0);
    std::vector<std::size_t> kinks(named.size(), 0);
    for (const auto& c : report.coordinates) ++(c.kink ? kinks : checked)[c.leaf];
    std::ostringstream table;
    table << "parameter\tchecked\tkinks\tmax_rel_error\n";
    for (std::size_t i = 0; i < named.size(); ++i) {
        table << named[i].name << '\t' << checked[i] << '\t' << kinks[i] << '\t' << std::scientific
              << std::setprecision(3) << report.per_leaf_max[i] << std::defaultfloat << '\n';
    }
    const fs::path table_path = dir / "gradcheck.tsv";
    write_text(table_path, table.str());
    write_manifest(config, "gradcheck", {}, {table_path});
    log << table.str();
    log << "gradcheck: " << report.checked << " coordinates checked, " << report.kinks_excluded
        << " relu kinks excluded, max relative error " << std::scientific << report.max_rel_error << " (threshold "
        << config.gradcheck_threshold << ")\n"
        << std::defaultfloat;
    if (report.max_rel_error > config.gradcheck_threshold) {
        throw NumericError("gradient check failed: max relative error above threshold");
    }
    return kExitOk;
}

}  // namespace

int run_command(std::string_view command, const RunConfig& config, std::ostream& log, std::ostream& err) {
    try {
        const bool f64 = config.precision == Precision::kF64;
        if (command == "preprocess") return preprocess(config, log);
        if (command == "synth") return synth(config, log);
        if (command == "train") return f64 ? train<double>(config, log) : train<float>(config, log);
        if (command == "evaluate") {
            return f64 ? evaluate_command<double>(config, log) : evaluate_command<float>(config, log);
        }
        if (command == "gradcheck") return gradcheck(config, log);
        err << "error: unknown command '" << command << "'\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const DimensionError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const ContractError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

}  // namespace setr
