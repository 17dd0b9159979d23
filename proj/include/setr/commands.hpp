#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>

#include "setr/config.hpp"

namespace setr {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitData = 2,
    kExitNumeric = 3,
};

/// Runs one subcommand (preprocess, synth, train, evaluate, gradcheck) and
/// maps failures onto exit codes. Progress goes to `log`, errors to `err`.
///
/// Outputs, all under output_dir unless a path key overrides them:
///   preprocess  dataset.bin, ingest_report.json
///   synth       dataset.bin
///   train       checkpoint_final.bin, checkpoint_best.bin, epoch_trace.jsonl,
///               confusion.csv
///   evaluate    metrics.json, eval_confusion.csv
///   gradcheck   gradcheck.tsv
/// Every command also writes manifest_<command>.json with the resolved
/// configuration and digests of its input files.
int run_command(std::string_view command, const RunConfig& config, std::ostream& log, std::ostream& err);

/// 64-bit FNV-1a digest of a file's bytes, as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

}  // namespace setr
