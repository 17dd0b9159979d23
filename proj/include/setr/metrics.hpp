#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "setr/errors.hpp"

namespace setr {

/// K x K counts; rows are true classes, columns predicted classes.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t num_classes);

    std::size_t num_classes() const { return k_; }
    std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * k_ + predicted]; }
    std::uint64_t total() const { return total_; }

    void update(int truth, int predicted);
    /// Cellwise addition; both matrices must have the same K.
    void merge(const ConfusionMatrix& other);

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t k_;
    std::vector<std::uint64_t> counts_;
    std::uint64_t total_ = 0;
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MetricSummary {
    double accuracy = 0.0;
    std::vector<ClassMetrics> per_class;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    // Mean of per-class F1, not the F1 of the macro precision/recall.
    double macro_f1 = 0.0;
};

/// Every 0/0 ratio is taken as 0. Throws ContractError on an empty matrix.
MetricSummary summarize(const ConfusionMatrix& cm);

/// CSV with a header row and header column of class names.
std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names);
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm,
                         const std::vector<std::string>& class_names);

}  // namespace setr
