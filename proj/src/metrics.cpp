#include "setr/metrics.hpp"

#include <fstream>
#include <sstream>

namespace setr {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : k_(num_classes), counts_(num_classes * num_classes, 0) {
    if (num_classes == 0) throw ContractError("confusion matrix needs at least one class");
}

void ConfusionMatrix::update(int truth, int predicted) {
    const auto in_range = [&](int label) { return label >= 0 && static_cast<std::size_t>(label) < k_; };
    if (!in_range(truth) || !in_range(predicted)) {
        throw ContractError("confusion update (" + std::to_string(truth) + ", " + std::to_string(predicted) +
                            ") outside [0, " + std::to_string(k_) + ")");
    }
    ++counts_[static_cast<std::size_t>(truth) * k_ + static_cast<std::size_t>(predicted)];
    ++total_;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.k_ != k_) throw ContractError("cannot merge confusion matrices of different size");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    total_ += other.total_;
}

namespace {
double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }
}  // namespace

MetricSummary summarize(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw ContractError("summarize: confusion matrix is empty");
    const std::size_t k = cm.num_classes();
    MetricSummary s;
    s.per_class.resize(k);
    double trace = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        double row = 0.0;
        double col = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            row += static_cast<double>(cm.at(c, j));
            col += static_cast<double>(cm.at(j, c));
        }
        const double tp = static_cast<double>(cm.at(c, c));
        trace += tp;
        ClassMetrics& m = s.per_class[c];
        m.precision = ratio(tp, col);
        m.recall = ratio(tp, row);
        m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
        s.macro_precision += m.precision;
        s.macro_recall += m.recall;
        s.macro_f1 += m.f1;
    }
    s.accuracy = trace / static_cast<double>(cm.total());
    s.macro_precision /= static_cast<double>(k);
    s.macro_recall /= static_cast<double>(k);
    s.macro_f1 /= static_cast<double>(k);
    return s;
}

std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& names) {
    if (names.size() != cm.num_classes()) throw ContractError("confusion CSV: class name count mismatch");
    auto quote = [](const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        return q + "\"";
    };
    std::ostringstream out;
    out << "true\\predicted";
    for (const auto& n : names) out << ',' << quote(n);
    out << '\n';
    for (std::size_t i = 0; i < cm.num_classes(); ++i) {
        out << quote(names[i]);
        for (std::size_t j = 0; j < cm.num_classes(); ++j) out << ',' << cm.at(i, j);
        out << '\n';
    }
    return out.str();
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm,
                         const std::vector<std::string>& names) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << confusion_csv(cm, names);
}

}  // namespace setr
