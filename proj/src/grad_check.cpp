#include "setr/grad_check.hpp"

#include <algorithm>
#include <span>
#include <cmath>

#include "setr/random.hpp"

namespace setr {

namespace {

struct Probe {
    double value;
    std::vector<bool> relu_pattern;
};

Probe evaluate(const LossFn& loss) {
    ReluProbe probe;
    Tape<double> tape(false);
    Tensor<double> out = loss(tape);
    if (out.numel() != 1) throw ContractError("grad_check: function is not scalar-valued");
    return {out.item(), probe.pattern()};
}

}  // namespace

GradCheckReport grad_check(const LossFn& loss, std::vector<Tensor<double>> leaves, const GradCheckOptions& options) {
    if (!(options.eps > 0.0)) throw ContractError("grad_check: eps must be positive");

    for (auto& leaf : leaves) {
        leaf.set_requires_grad(true);
        leaf.zero_grad();
    }
    {
        Tape<double> tape;
        Tensor<double> out = loss(tape);
        tape.backward(out);
    }

    const Probe base = evaluate(loss);
    const Probe again = evaluate(loss);
    if (base.value != again.value || base.relu_pattern != again.relu_pattern) {
        throw NumericError("grad_check: function is not deterministic, the check would be unreliable");
    }

    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t l = 0; l < leaves.size(); ++l) {
        for (std::size_t i = 0; i < leaves[l].numel(); ++i) coords.emplace_back(l, i);
    }
    const bool sampled = options.max_coordinates != 0 && options.max_coordinates < coords.size();
    if (sampled) {
        Rng rng(options.seed);
        rng.shuffle(std::span(coords));
    }

    GradCheckReport report;
    report.per_leaf_max.assign(leaves.size(), 0.0);
    for (auto [l, i] : coords) {
        if (sampled && report.checked == options.max_coordinates) break;
        auto values = leaves[l].mutable_data();
        const double original = values[i];
        values[i] = original + options.eps;
        const Probe plus = evaluate(loss);
        values[i] = original - options.eps;
        const Probe minus = evaluate(loss);
        values[i] = original;

        CoordinateResult r;
        r.leaf = l;
        r.index = i;
        r.analytic = leaves[l].has_grad() ? leaves[l].grad()[i] : 0.0;
        r.numeric = (plus.value - minus.value) / (2.0 * options.eps);
        r.rel_error = std::abs(r.analytic - r.numeric) /
                      std::max({std::abs(r.analytic), std::abs(r.numeric), 1e-8});
        r.kink = plus.relu_pattern != minus.relu_pattern;
        if (r.kink) {
            ++report.kinks_excluded;
        } else {
            ++report.checked;
            report.max_rel_error = std::max(report.max_rel_error, r.rel_error);
            report.per_leaf_max[l] = std::max(report.per_leaf_max[l], r.rel_error);
        }
        report.coordinates.push_back(r);
    }
    return report;
}

GradCheckReport grad_check(const std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)>& f,
                           Tensor<double> x, const GradCheckOptions& options) {
    return grad_check([&](Tape<double>& tape) { return f(tape, x); }, {x}, options);
}

}  // namespace setr
