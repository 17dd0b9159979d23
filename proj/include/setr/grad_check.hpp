#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "setr/tensor.hpp"

namespace setr {

struct GradCheckOptions {
    double eps = 1e-5;
    // 0 checks every coordinate. Otherwise coordinates are drawn in seeded
    // random order until this many non-kink ones have been checked.
    std::size_t max_coordinates = 0;
    std::uint64_t seed = 0;
};

struct CoordinateResult {
    std::size_t leaf = 0;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
    bool kink = false;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::vector<double> per_leaf_max;  // parallel to the leaves argument
    std::size_t checked = 0;
    std::size_t kinks_excluded = 0;
    std::vector<CoordinateResult> coordinates;
};

/// Scalar-valued function of the leaves, evaluated on the supplied tape.
using LossFn = std::function<Tensor<double>(Tape<double>&)>;

/// Compares taped gradients of `loss` with respect to `leaves` against
/// central differences. Relative error per coordinate is
/// |a - n| / max(|a|, |n|, 1e-8).
///
/// A coordinate whose +eps and -eps probes see different relu sign patterns
/// straddles a kink; it is reported but excluded from the maximum. Leaves are
/// restored bit-exactly afterwards. Throws NumericError if two evaluations at
/// the same point disagree.
GradCheckReport grad_check(const LossFn& loss, std::vector<Tensor<double>> leaves,
                           const GradCheckOptions& options = {});

/// Single-input convenience overload: f maps x to a scalar.
GradCheckReport grad_check(const std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)>& f,
                           Tensor<double> x, const GradCheckOptions& options = {});

}  // namespace setr
