#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "vtunet/tensor.hpp"

namespace vtunet {

using ScalarFn = std::function<double(const Tensor&)>;

/// Central-difference gradient of f at x: (f(x+he) - f(x-he)) / 2h per
/// coordinate. Recording is paused while f runs.
Tensor finite_diff(const ScalarFn& f, const Tensor& x, double step = 1e-5);

/// Central difference for a single coordinate of a leaf tensor that f reads
/// implicitly (e.g. a model parameter). The coordinate is restored.
double finite_diff_at(const std::function<double()>& f, Tensor& leaf, std::size_t index, double step = 1e-5);

/// |a - n| / max(|a|, |n|, floor). The floor keeps coordinates whose true
/// gradient is ~0 from dividing rounding noise by rounding noise.
double relative_error(double analytic, double numeric, double floor = 1e-6);

}  // namespace vtunet
