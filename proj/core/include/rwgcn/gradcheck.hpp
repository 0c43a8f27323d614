#pragma once

#include <functional>

#include "rwgcn/tensor.hpp"

namespace rwgcn {

using ScalarFunction = std::function<double(const Tensor&)>;

/// Central-difference gradient of a scalar function:
/// (f(x + h e_i) - f(x - h e_i)) / 2h for every element i.
/// Throws NumericError if any evaluation is non-finite.
Tensor finite_diff_grad(const ScalarFunction& f, const Tensor& x, double h = 1e-5);

/// Norm-wise relative error ||a - b|| / max(||a||, ||b||). Returns 0 when both
/// norms are below `floor`.
double relative_error(const Tensor& a, const Tensor& b, double floor = 1e-12);

}  // namespace rwgcn
