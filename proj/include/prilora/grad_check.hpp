#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "prilora/tensor.hpp"

namespace prilora {

/// A differentiable scalar function of a set of tensors. When `grads` is
/// non-null it must be filled with one gradient per parameter, shaped like
/// the parameter.
using ScalarFunction = std::function<double(std::span<const Tensor> params, std::vector<Tensor>* grads)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_param = 0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t checked = 0;
};

/// Compares analytic gradients against central differences coordinate by
/// coordinate. The error of one coordinate is
/// |analytic - numeric| / max(|numeric|, 1e-8); the report holds the worst.
///
/// Throws ParameterError unless 0 < eps <= 1e-3 and NumericError when f or
/// its gradient is not finite.
GradCheckReport grad_check(const ScalarFunction& f, std::span<const Tensor> params, double eps);

}  // namespace prilora
