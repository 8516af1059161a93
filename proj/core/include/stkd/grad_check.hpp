#pragma once

#include <functional>
#include <span>

#include "stkd/tensor.hpp"

namespace stkd {

/// A deterministic scalar function of the tensors handed to grad_check.
using ScalarFn = std::function<Tensor(Tape&)>;

/// Compares reverse-mode gradients of `f` against central differences.
///
/// Returns the maximum over every coordinate of every parameter of
/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|). Parameter values
/// are restored on return; their gradient buffers are overwritten with the
/// analytic gradient. eps must lie in [1e-7, 1e-4].
double grad_check(const ScalarFn& f, std::span<Tensor> params, double eps = 1e-5);

}  // namespace stkd
