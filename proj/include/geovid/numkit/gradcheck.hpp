// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "geovid/numkit/tensor.hpp"

namespace geovid::nk {

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
/// for a scalar-valued f at x. Throws NumericError if f is not finite at x or
/// at a perturbed point.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step = 1e-5);

} // namespace geovid::nk
