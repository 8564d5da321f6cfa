// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "geovid/numkit/tensor.hpp"

// Differentiable primitives. Binary elementwise ops broadcast over the 2-D
// view of their operands (each extent equal or 1); rank-1 tensors act as
// single rows.
namespace geovid::nk {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
/// Exact erf-based GELU.
Tensor gelu(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor relu(const Tensor& x);

/// [n,k] x [k,m] -> [n,m].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& index);

/// Sum of all elements, shape [1].
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Per-row sums, shape [n,1].
Tensor sum_rows(const Tensor& x);
/// Per-column sums, shape [1,m].
Tensor sum_cols(const Tensor& x);

Tensor softmax_rows(const Tensor& x);
/// Zero-mean unit-variance rows, no affine part.
Tensor layer_norm_rows(const Tensor& x, double eps = 1e-6);
/// Rescales every row to L2 norm `target_norm`. Rows with norm below
/// `min_norm` raise DegenerateInputError.
Tensor normalize_rows(const Tensor& x, double target_norm = 1.0, double min_norm = 1e-12);

/// Mean over rows of logsumexp(row) - row[label].
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<std::size_t>& labels);

/// Unit quaternion [1,4] (w,x,y,z) to rotation matrix [3,3].
Tensor quat_to_rotmat(const Tensor& q);
/// Squared geodesic angle of a rotation matrix [3,3] (angle between it and I).
Tensor rotation_angle_sq(const Tensor& m);

} // namespace geovid::nk
