// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "eegfmri/tensor.hpp"

namespace eegfmri {

// Differentiable elementwise and reduction ops. Binary ops require equal
// shapes; nothing broadcasts silently.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

Tensor square(const Tensor& a);
/// |x|, with subgradient 0 at the origin.
Tensor abs(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
/// max(0, x) applied to a scalar-valued tensor elementwise; alias of relu
/// kept for readability in loss code.
inline Tensor clamp_min_zero(const Tensor& a) { return relu(a); }

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
/// Reorders axes; out.shape[i] = a.shape[perm[i]].
Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm);

/// [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// mean(|a - b|) over all elements.
Tensor mean_abs_diff(const Tensor& a, const Tensor& b);
/// sum(|a|); the L1 penalty building block.
Tensor sum_abs(const Tensor& a);

/// Sum of scalar tensors; empty input yields a constant zero.
Tensor add_all(const std::vector<Tensor>& terms);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace eegfmri
