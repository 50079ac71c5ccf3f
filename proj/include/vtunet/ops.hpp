#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "vtunet/tensor.hpp"

namespace vtunet {

/// Batched matrix product. a: [..., m, k], b: [..., k, n] with identical
/// batch extents, or b: [k, n] shared across the batch.
Tensor matmul(const Tensor& a, const Tensor& b);

/// a · bᵀ over the last two axes. a: [..., m, k], b: [..., n, k].
Tensor matmul_bt(const Tensor& a, const Tensor& b);

/// Per-row affine map. x: [..., in], w: [in, out], bias: [out] or undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = {});

/// Elementwise ops with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

/// Softmax over the last axis, stabilised by max-subtraction.
Tensor softmax_last(const Tensor& x);

/// Normalises each slice along the last axis, then applies gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Exact (erf) GELU.
Tensor gelu(const Tensor& x);

using GatherIndex = std::shared_ptr<const std::vector<std::size_t>>;

/// out.flat[i] = x.flat[index[i]]. Covers every reshape, permutation and
/// window rearrangement in the network; backward scatter-adds.
Tensor gather(const Tensor& x, Shape out_shape, GatherIndex index);

Tensor reshape(const Tensor& x, Shape shape);

/// Sum / mean of all elements, as a [1] tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace vtunet
