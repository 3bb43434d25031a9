#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "hazefuse/tensor.hpp"

// Differentiable primitives. Every op checks its output for NaN/Inf and
// records a backward closure when a tape is active and an input requires
// gradients.

namespace hazefuse {

// x: B x InC x H x W, w: OutC x InC x k x k with k in {1, 3}, bias: OutC or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias = {});

// Elementwise with broadcasting over equal-rank shapes (extent 1 stretches).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// scale * x + shift
Tensor affine(const Tensor& x, double scale, double shift = 0.0);

Tensor sigmoid(const Tensor& x);
// Exact erf form: 0.5 x (1 + erf(x / sqrt 2)).
Tensor gelu(const Tensor& x);
Tensor softmax(const Tensor& x, std::size_t axis);

// B x C x H x W -> B x C x 1 x 1 channel means.
Tensor gap(const Tensor& x);
Tensor avg_pool2(const Tensor& x);
Tensor upsample2(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x, const std::vector<std::size_t>& perm);

// Batched matmul on rank-3 tensors: [N, m, k] x [N, k, n] -> [N, m, n]; the
// trans flags say the operand is stored with its last two axes swapped.
Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor l1_loss(const Tensor& pred, const Tensor& target);
Tensor mse_loss(const Tensor& pred, const Tensor& target);

// Multi-head self-attention over the H*W spatial tokens. Uses 1x1 projections
// <prefix>.{q,k,v}.{w,b}; each head attends with softmax(q k^T / sqrt(C/heads)).
Tensor mhsa(const Tensor& x, std::size_t heads, const ParamSet& params, std::string_view prefix);

}  // namespace hazefuse
