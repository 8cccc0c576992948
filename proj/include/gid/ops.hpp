#pragma once

// Differentiable kernels. Broadcasting is limited to leading axes: a second
// operand whose shape is a suffix of the first is repeated over the leading
// axes. Anything else needs an explicit `expand`.

#include "gid/autodiff.hpp"

#include <vector>

namespace gid::nn {

// --- structural -------------------------------------------------------------

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

/// Axis permutation; out.dim(i) = x.dim(perm[i]).
template <typename T>
Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& perm);

/// Repeats size-1 axes up to `shape` (same rank).
template <typename T>
Var<T> expand(const Var<T>& x, Shape shape);

template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis);

/// Half-open range [begin, end) along `axis`.
template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end);

// --- elementwise ------------------------------------------------------------

/// a + b, with b either the same shape or a suffix of a's shape.
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);

/// a * b, with b either the same shape or a suffix of a's shape.
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& x, T s);

template <typename T>
Var<T> relu(const Var<T>& x);

/// tanh approximation of GELU.
template <typename T>
Var<T> gelu(const Var<T>& x);

template <typename T>
Var<T> sigmoid(const Var<T>& x);

// --- reductions -------------------------------------------------------------

template <typename T>
Var<T> sum(const Var<T>& x);

template <typename T>
Var<T> mean(const Var<T>& x);

/// Mean absolute difference over all elements; the target may be a constant.
template <typename T>
Var<T> mae(const Var<T>& pred, const Var<T>& target);

// --- linear algebra ---------------------------------------------------------

/// a[..., m, k] x b[k, n] (shared right operand) or a[..., m, k] x b[..., k, n]
/// with identical leading axes.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

/// x[..., in] * weight[in, out] + bias[out].
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight);

// --- normalization / attention ---------------------------------------------

/// Max-subtracted softmax along `axis`.
template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis);

/// Normalizes the last axis (population variance) then applies gain and bias.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps = T(1e-5));

/// Scaled dot-product attention on already-projected q, k, v of shape
/// [N, L, d], split into `heads` heads of d / heads channels. With `causal`,
/// position i attends only to positions <= i.
template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::size_t heads,
                 bool causal);

/// Attention probabilities [N, heads, L, L] for inspection (not recorded).
template <typename T>
Tensor<T> attention_probs(const Tensor<T>& q, const Tensor<T>& k, std::size_t heads,
                          bool causal);

/// out = alpha * a + (1 - alpha) * b; alpha's shape is a suffix of a's.
template <typename T>
Var<T> convex_blend(const Var<T>& a, const Var<T>& b, const Var<T>& alpha);

// --- rotation kernels -------------------------------------------------------

/// Rodrigues map: axis-angle [..., 3] -> row-major rotation matrices [..., 9].
template <typename T>
Var<T> rodrigues(const Var<T>& axis_angle);

/// Mean geodesic angle (radians) between predicted rotations [..., 9] and
/// constant targets of the same shape. The cosine is clamped to
/// [-1 + clamp, 1 - clamp] so the gradient stays bounded.
template <typename T>
Var<T> geodesic_loss(const Var<T>& pred, const Tensor<T>& target, T clamp = T(1e-6));

/// Forward kinematics with the root pinned at the origin.
/// local_rot: [N, J, 9] local joint rotations; offsets: J x 3 bone offsets in
/// the parent frame; parents[j] < j, parents[0] = -1. Returns [N, J, 3].
template <typename T>
Var<T> fk_positions(const Var<T>& local_rot, const std::vector<int>& parents,
                    const std::vector<T>& offsets);

/// Mean Euclidean distance between point sets [..., 3] (target constant),
/// smoothed as sqrt(d^2 + eps^2).
template <typename T>
Var<T> mean_distance(const Var<T>& a, const Tensor<T>& target, T eps = T(1e-6));

}  // namespace gid::nn
