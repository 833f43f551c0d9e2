#pragma once

#include <vector>

#include "gmint/autodiff/tape.h"

// Differentiable primitives. Each records its value and reverse rule on the
// tape of its inputs. Shape errors throw DimensionError.
namespace gmint::ad {

// [..., K] x [K, N] -> [..., N]; leading axes of `a` are flattened.
Var matmul(Var a, Var b);
// Elementwise when shapes match, otherwise `b` is broadcast over the leading
// axes of `a` (b's shape must be a suffix of a's).
Var add(Var a, Var b);
Var mul(Var a, Var b);  // elementwise, equal shapes
Var scale(Var a, double factor);

Var relu(Var x);
// Output clamped to [DBL_MIN, 1 - 2^-53] so it stays strictly inside (0, 1).
Var sigmoid(Var x);
// Over the last axis.
Var softmax(Var x);

// table [V, E], ids [B, L] -> [B, L, E].
Var embedding_lookup(Var table, const TokenBatch& ids);
// x [B, L, E], mask [B, L] of 0/1 -> [B, E]. Rows with no valid position
// pool to zero.
Var mean_pool(Var x, const Tensor& mask);
// Normalises the last axis, then applies gamma [E] and beta [E].
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
// Multi-head scaled dot-product attention. q, k, v are [B, L, E] with E
// divisible by num_heads. key_mask [B, L] (0/1) excludes padded keys; a query
// whose keys are all masked attends to nothing and outputs zeros.
Var scaled_dot_attention(Var q, Var k, Var v, std::size_t num_heads,
                         const Tensor* key_mask = nullptr);

// Per-element -(y log p + (1 - y) log(1 - p)); probs flattened to [N].
Var binary_cross_entropy(Var probs, const std::vector<double>& targets);
// Per-row -log p[label]; probs [B, C] (or [C]) -> [B].
Var categorical_cross_entropy(Var probs, const std::vector<int>& labels);

Var sum(Var x);   // -> [1]
Var mean(Var x);  // -> [1]

}  // namespace gmint::ad
