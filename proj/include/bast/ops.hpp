#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "bast/tensor.hpp"

BAST_NAMESPACE_BEGIN

// Differentiable tensor operations. Every op records itself on `g` when the
// graph is recording and at least one input requires a gradient.
//
// Broadcasting is limited to leading batch dimensions: a binary op accepts a
// second operand whose shape equals a suffix of the first operand's shape.

// a[..., m, k] x b[..., k, n]. `b` is either rank 2 (shared across the batch)
// or has exactly the batch extents of `a`. With `transpose_b`, b is read as
// [..., n, k].
Tensor matmul(Graph& g, const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor sub(Graph& g, const Tensor& a, const Tensor& b);
// Elementwise product of equal shapes.
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
Tensor scale(Graph& g, const Tensor& a, Real factor);

// Exact (erf-based) GELU.
Tensor gelu(Graph& g, const Tensor& x);

// Inverted dropout. Identity (same handle) when !training or rate == 0.
Tensor dropout(Graph& g, const Tensor& x, Real rate, bool training, std::mt19937_64& rng);

Tensor softmax(Graph& g, const Tensor& x, int axis);
Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gain, const Tensor& bias, int axis,
                  Real eps = Real(1e-5));

// Sum of all elements, shape [1].
Tensor sum(Graph& g, const Tensor& x);
// Mean over one axis; the axis is removed.
Tensor mean(Graph& g, const Tensor& x, int axis);

Tensor concat(Graph& g, const Tensor& a, const Tensor& b, int axis);
Tensor slice(Graph& g, const Tensor& x, int axis, std::size_t start, std::size_t length);
Tensor reshape(Graph& g, const Tensor& x, Shape shape);
Tensor permute(Graph& g, const Tensor& x, const std::vector<std::size_t>& order);

BAST_NAMESPACE_END
