// Differentiable operations over Var handles.
//
// Matrices are row-major with one entity (or query) per row, so a linear map
// is written x·W rather than W·x. Every op records an exact VJP on the tape.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "mtdm/tape.hpp"

namespace mtdm {

/// Negative slope of the leaky rectifier used as the activation f.
inline constexpr Real kLeakySlope = Real(0.01);

enum class Activation { kLeakyRelu, kIdentity };

// Linear algebra.
Var matmul(Var a, Var b);     // [m,k] x [k,n] -> [m,n]
Var matmul_nt(Var a, Var b);  // [m,k] x [n,k]^T -> [m,n]

// Elementwise (identical shapes).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// alpha * a + beta.
Var affine(Var a, Real alpha, Real beta);
inline Var scale(Var a, Real alpha) { return affine(a, alpha, Real(0)); }
inline Var one_minus(Var a) { return affine(a, Real(-1), Real(1)); }
/// a + bias broadcast over rows; bias has a.cols() elements.
Var add_row_bias(Var a, Var bias);

Var sigmoid(Var a);
Var tanh(Var a);
Var leaky_relu(Var a, Real slope = kLeakySlope);
Var activate(Var a, Activation f);

/// Elementwise threshold at 0.5 -> {0,1}. No gradient flows through.
Var hard_round(Var a);

/// Inverted dropout; identity when p == 0.
Var dropout(Var a, Real p, std::mt19937_64& rng);

// Shape manipulation.
/// Concatenates 2-D operands along columns; all must share the row count.
Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
/// Embedding lookup: rows `index` of table -> [index.size(), table.cols()].
Var gather_rows(Var table, std::span<const std::int64_t> index);

// Reductions.
Var sum(Var a);
Var mean(Var a);

/// Row-wise cosine similarity of two [m,n] operands -> [m].
/// A row with zero norm on either side yields 0 and no gradient.
Var cosine_rows(Var a, Var b);

/// Sum over rows of -log softmax(logits)[row, target[row]], optionally
/// scaled per row. Produces a scalar.
Var softmax_cross_entropy(Var logits, std::span<const std::int64_t> target,
                          std::span<const Real> row_weight = {});

/// log(clamp(softmax(logits)[row, target[row]], eps, 1 - eps)) per row -> [rows].
/// Gradient is zero for rows pinned at a clamp bound.
Var clamped_log_prob(Var logits, std::span<const std::int64_t> target, Real eps);

/// Same-padded 1-D convolution across the feature axis of a stack of rows.
///   input  [batch, in_rows * width]   (each row-major block is in_rows x width)
///   kernel [channels, in_rows * kwidth]
///   bias   [channels]
///   output [batch, channels * width]
Var conv1d_rows(Var input, Var kernel, Var bias, std::size_t in_rows, std::size_t width);

}  // namespace mtdm
