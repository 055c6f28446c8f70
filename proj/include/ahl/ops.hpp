#pragma once

#include <span>
#include <vector>

#include "ahl/tensor.hpp"

namespace ahl {

// Additive value of a masked attention unit. Large and finite so the mask
// term stays differentiable.
inline constexpr double kMaskedLogit = -1e9;
inline constexpr double kLayerNormEps = 1e-5;

// Every op computes its result eagerly and, when any operand requires grad,
// records its backward rule on the tape.

// [.., m, k] x [.., k, n] -> [.., m, n]; leading batch dims broadcast.
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// Swaps the last two axes.
Tensor transpose(Tape& tape, const Tensor& a);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
// x[.., d] + bias[d]
Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias);
Tensor scale(Tape& tape, const Tensor& x, double factor);
Tensor relu(Tape& tape, const Tensor& x);
// tanh approximation.
Tensor gelu(Tape& tape, const Tensor& x);
Tensor sum(Tape& tape, const Tensor& x);

// Softmax over the last axis of (logits + additive_mask). The gradient with
// respect to the mask equals the gradient with respect to the summed
// pre-softmax logits.
Tensor masked_softmax_rows(Tape& tape, const Tensor& logits, const Tensor& additive_mask);
Tensor softmax_rows(Tape& tape, const Tensor& logits);

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias);

// Mean negative log-likelihood of labels under softmax(logits), logits [batch, c].
Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> labels);

// Rows of table[V, d] selected by ids -> [ids.size(), d].
Tensor embedding(Tape& tape, const Tensor& table, std::span<const int> ids);
// Rows [0, count) of x[R, d].
Tensor leading_rows(Tape& tape, const Tensor& x, std::size_t count);
// Columns [start, start+width) of x[n, d].
Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t start, std::size_t width);
// Concatenates [n, d_i] blocks along columns.
Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);

}  // namespace ahl
