#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "stkd/tensor.hpp"

// Differentiable primitives. Every op takes the tape it records onto; on a
// no_grad() tape (or with constant inputs) nothing is recorded. There is no
// implicit broadcasting: shapes of binary operands must match exactly and
// repetition is spelled out with tile().
namespace stkd {

/// [m x k] . [k x n] -> [m x n].
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
/// x . w + tile(bias, rows); x: [m x k], w: [k x n], bias: [n].
Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor relu(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor tanh(Tape& tape, const Tensor& x);
/// Gated activation on [r x 2h]: tanh(left half) ⊙ sigmoid(right half) -> [r x h].
Tensor tanh_sigmoid_gate(Tape& tape, const Tensor& x);
Tensor abs(Tape& tape, const Tensor& x);
Tensor square(Tape& tape, const Tensor& x);
Tensor scale(Tape& tape, const Tensor& x, double factor);

/// Sum of all entries, as a scalar.
Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);
/// [r x c] -> [r].
Tensor row_sum(Tape& tape, const Tensor& x);

/// Temperature softmax over the last axis (rank 1, or each row of rank 2).
/// Throws ParameterError when temperature <= 0.
Tensor softmax(Tape& tape, const Tensor& x, double temperature = 1.0);
/// log(softmax(x / temperature)) via log-sum-exp.
Tensor log_softmax(Tape& tape, const Tensor& x, double temperature = 1.0);

Tensor transpose(Tape& tape, const Tensor& x);
/// Shares storage (and gradient) with x; nothing is recorded.
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);
/// [n] -> [reps x n].
Tensor tile(Tape& tape, const Tensor& x, std::size_t reps);
/// Concatenation along the last axis of rank-2 tensors with equal row counts.
Tensor concat_cols(Tape& tape, std::span<const Tensor> parts);
/// Selects slices along axis 0; repeated indices accumulate in the gradient.
Tensor gather_rows(Tape& tape, const Tensor& x, std::span<const std::size_t> rows);

/// Causal temporal unfolding for 1-D convolution.
///
/// x: [S x n x c] where S = windows * window_len, time-major within each
/// window. Output: [S x n x (kernel * c)] where block k of slice t holds
/// x[t - (kernel - 1 - k)], or zeros before the window start.
Tensor causal_unfold(Tape& tape, const Tensor& x, std::size_t window_len, std::size_t kernel);

/// Causal temporal convolution, equal to
/// linear(reshape(causal_unfold(x), [S*n x kernel*c]), w, bias) reshaped to
/// [S x n x out] but without materializing the unfolded input.
/// w: [kernel*c x out], bias: [out].
Tensor causal_conv(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias,
                   std::size_t window_len);

/// Regroups [windows*T x n x c] into [windows*n x T*c] so each row holds one
/// node's full time sequence of features.
Tensor fold_time(Tape& tape, const Tensor& x, std::size_t window_len);

}  // namespace stkd
