// SPDX-License-Identifier: Apache-2.0
//
// Differentiable ops. Every op evaluates eagerly, records itself on the
// graph of its inputs and carries an analytic backward rule. Reductions sum
// left to right so forward results are reproducible bit for bit.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vcwe/autodiff.hpp"

namespace vcwe::ad {

// Element-wise; operands must have identical shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var neg(Var a);

Var sigmoid(Var x);
Var tanh(Var x);
/// log(sigmoid(x)) without overflow for large |x|.
Var log_sigmoid(Var x);
/// Softmax of a 1-D tensor, computed after subtracting the maximum.
Var softmax(Var x);

/// Sum of all elements, rank-0 result.
Var sum(Var x);

Var reshape(Var x, Shape shape);
Var transpose(Var m);

/// [n,k] x [k,m] -> [n,m]
Var matmul(Var a, Var b);
/// x [n,d_in] W [d_in,d_out] + b [d_out] -> [n,d_out]
Var linear(Var x, Var weight, Var bias);
/// [m,n] x [n] -> [m]
Var matvec(Var m, Var x);
/// [n] . [n] -> rank 0
Var dot(Var a, Var b);

/// 1-D concatenation.
Var concat(Var a, Var b);
/// Elements [begin, end) of a 1-D tensor.
Var slice(Var x, std::size_t begin, std::size_t end);
/// Row i of a 2-D tensor as a 1-D tensor.
Var row(Var m, std::size_t i);
/// Stacks equal-length 1-D tensors into [rows.size(), d].
Var stack(std::span<const Var> rows);
/// [m,d] gathered at `index` -> [index.size(), d]; repeats allowed.
Var gather_rows(Var m, std::span<const std::size_t> index);
/// Per-row dot product of two [n,d] tensors -> [n].
Var rowwise_dot(Var a, Var b);
/// Column means of [n,d] -> [d].
Var mean_rows(Var m);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Cross-correlation (no kernel flip). x is [C_in,H,W] or [N,C_in,H,W],
/// kernels [C_out,C_in,kh,kw], bias [C_out]. Output keeps the input's rank.
Var conv2d(Var x, Var kernels, Var bias, Conv2dOptions options = {});

struct Pooled {
  Var output;
  /// Flat input index of the maximum for every output element.
  std::vector<std::size_t> argmax;
};

/// Max pooling over [C,H,W] or [N,C,H,W]; output size floor((H - window) / stride) + 1.
Pooled maxpool2d(Var x, std::size_t window, std::size_t stride);

enum class NormMode { train, eval };

struct RunningStats {
  explicit RunningStats(std::size_t channels = 0) : mean(Shape{channels}, 0.0), var(Shape{channels}, 1.0) {}
  Tensor mean;
  Tensor var;
};

/// Per-channel batch normalization of [N,C,H,W]. Train mode normalizes by
/// batch statistics and, when `stats` is given, folds them into the running
/// estimates (unbiased variance). Eval mode requires `stats`.
Var batchnorm2d(Var x, Var gamma, Var beta, RunningStats* stats, NormMode mode, double momentum = 0.1,
                double eps = 1e-5);

/// Gate blocks are laid out [input, forget, candidate, output] along the 4h axis.
struct LstmWeights {
  Var input;      // [d_in, 4h]
  Var recurrent;  // [h, 4h]
  Var bias;       // [4h]
};

struct LstmState {
  Var h;
  Var c;
};

LstmState lstm_cell(Var x, const LstmState& prev, const LstmWeights& weights);

}  // namespace vcwe::ad
