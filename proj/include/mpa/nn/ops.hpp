#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mpa/nn/autograd.hpp"
#include "mpa/nn/rng.hpp"

// Differentiable ops on 2-D (row-major) tensors unless noted. Every op
// throws ShapeError on incompatible shapes.
namespace mpa::nn {

Var matmul(Var a, Var b);     // [m x k] * [k x n]
Var matmul_nt(Var a, Var b);  // [m x k] * [n x k]^T

// Elementwise; `b` may also be a rank-1 [n] row broadcast over [m x n].
Var add(Var a, Var b);
Var mul(Var a, Var b);  // same shape only
Var scale(Var a, float s);

// Any rank; max-subtracted.
Var softmax(Var x, std::size_t axis);

// Normalizes over the last axis; gain and bias are rank-1 [n].
Var layer_norm(Var x, Var gain, Var bias, float eps = 1e-5f);

// Exact (erf) GELU.
Var gelu(Var x);

// x [t x c_in], kernel [k x c_in x c_out], bias [c_out]. Zero "same" padding
// of (k - 1) / 2 on the left; output has ceil(t / stride) rows.
Var conv1d(Var x, Var kernel, Var bias, std::size_t stride);
std::size_t conv1d_output_length(std::size_t t, std::size_t stride);

// table [v x d] -> [ids.size() x d]. Throws InvalidInput for ids >= v.
Var embedding(Var table, std::span<const int> ids);

Var slice_cols(Var x, std::size_t start, std::size_t len);
Var concat_cols(const std::vector<Var>& parts);
Var transpose(Var x);

// Inverted dropout with keep mask drawn from `key`; identity for p == 0.
Var dropout(Var x, float p, const DropoutKey& key);

Var sum(Var x);  // -> [1]

enum class Reduction { Mean, Sum };

// -(1/|S|) sum_{i in S} log softmax(logits_i)[target_i] over rows selected by
// `position_mask` (or the plain sum with Reduction::Sum). Throws
// InvalidInput when the mask selects nothing.
Var cross_entropy(Var logits, std::span<const int> targets,
                  const std::vector<bool>& position_mask, Reduction reduction = Reduction::Mean);

// Squared error between pred [l x 1] and targets over masked rows.
Var masked_mse(Var pred, std::span<const float> targets, const std::vector<bool>& position_mask,
               Reduction reduction = Reduction::Mean);

// Non-differentiable helpers shared with the scoring path.
double log_sum_exp(std::span<const float> logits);
double log_softmax_at(std::span<const float> logits, int target);

}  // namespace mpa::nn
