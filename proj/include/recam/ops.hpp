#pragma once

#include <cstdint>
#include <vector>

#include "recam/rng.hpp"
#include "recam/tensor.hpp"

namespace recam {

// Differentiable tensor operations. Each op computes its forward result
// identically whether or not a tape is active, and registers a backward
// closure on the active tape when any grad-enabled input participates.

// [m x k] * [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise sum of same-shaped tensors.
Tensor add(const Tensor& a, const Tensor& b);

// x[... x d] + bias[d] broadcast over rows.
Tensor add_row_broadcast(const Tensor& x, const Tensor& bias);

// Elementwise (Hadamard) product of same-shaped tensors.
Tensor mul(const Tensor& a, const Tensor& b);

// c * x for a plain constant.
Tensor scale(const Tensor& x, double c);

// Row-wise softmax over the trailing dimension, max-subtracted.
Tensor softmax_rows(const Tensor& x);

// Per-row normalization over the trailing dimension: zero mean, unit
// variance up to eps smoothing, then the affine gain/bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps);

// 0.5 * x * (1 + erf(x / sqrt 2)), elementwise.
Tensor gelu(const Tensor& x);

// Rows of table selected by ids; backward scatter-adds into the table.
// Throws VocabError when an id is outside [0, table rows).
Tensor embedding_gather(const Tensor& table, const std::vector<int64_t>& ids);

// x[n x d] * v[d] -> [n]
Tensor matvec(const Tensor& x, const Tensor& v);

// Elementwise arithmetic mean of a nonempty list of same-shaped tensors.
Tensor mean_stack(const std::vector<Tensor>& xs);

// Sum of all entries -> scalar [1].
Tensor sum_all(const Tensor& x);

// -log softmax(logits)[gold] for 1-D logits, computed via log-sum-exp.
Tensor cross_entropy_with_logits(const Tensor& logits, int64_t gold);

// Inverted dropout: keeps entries with probability 1-rate, scaling survivors
// by 1/(1-rate). rate == 0 returns x unchanged.
Tensor dropout(const Tensor& x, double rate, Rng& rng);

}  // namespace recam
