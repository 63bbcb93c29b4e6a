#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tarot/tensor.hpp"

// Differentiable building blocks. Matrices are rank-2 and row-major; a single
// embedding is a 1 x d row.
namespace tarot::ops {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// a (n x d) + bias (1 x d), broadcast over rows.
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor scale(const Tensor& a, double factor);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
Tensor row_slice(const Tensor& a, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
// Row lookup into an embedding table; ids index rows of `table`.
Tensor embedding_lookup(const Tensor& table, std::span<const std::int64_t> ids);

// Mean along `axis` of a rank-2 tensor; the reduced axis is kept with length 1.
Tensor mean_over_axis(const Tensor& a, std::size_t axis);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

Tensor softmax_over_axis(const Tensor& a, std::size_t axis);
// Row-wise layer normalization with affine gain and bias (each 1 x d).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-12);
// Exact GELU, x * Phi(x).
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// Entries with mask[i] != 0 are replaced by `value` and receive no gradient.
Tensor masked_fill(const Tensor& a, std::span<const std::uint8_t> mask, double value);

// Mean softmax cross-entropy over rows of `logits` (n x c) against class ids.
// Uses log-sum-exp, so arbitrarily large logits stay finite.
Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets);
// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets of the same
// shape, evaluated through log-sigmoid.
Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets);

struct AttentionResult {
  Tensor output;   // m x d_v
  Tensor weights;  // m x n
};

// Single-head softmax(Q K^T / sqrt(d)) V. key_mask[j] != 0 hides key j from every
// query (weight exactly 0). Throws if every key is hidden.
AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                     std::span<const std::uint8_t> key_mask = {});

}  // namespace tarot::ops
