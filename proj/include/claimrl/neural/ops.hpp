#pragma once

#include <cstdint>
#include <span>

#include "claimrl/neural/tensor.hpp"

// Differentiable free functions over Tensor<Scalar>. Every op records its own
// backward rule; shapes are checked eagerly and mismatches throw
// std::invalid_argument.
namespace claimrl::nn {

template <typename Scalar> Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
/// a * b^T
template <typename Scalar> Tensor<Scalar> matmul_nt(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar> Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
/// Elementwise product.
template <typename Scalar> Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar s);
/// Adds a 1 x cols row to every row of a.
template <typename Scalar> Tensor<Scalar> add_row(const Tensor<Scalar>& a, const Tensor<Scalar>& row);

template <typename Scalar> Tensor<Scalar> exp(const Tensor<Scalar>& a);
template <typename Scalar> Tensor<Scalar> square(const Tensor<Scalar>& a);
template <typename Scalar> Tensor<Scalar> minimum(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> clamp(const Tensor<Scalar>& a, Scalar lo, Scalar hi);
template <typename Scalar> Tensor<Scalar> gelu(const Tensor<Scalar>& a);

template <typename Scalar> Tensor<Scalar> sum(const Tensor<Scalar>& a);
template <typename Scalar> Tensor<Scalar> mean(const Tensor<Scalar>& a);
/// Column means, 1 x cols.
template <typename Scalar> Tensor<Scalar> mean_rows(const Tensor<Scalar>& a);
template <typename Scalar> Tensor<Scalar> slice_rows(const Tensor<Scalar>& a, Eigen::Index start, Eigen::Index count);

/// Row-wise normalization with learned 1 x cols gain and bias.
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gain, const Tensor<Scalar>& bias,
                          Scalar eps = Scalar(1e-5));

/// Gathers rows of table.
template <typename Scalar> Tensor<Scalar> embedding(const Tensor<Scalar>& table, std::span<const std::int32_t> ids);

/// Multi-head scaled dot-product attention over packed [Q | K | V] columns
/// (T x 3d in, T x d out).
template <typename Scalar> Tensor<Scalar> attention(const Tensor<Scalar>& qkv, int heads, bool causal);

/// log softmax(logits)[i, targets[i]] as a T x 1 column.
template <typename Scalar>
Tensor<Scalar> log_softmax_gather(const Tensor<Scalar>& logits, std::span<const std::int32_t> targets);

/// Mean binary cross-entropy of n x 1 logits against {0,1} labels.
template <typename Scalar>
Tensor<Scalar> bce_with_logits(const Tensor<Scalar>& logits, std::span<const int> labels);

template <typename Scalar> Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return add(a, b); }
template <typename Scalar> Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return sub(a, b); }

// Plain-matrix helpers shared with the inference paths.
template <typename Scalar> Mat<Scalar> log_softmax_rows(const Mat<Scalar>& logits);

}  // namespace claimrl::nn
