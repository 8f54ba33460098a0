#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "claimrl/neural/policy_model.hpp"

namespace claimrl::nn {

struct SamplerConfig {
  double temperature = 1.0;  // <= 0 selects greedy argmax decoding
  int top_k = 0;             // 0 disables the filter
  int max_new_tokens = 64;
  TokenId stop_token = -1;
};

/// Ancestral sampling of a continuation. The result holds only the new
/// tokens and ends with stop_token when it was drawn. Generation also ends at
/// max_new_tokens or when prompt + continuation fills the context.
template <typename Scalar>
std::vector<TokenId> sample(const PolicyModel<Scalar>& model, std::span<const TokenId> prompt,
                            const SamplerConfig& config, std::uint64_t seed);

/// Numerically stable log-softmax gathered at targets, one row per target.
/// Throws std::out_of_range for a target outside the vocabulary.
template <typename Scalar>
std::vector<double> log_probs(const Mat<Scalar>& logits, std::span<const TokenId> targets);

/// exp(mean next-token negative log-likelihood) over every position of every
/// sequence. Sequences longer than the context are truncated.
template <typename Scalar>
double perplexity(const PolicyModel<Scalar>& model, std::span<const std::vector<TokenId>> sequences);

/// Sum of next-token negative log-likelihoods and the number of predictions.
template <typename Scalar>
std::pair<double, std::size_t> sequence_nll(const PolicyModel<Scalar>& model, std::span<const TokenId> tokens);

}  // namespace claimrl::nn
