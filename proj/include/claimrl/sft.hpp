#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "claimrl/corpus.hpp"
#include "claimrl/neural/policy_model.hpp"
#include "claimrl/tokenizer.hpp"

namespace claimrl::sft {

/// "<|start_of_claim|>" + claim_text + "<|end_of_claim|>"
std::string format_training_text(const corpus::ClaimRecord& record);

/// Encoded training text, truncated to context_length tokens.
std::vector<tok::TokenId> training_tokens(const tok::Vocabulary& vocab, const corpus::ClaimRecord& record,
                                          int context_length);

double perplexity(const nn::PolicyModel<float>& model, std::span<const corpus::ClaimRecord> dataset,
                  const tok::Vocabulary& vocab);

struct SftConfig {
  int epochs = 1;
  int batch_size = 8;
  double lr = 3e-3;
  int warmup_steps = 20;  // linear warmup, then constant
  int eval_every = 50;
  double grad_clip = 1.0;
  std::int64_t max_steps = -1;  // < 0: no cap; 0: evaluate only
  std::uint64_t seed = 0;

  void validate() const;
};

struct SftLogRow {
  std::int64_t step = 0;
  std::optional<double> loss;  // absent on the initial evaluation row
  std::optional<double> val_perplexity;
};

struct SftResult {
  nn::PolicyModel<float> model;
  std::vector<SftLogRow> log;
  double initial_val_perplexity = 0.0;
  double final_val_perplexity = 0.0;
  std::int64_t steps = 0;
};

/// Next-token cross-entropy over every position (tags included), one claim
/// per sample, shuffled with the config seed each epoch. Throws
/// std::invalid_argument on an empty training set.
SftResult train_sft(nn::PolicyModel<float> model, std::span<const corpus::ClaimRecord> train,
                    std::span<const corpus::ClaimRecord> val, const tok::Vocabulary& vocab, const SftConfig& config);

/// CSV with columns step,loss,val_perplexity; missing values are empty.
void write_log_csv(const std::filesystem::path& path, std::span<const SftLogRow> log);

}  // namespace claimrl::sft
