#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "claimrl/corpus.hpp"
#include "claimrl/neural/generation.hpp"
#include "claimrl/neural/policy_model.hpp"
#include "claimrl/rewards.hpp"
#include "claimrl/tokenizer.hpp"

namespace claimrl::ppo {

using tok::TokenId;

struct PpoConfig {
  std::int64_t total_steps = 200;
  int rollouts_per_step = 8;
  int prompt_token_count = 30;
  int max_new_tokens = 0;  // 0: context_length - prompt length
  double lr = 1e-4;
  double clip_epsilon = 0.2;
  double value_coef = 0.1;
  bool value_trunk_gradient = false;  // let value-loss gradients reach the shared trunk
  double kl_coef = 0.1;
  double gae_gamma = 1.0;
  double gae_lambda = 0.95;
  bool advantage_whitening = true;
  int ppo_epochs = 4;
  double grad_clip = 1.0;
  double temperature = 1.0;
  std::size_t prompt_pool = 0;  // first n records used as prompts; 0: all
  std::uint64_t seed = 0;

  void validate() const;
};

struct Prompt {
  std::vector<TokenId> tokens;  // start tag + claim prefix
  std::size_t record_index = 0;
  bool short_claim = false;  // claim had fewer than prompt_token_count tokens
};

/// Start tag plus the first prompt_token_count tokens of each of the first n
/// records, in dataset order. Throws std::invalid_argument when n exceeds the
/// dataset size or a prompt would not leave room in context_length.
std::vector<Prompt> make_prompts(std::span<const corpus::ClaimRecord> dataset, const tok::Vocabulary& vocab,
                                 int prompt_token_count, std::size_t n, int context_length = 0);

struct Rollout {
  std::vector<TokenId> prompt;
  std::vector<TokenId> response;
  std::vector<double> logp;      // policy at collection time
  std::vector<double> ref_logp;  // frozen reference
  std::vector<double> values;
  double reward = 0.0;  // terminal scalar
  std::vector<double> shaped_rewards;
  std::vector<double> advantages;
  std::vector<double> returns;
  std::size_t prompt_index = 0;
};

/// Terminal reward for a (prompt, response) pair.
using Scorer = std::function<double(std::span<const TokenId> prompt, std::span<const TokenId> response)>;

/// Decodes both token spans and applies rewards::score.
Scorer make_scorer(const rewards::RewardSpec& spec, const tok::Vocabulary& vocab);

/// Fills log-probabilities, values and shaped rewards for a fixed response.
/// Throws std::invalid_argument for an empty response.
Rollout evaluate_rollout(const nn::PolicyModel<float>& policy, const nn::PolicyModel<float>& reference,
                         std::vector<TokenId> prompt, std::vector<TokenId> response, double reward, double kl_coef);

/// Samples one response per prompt with seed derive_seed(run_seed, step, i),
/// scores it and evaluates it. Advantages are left empty.
std::vector<Rollout> collect_rollouts(const nn::PolicyModel<float>& policy, const nn::PolicyModel<float>& reference,
                                      std::span<const std::vector<TokenId>> prompts, const Scorer& scorer,
                                      const nn::SamplerConfig& sampler, double kl_coef, std::uint64_t run_seed,
                                      std::uint64_t step);

/// Generalized advantage estimation over shaped rewards; the value past the
/// final token is zero. Throws std::invalid_argument for an empty response.
void compute_advantages(Rollout& rollout, double gamma, double lambda);

/// Shifts and scales all advantages of the batch to zero mean, unit variance.
void whiten_advantages(std::span<Rollout> batch);

struct UpdateLosses {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double total = 0.0;
};

struct UpdateResult {
  std::vector<UpdateLosses> epochs;  // one entry per pass
  UpdateLosses mean() const;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& what, std::string dump) : std::runtime_error(what), dump_(std::move(dump)) {}
  const std::string& dump() const { return dump_; }

 private:
  std::string dump_;
};

/// Clipped-surrogate update, ppo_epochs passes with one optimizer step each.
/// Losses are token means over the whole batch. Throws NonFiniteLoss before
/// touching the parameters when a loss is not finite.
UpdateResult ppo_update(nn::PolicyModel<float>& policy, nn::Adam<float>& optimizer, std::span<const Rollout> batch,
                        const PpoConfig& config);

struct TrainLogRow {
  std::int64_t step = 0;
  double reward_mean = 0.0;
  double claim_length_mean = 0.0;  // characters of the decoded response
  double limiting_term_count_mean = 0.0;
  double kl_mean = 0.0;  // per token, policy vs reference
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double end_tag_fraction = 0.0;
  double degenerate_fraction = 0.0;  // whitespace-only responses
};

/// One generated text in the sample-record layout.
struct SampleRecord {
  std::int64_t step = 0;
  const corpus::ClaimRecord* record = nullptr;
  std::string prompt;
  std::string generated;
  double reward = 0.0;
};
using SampleSink = std::function<void(const SampleRecord&)>;

std::string sample_json_line(const SampleRecord& sample);

struct PpoResult {
  nn::PolicyModel<float> policy;
  std::vector<TrainLogRow> log;
  std::size_t short_prompts = 0;
};

/// collect -> advantages -> update, total_steps times. The reference is a copy
/// of sft taken before training and is never updated.
PpoResult train_ppo(const nn::PolicyModel<float>& sft, std::span<const corpus::ClaimRecord> dataset,
                    const tok::Vocabulary& vocab, const rewards::RewardSpec& reward, const PpoConfig& config,
                    const SampleSink& sink = {});

void write_log_csv(const std::filesystem::path& path, std::span<const TrainLogRow> log);
std::vector<TrainLogRow> read_log_csv(const std::filesystem::path& path);

}  // namespace claimrl::ppo
