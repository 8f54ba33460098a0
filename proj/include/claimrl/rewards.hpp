#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "claimrl/corpus.hpp"
#include "claimrl/neural/reward_net.hpp"
#include "claimrl/tokenizer.hpp"

namespace claimrl::rewards {

inline const std::vector<std::string> kDefaultTerms = {"wherein ", "whereby ", "where ", "when "};

/// Non-overlapping, case-sensitive occurrences of term, scanned left to right.
std::size_t count_occurrences(std::string_view text, std::string_view term);

/// Zero unless the first max_len characters contain the end tag; otherwise
/// 1 + len(truncated) / max_len.
double length_reward(std::string_view text, std::size_t max_len);

/// Sum over terms of their independent occurrence counts.
double limiting_term_reward(std::string_view text, std::span<const std::string> terms = kDefaultTerms);

/// Length reward plus the term count of the truncated text; zero when the end
/// tag is missing from the truncated text.
double joint_reward(std::string_view text, std::size_t max_len, std::span<const std::string> terms = kDefaultTerms);

struct LengthReward {
  std::size_t max_len = 512;
};

struct LimitingTermsReward {
  std::vector<std::string> terms = kDefaultTerms;
};

struct JointReward {
  std::size_t max_len = 1024;
  std::vector<std::string> terms = kDefaultTerms;
};

struct LearnedReward {
  std::shared_ptr<const nn::RewardNet<float>> net;
  std::shared_ptr<const tok::Vocabulary> vocab;
};

struct RewardSpec {
  std::variant<LengthReward, LimitingTermsReward, JointReward, LearnedReward> kind;
  /// Score prompt + continuation instead of the continuation alone.
  bool include_prompt = false;

  static RewardSpec length(std::size_t max_len) { return {LengthReward{max_len}, false}; }
  static RewardSpec limiting_terms(std::vector<std::string> terms = kDefaultTerms) {
    return {LimitingTermsReward{std::move(terms)}, false};
  }
  static RewardSpec joint(std::size_t max_len, std::vector<std::string> terms = kDefaultTerms) {
    return {JointReward{max_len, std::move(terms)}, false};
  }
  /// The classifier was trained on whole claims, so by default it sees the
  /// prompt as well.
  static RewardSpec learned(std::shared_ptr<const nn::RewardNet<float>> net,
                            std::shared_ptr<const tok::Vocabulary> vocab) {
    return {LearnedReward{std::move(net), std::move(vocab)}, true};
  }

  /// Throws std::invalid_argument when max_len is zero, terms are empty or
  /// lack the single trailing space, or the learned model is missing.
  void validate() const;
  std::string name() const;
};

/// Strips the tags from a formatted claim: drops the start tag and cuts at the
/// first end tag.
std::string claim_body(std::string_view text);

/// Classifier probability that text (tags stripped) is a granted claim.
double learned_probability(const nn::RewardNet<float>& net, const tok::Vocabulary& vocab, std::string_view text);

double score(const RewardSpec& spec, std::string_view text);
/// Applies the include_prompt switch before scoring.
double score(const RewardSpec& spec, std::string_view prompt, std::string_view continuation);

// ---------------------------------------------------------------------------
// Learned reward model

struct RewardModelConfig {
  nn::RewardNetConfig net;
  int epochs = 3;
  int batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct RewardModelResult {
  nn::RewardNet<float> net;
  double accuracy = 0.0;  // on the held-out set
  std::vector<double> epoch_losses;
};

/// Tokenized claim text truncated to the classifier's cap.
std::vector<tok::TokenId> classifier_tokens(const tok::Vocabulary& vocab, std::string_view claim_text, int token_cap);

double accuracy(const nn::RewardNet<float>& net, const tok::Vocabulary& vocab,
                std::span<const corpus::ClaimRecord> records);

/// Binary cross-entropy training on claim_text -> grant_flag. Throws
/// std::invalid_argument when the training set lacks either label.
RewardModelResult train_reward_model(std::span<const corpus::ClaimRecord> train,
                                     std::span<const corpus::ClaimRecord> val, const tok::Vocabulary& vocab,
                                     const RewardModelConfig& config);

}  // namespace claimrl::rewards
