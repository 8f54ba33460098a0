#include "claimrl/rewards.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

namespace claimrl::rewards {

std::size_t count_occurrences(std::string_view text, std::string_view term) {
  if (term.empty()) return 0;
  std::size_t n = 0;
  std::size_t pos = text.find(term);
  while (pos != std::string_view::npos) {
    ++n;
    pos = text.find(term, pos + term.size());
  }
  return n;
}

double length_reward(std::string_view text, std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("max_len must be positive");
  const std::string_view s = text.substr(0, max_len);
  if (s.find(tok::kEndTag) == std::string_view::npos) return 0.0;
  return 1.0 + static_cast<double>(s.size()) / static_cast<double>(max_len);
}

double limiting_term_reward(std::string_view text, std::span<const std::string> terms) {
  std::size_t total = 0;
  for (const auto& t : terms) total += count_occurrences(text, t);
  return static_cast<double>(total);
}

double joint_reward(std::string_view text, std::size_t max_len, std::span<const std::string> terms) {
  const double base = length_reward(text, max_len);
  if (base == 0.0) return 0.0;
  return base + limiting_term_reward(text.substr(0, max_len), terms);
}

namespace {

void validate_terms(const std::vector<std::string>& terms) {
  if (terms.empty()) throw std::invalid_argument("limiting-term list is empty");
  for (const auto& t : terms) {
    if (t.size() < 2 || t.back() != ' ' || t[t.size() - 2] == ' ')
      throw std::invalid_argument("limiting term '" + t + "' must end with a single space");
  }
}

}  // namespace

void RewardSpec::validate() const {
  std::visit(
      [](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, LengthReward>) {
          if (k.max_len == 0) throw std::invalid_argument("max_len must be positive");
        } else if constexpr (std::is_same_v<K, LimitingTermsReward>) {
          validate_terms(k.terms);
        } else if constexpr (std::is_same_v<K, JointReward>) {
          if (k.max_len == 0) throw std::invalid_argument("max_len must be positive");
          validate_terms(k.terms);
        } else {
          if (!k.net || !k.vocab) throw std::invalid_argument("learned reward needs a model and a vocabulary");
        }
      },
      kind);
}

std::string RewardSpec::name() const {
  switch (kind.index()) {
    case 0:
      return "length";
    case 1:
      return "terms";
    case 2:
      return "joint";
    default:
      return "model";
  }
}

std::string claim_body(std::string_view text) {
  std::string s(text);
  if (s.starts_with(tok::kStartTag)) s.erase(0, tok::kStartTag.size());
  const auto end = s.find(tok::kEndTag);
  if (end != std::string::npos) s.resize(end);
  return s;
}

std::vector<tok::TokenId> classifier_tokens(const tok::Vocabulary& vocab, std::string_view claim_text, int token_cap) {
  auto ids = vocab.encode(claim_text);
  if (token_cap > 0 && ids.size() > static_cast<std::size_t>(token_cap)) ids.resize(static_cast<std::size_t>(token_cap));
  return ids;
}

double learned_probability(const nn::RewardNet<float>& net, const tok::Vocabulary& vocab, std::string_view text) {
  const auto ids = classifier_tokens(vocab, claim_body(text), net.config().token_cap);
  return static_cast<double>(net.probability(ids));
}

double score(const RewardSpec& spec, std::string_view text) {
  return std::visit(
      [&](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, LengthReward>) {
          return length_reward(text, k.max_len);
        } else if constexpr (std::is_same_v<K, LimitingTermsReward>) {
          return limiting_term_reward(text, k.terms);
        } else if constexpr (std::is_same_v<K, JointReward>) {
          return joint_reward(text, k.max_len, k.terms);
        } else {
          return learned_probability(*k.net, *k.vocab, text);
        }
      },
      spec.kind);
}

double score(const RewardSpec& spec, std::string_view prompt, std::string_view continuation) {
  if (!spec.include_prompt) return score(spec, continuation);
  std::string full(prompt);
  full += continuation;
  return score(spec, full);
}

// ---------------------------------------------------------------------------

double accuracy(const nn::RewardNet<float>& net, const tok::Vocabulary& vocab,
                std::span<const corpus::ClaimRecord> records) {
  if (records.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& r : records) {
    const auto ids = classifier_tokens(vocab, r.claim_text, net.config().token_cap);
    if (nn::classify_label(net.probability(ids)) == r.grant_flag) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

RewardModelResult train_reward_model(std::span<const corpus::ClaimRecord> train,
                                     std::span<const corpus::ClaimRecord> val, const tok::Vocabulary& vocab,
                                     const RewardModelConfig& config) {
  const auto granted = std::count_if(train.begin(), train.end(), [](const auto& r) { return r.grant_flag == 1; });
  if (granted == 0 || granted == static_cast<std::ptrdiff_t>(train.size()))
    throw std::invalid_argument("reward model training set must contain both granted and pre-grant claims");
  if (config.epochs < 0 || config.batch_size < 1) throw std::invalid_argument("bad reward model schedule");

  nn::RewardNetConfig net_config = config.net;
  net_config.vocab_size = static_cast<int>(vocab.size());
  RewardModelResult result{nn::RewardNet<float>(net_config), 0.0, {}};
  auto& net = result.net;

  std::vector<std::vector<tok::TokenId>> inputs;
  inputs.reserve(train.size());
  for (const auto& r : train) inputs.push_back(classifier_tokens(vocab, r.claim_text, net_config.token_cap));

  nn::Adam<float> opt(nn::tensors_of(net.parameters()), nn::AdamConfig{config.lr, 0.9, 0.999, 1e-8, 1.0});
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const float inv_b = 1.0f / static_cast<float>(end - start);
      opt.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const int label = train[order[i]].grant_flag;
        auto loss = nn::bce_with_logits(net.logit(inputs[order[i]]), std::span<const int>(&label, 1));
        epoch_loss += static_cast<double>(loss.item());
        nn::backward(nn::scale(loss, inv_b));
      }
      opt.step();
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  result.accuracy = accuracy(net, vocab, val);
  return result;
}

}  // namespace claimrl::rewards
