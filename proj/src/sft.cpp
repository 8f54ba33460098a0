#include "claimrl/sft.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "claimrl/neural/generation.hpp"
#include "claimrl/util.hpp"

namespace claimrl::sft {

std::string format_training_text(const corpus::ClaimRecord& record) {
  std::string s(tok::kStartTag);
  s += record.claim_text;
  s += tok::kEndTag;
  return s;
}

std::vector<tok::TokenId> training_tokens(const tok::Vocabulary& vocab, const corpus::ClaimRecord& record,
                                          int context_length) {
  auto ids = vocab.encode(format_training_text(record));
  if (ids.size() > static_cast<std::size_t>(context_length)) ids.resize(static_cast<std::size_t>(context_length));
  return ids;
}

double perplexity(const nn::PolicyModel<float>& model, std::span<const corpus::ClaimRecord> dataset,
                  const tok::Vocabulary& vocab) {
  std::vector<std::vector<tok::TokenId>> seqs;
  seqs.reserve(dataset.size());
  for (const auto& r : dataset) seqs.push_back(training_tokens(vocab, r, model.config().context_length));
  return nn::perplexity(model, std::span<const std::vector<tok::TokenId>>(seqs));
}

void SftConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("sft epochs must be at least 1");
  if (batch_size < 1) throw std::invalid_argument("sft batch_size must be at least 1");
  if (!(lr > 0.0)) throw std::invalid_argument("sft learning rate must be positive");
  if (eval_every < 1) throw std::invalid_argument("sft eval_every must be at least 1");
  if (warmup_steps < 0) throw std::invalid_argument("sft warmup_steps must be non-negative");
}

SftResult train_sft(nn::PolicyModel<float> model, std::span<const corpus::ClaimRecord> train,
                    std::span<const corpus::ClaimRecord> val, const tok::Vocabulary& vocab, const SftConfig& config) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("sft training set is empty");
  if (val.empty()) throw std::invalid_argument("sft validation set is empty");
  if (static_cast<std::size_t>(model.config().vocab_size) != vocab.size())
    throw std::invalid_argument("model vocabulary size does not match the tokenizer");

  const int ctx = model.config().context_length;
  std::vector<std::vector<tok::TokenId>> seqs;
  seqs.reserve(train.size());
  for (const auto& r : train) seqs.push_back(training_tokens(vocab, r, ctx));

  SftResult result{std::move(model), {}, 0.0, 0.0, 0};
  auto& m = result.model;
  result.initial_val_perplexity = perplexity(m, val, vocab);
  result.log.push_back({0, std::nullopt, result.initial_val_perplexity});

  nn::Adam<float> opt(nn::tensors_of(m.parameters()), nn::AdamConfig{config.lr, 0.9, 0.999, 1e-8, config.grad_clip});
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(seqs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::int64_t step = 0;
  bool done = config.max_steps == 0;
  for (int epoch = 0; epoch < config.epochs && !done; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size() && !done; start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::size_t predictions = 0;
      for (std::size_t i = start; i < end; ++i) predictions += seqs[order[i]].size() > 1 ? seqs[order[i]].size() - 1 : 0;
      if (predictions == 0) continue;

      opt.zero_grad();
      double loss_sum = 0.0;
      const float inv = 1.0f / static_cast<float>(predictions);
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = seqs[order[i]];
        if (s.size() < 2) continue;
        std::span<const tok::TokenId> all(s);
        auto out = m.forward(all.first(s.size() - 1));
        auto lp = nn::log_softmax_gather(out.logits, all.subspan(1));
        auto nll = nn::scale(nn::sum(lp), -1.0f);
        loss_sum += static_cast<double>(nll.item());
        nn::backward(nn::scale(nll, inv));
      }
      ++step;
      const double warm = config.warmup_steps > 0
                              ? std::min(1.0, static_cast<double>(step) / static_cast<double>(config.warmup_steps))
                              : 1.0;
      opt.step(config.lr * warm);

      SftLogRow row{step, loss_sum / static_cast<double>(predictions), std::nullopt};
      if (step % config.eval_every == 0) row.val_perplexity = perplexity(m, val, vocab);
      result.log.push_back(row);
      if (config.max_steps > 0 && step >= config.max_steps) done = true;
    }
  }
  result.steps = step;
  if (step == 0) {
    result.final_val_perplexity = result.initial_val_perplexity;
  } else if (result.log.back().val_perplexity) {
    result.final_val_perplexity = *result.log.back().val_perplexity;
  } else {
    result.final_val_perplexity = perplexity(m, val, vocab);
    result.log.back().val_perplexity = result.final_val_perplexity;
  }
  return result;
}

void write_log_csv(const std::filesystem::path& path, std::span<const SftLogRow> log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,loss,val_perplexity\n";
  for (const auto& r : log) {
    out << r.step << ',';
    if (r.loss) out << util::format_double(*r.loss);
    out << ',';
    if (r.val_perplexity) out << util::format_double(*r.val_perplexity);
    out << '\n';
  }
}

}  // namespace claimrl::sft
