#include "claimrl/neural/generation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace claimrl::nn {

template <typename Scalar>
std::vector<TokenId> sample(const PolicyModel<Scalar>& model, std::span<const TokenId> prompt,
                            const SamplerConfig& config, std::uint64_t seed) {
  if (prompt.empty()) throw std::invalid_argument("sample needs a non-empty prompt");
  if (config.max_new_tokens < 1) throw std::invalid_argument("max_new_tokens must be at least 1");
  const auto context = static_cast<std::size_t>(model.config().context_length);
  std::vector<TokenId> out;
  if (prompt.size() >= context) return out;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Decoder<Scalar> dec(model);
  typename Decoder<Scalar>::Row logits;
  for (auto t : prompt) logits = dec.push(t);

  const auto vocab = static_cast<std::size_t>(logits.size());
  std::vector<double> p(vocab);
  std::vector<std::size_t> order(vocab);
  while (true) {
    TokenId next = 0;
    if (config.temperature <= 0.0) {
      Eigen::Index arg = 0;
      logits.maxCoeff(&arg);  // first maximum on ties
      next = static_cast<TokenId>(arg);
    } else {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < vocab; ++i) {
        p[i] = static_cast<double>(logits(static_cast<Eigen::Index>(i))) / config.temperature;
        m = std::max(m, p[i]);
      }
      if (config.top_k > 0 && static_cast<std::size_t>(config.top_k) < vocab) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::partial_sort(order.begin(), order.begin() + config.top_k, order.end(),
                          [&](std::size_t a, std::size_t b) { return p[a] > p[b] || (p[a] == p[b] && a < b); });
        std::vector<bool> keep(vocab, false);
        for (int i = 0; i < config.top_k; ++i) keep[order[static_cast<std::size_t>(i)]] = true;
        for (std::size_t i = 0; i < vocab; ++i)
          if (!keep[i]) p[i] = -std::numeric_limits<double>::infinity();
      }
      double total = 0.0;
      for (auto& v : p) {
        v = std::exp(v - m);
        total += v;
      }
      double u = unit(rng) * total;
      next = static_cast<TokenId>(vocab - 1);
      for (std::size_t i = 0; i < vocab; ++i) {
        if (p[i] <= 0.0) continue;
        u -= p[i];
        if (u < 0.0) {
          next = static_cast<TokenId>(i);
          break;
        }
      }
      // Round-off can leave u >= 0 after the loop; fall back to the last live token.
      if (u >= 0.0) {
        for (std::size_t i = vocab; i-- > 0;) {
          if (p[i] > 0.0) {
            next = static_cast<TokenId>(i);
            break;
          }
        }
      }
    }
    out.push_back(next);
    if (next == config.stop_token) break;
    if (out.size() >= static_cast<std::size_t>(config.max_new_tokens)) break;
    if (prompt.size() + out.size() >= context) break;
    logits = dec.push(next);
  }
  return out;
}

template <typename Scalar>
std::vector<double> log_probs(const Mat<Scalar>& logits, std::span<const TokenId> targets) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size())
    throw std::invalid_argument("log_probs: logits rows and targets differ");
  std::vector<double> out(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto t = targets[i];
    if (t < 0 || t >= logits.cols()) throw std::out_of_range("log_probs: target id outside vocabulary");
    const auto row = logits.row(static_cast<Eigen::Index>(i));
    const double m = static_cast<double>(row.maxCoeff());
    double s = 0.0;
    for (Eigen::Index j = 0; j < row.size(); ++j) s += std::exp(static_cast<double>(row(j)) - m);
    out[i] = static_cast<double>(row(t)) - m - std::log(s);
  }
  return out;
}

template <typename Scalar>
std::pair<double, std::size_t> sequence_nll(const PolicyModel<Scalar>& model, std::span<const TokenId> tokens) {
  const auto context = static_cast<std::size_t>(model.config().context_length);
  if (tokens.size() > context) tokens = tokens.first(context);
  if (tokens.size() < 2) return {0.0, 0};
  const auto inputs = tokens.first(tokens.size() - 1);
  const auto targets = tokens.subspan(1);
  auto out = model.forward(inputs);
  const auto lp = log_probs<Scalar>(out.logits.value(), targets);
  double nll = 0.0;
  for (double v : lp) nll -= v;
  return {nll, lp.size()};
}

template <typename Scalar>
double perplexity(const PolicyModel<Scalar>& model, std::span<const std::vector<TokenId>> sequences) {
  if (sequences.empty()) throw std::invalid_argument("perplexity over an empty dataset");
  double nll = 0.0;
  std::size_t count = 0;
  for (const auto& s : sequences) {
    auto [n, c] = sequence_nll(model, std::span<const TokenId>(s));
    nll += n;
    count += c;
  }
  if (count == 0) throw std::invalid_argument("perplexity: no next-token predictions in dataset");
  return std::exp(nll / static_cast<double>(count));
}

template std::vector<TokenId> sample<float>(const PolicyModel<float>&, std::span<const TokenId>, const SamplerConfig&,
                                            std::uint64_t);
template std::vector<TokenId> sample<double>(const PolicyModel<double>&, std::span<const TokenId>,
                                             const SamplerConfig&, std::uint64_t);
template std::vector<double> log_probs<float>(const Mat<float>&, std::span<const TokenId>);
template std::vector<double> log_probs<double>(const Mat<double>&, std::span<const TokenId>);
template std::pair<double, std::size_t> sequence_nll<float>(const PolicyModel<float>&, std::span<const TokenId>);
template std::pair<double, std::size_t> sequence_nll<double>(const PolicyModel<double>&, std::span<const TokenId>);
template double perplexity<float>(const PolicyModel<float>&, std::span<const std::vector<TokenId>>);
template double perplexity<double>(const PolicyModel<double>&, std::span<const std::vector<TokenId>>);

}  // namespace claimrl::nn
