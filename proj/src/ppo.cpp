#include "claimrl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "claimrl/util.hpp"

namespace claimrl::ppo {

void PpoConfig::validate() const {
  if (total_steps < 0) throw std::invalid_argument("ppo total_steps must be non-negative");
  if (rollouts_per_step < 1) throw std::invalid_argument("ppo rollouts_per_step must be at least 1");
  if (prompt_token_count < 1) throw std::invalid_argument("ppo prompt_token_count must be at least 1");
  if (max_new_tokens < 0) throw std::invalid_argument("ppo max_new_tokens must be non-negative");
  if (!(lr > 0.0)) throw std::invalid_argument("ppo learning rate must be positive");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw std::invalid_argument("ppo clip_epsilon must lie in (0,1)");
  if (!(gae_gamma >= 0.0 && gae_gamma <= 1.0)) throw std::invalid_argument("ppo gae_gamma must lie in [0,1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw std::invalid_argument("ppo gae_lambda must lie in [0,1]");
  if (value_coef < 0.0 || kl_coef < 0.0) throw std::invalid_argument("ppo coefficients must be non-negative");
  if (ppo_epochs < 1) throw std::invalid_argument("ppo_epochs must be at least 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("ppo sampling temperature must be positive");
}

std::vector<Prompt> make_prompts(std::span<const corpus::ClaimRecord> dataset, const tok::Vocabulary& vocab,
                                 int prompt_token_count, std::size_t n, int context_length) {
  if (prompt_token_count < 1) throw std::invalid_argument("prompt_token_count must be at least 1");
  if (n > dataset.size()) throw std::invalid_argument("more prompts requested than records available");
  if (context_length > 0 && prompt_token_count + 1 >= context_length)
    throw std::invalid_argument("prompt leaves no room for a response within the context");
  std::vector<Prompt> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ids = vocab.encode(dataset[i].claim_text);
    Prompt p;
    p.record_index = i;
    p.tokens.push_back(vocab.start_id());
    const auto take = std::min(ids.size(), static_cast<std::size_t>(prompt_token_count));
    p.tokens.insert(p.tokens.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take));
    p.short_claim = ids.size() < static_cast<std::size_t>(prompt_token_count);
    out.push_back(std::move(p));
  }
  return out;
}

Scorer make_scorer(const rewards::RewardSpec& spec, const tok::Vocabulary& vocab) {
  spec.validate();
  return [spec, &vocab](std::span<const TokenId> prompt, std::span<const TokenId> response) {
    return rewards::score(spec, vocab.decode(prompt), vocab.decode(response));
  };
}

Rollout evaluate_rollout(const nn::PolicyModel<float>& policy, const nn::PolicyModel<float>& reference,
                         std::vector<TokenId> prompt, std::vector<TokenId> response, double reward, double kl_coef) {
  if (prompt.empty()) throw std::invalid_argument("rollout prompt is empty");
  if (response.empty()) throw std::invalid_argument("rollout response is empty");
  std::vector<TokenId> seq(prompt);
  seq.insert(seq.end(), response.begin(), response.end());
  std::span<const TokenId> input(seq.data(), seq.size() - 1);
  const auto P = static_cast<Eigen::Index>(prompt.size());
  const auto R = static_cast<Eigen::Index>(response.size());

  Rollout r;
  const auto out = policy.forward(input);
  const nn::Mat<float> logits = out.logits.value().middleRows(P - 1, R);
  r.logp = nn::log_probs(logits, response);
  const auto ref_out = reference.forward(input);
  const nn::Mat<float> ref_logits = ref_out.logits.value().middleRows(P - 1, R);
  r.ref_logp = nn::log_probs(ref_logits, response);
  r.values.resize(response.size());
  for (Eigen::Index t = 0; t < R; ++t) r.values[static_cast<std::size_t>(t)] = out.values.value()(P - 1 + t, 0);

  r.reward = reward;
  r.shaped_rewards.resize(response.size());
  for (std::size_t t = 0; t < response.size(); ++t) r.shaped_rewards[t] = -kl_coef * (r.logp[t] - r.ref_logp[t]);
  r.shaped_rewards.back() += reward;
  r.prompt = std::move(prompt);
  r.response = std::move(response);
  return r;
}

std::vector<Rollout> collect_rollouts(const nn::PolicyModel<float>& policy, const nn::PolicyModel<float>& reference,
                                      std::span<const std::vector<TokenId>> prompts, const Scorer& scorer,
                                      const nn::SamplerConfig& sampler, double kl_coef, std::uint64_t run_seed,
                                      std::uint64_t step) {
  std::vector<Rollout> batch;
  batch.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    auto response = nn::sample(policy, prompts[i], sampler, util::derive_seed(run_seed, step, i));
    const double reward = scorer(prompts[i], response);
    auto r = evaluate_rollout(policy, reference, prompts[i], std::move(response), reward, kl_coef);
    r.prompt_index = i;
    batch.push_back(std::move(r));
  }
  return batch;
}

void compute_advantages(Rollout& rollout, double gamma, double lambda) {
  const std::size_t T = rollout.response.size();
  if (T == 0) throw std::invalid_argument("cannot compute advantages for an empty response");
  if (rollout.values.size() != T || rollout.shaped_rewards.size() != T)
    throw std::invalid_argument("rollout arrays disagree with the response length");
  rollout.advantages.assign(T, 0.0);
  rollout.returns.assign(T, 0.0);
  double acc = 0.0;
  for (std::size_t t = T; t-- > 0;) {
    const double next_v = t + 1 < T ? rollout.values[t + 1] : 0.0;
    const double delta = rollout.shaped_rewards[t] + gamma * next_v - rollout.values[t];
    acc = delta + gamma * lambda * acc;
    rollout.advantages[t] = acc;
    rollout.returns[t] = acc + rollout.values[t];
  }
}

void whiten_advantages(std::span<Rollout> batch) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : batch)
    for (double a : r.advantages) {
      sum += a;
      ++n;
    }
  if (n == 0) return;
  const double mean = sum / static_cast<double>(n);
  double var = 0.0;
  for (const auto& r : batch)
    for (double a : r.advantages) var += (a - mean) * (a - mean);
  var /= static_cast<double>(n);
  const double inv = var > 1e-16 ? 1.0 / std::sqrt(var) : 1.0;
  for (auto& r : batch)
    for (double& a : r.advantages) a = (a - mean) * inv;
}

UpdateLosses UpdateResult::mean() const {
  UpdateLosses m;
  if (epochs.empty()) return m;
  for (const auto& e : epochs) {
    m.policy_loss += e.policy_loss;
    m.value_loss += e.value_loss;
    m.total += e.total;
  }
  const double n = static_cast<double>(epochs.size());
  m.policy_loss /= n;
  m.value_loss /= n;
  m.total /= n;
  return m;
}

namespace {

nn::Mat<float> column(const std::vector<double>& v) {
  nn::Mat<float> m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = static_cast<float>(v[i]);
  return m;
}

std::string dump_batch(std::span<const Rollout> batch, int epoch, const UpdateLosses& losses) {
  std::ostringstream os;
  os << "epoch " << epoch << " policy_loss " << losses.policy_loss << " value_loss " << losses.value_loss << '\n';
  for (const auto& r : batch) {
    nlohmann::json j;
    j["prompt_index"] = r.prompt_index;
    j["prompt"] = r.prompt;
    j["response"] = r.response;
    j["reward"] = r.reward;
    j["logp"] = r.logp;
    j["ref_logp"] = r.ref_logp;
    j["values"] = r.values;
    j["advantages"] = r.advantages;
    j["returns"] = r.returns;
    os << j.dump() << '\n';
  }
  return os.str();
}

}  // namespace

UpdateResult ppo_update(nn::PolicyModel<float>& policy, nn::Adam<float>& optimizer, std::span<const Rollout> batch,
                        const PpoConfig& config) {
  std::size_t tokens = 0;
  for (const auto& r : batch) {
    if (r.response.empty() || r.advantages.size() != r.response.size() || r.returns.size() != r.response.size() ||
        r.logp.size() != r.response.size())
      throw std::invalid_argument("rollout is missing advantages or log-probabilities");
    tokens += r.response.size();
  }
  UpdateResult result;
  if (tokens == 0) return result;
  const float inv_n = 1.0f / static_cast<float>(tokens);
  const auto lo = static_cast<float>(1.0 - config.clip_epsilon);
  const auto hi = static_cast<float>(1.0 + config.clip_epsilon);

  for (int epoch = 0; epoch < config.ppo_epochs; ++epoch) {
    optimizer.zero_grad();
    UpdateLosses losses;
    for (const auto& r : batch) {
      std::vector<TokenId> seq(r.prompt);
      seq.insert(seq.end(), r.response.begin(), r.response.end());
      const auto P = static_cast<Eigen::Index>(r.prompt.size());
      const auto R = static_cast<Eigen::Index>(r.response.size());
      auto out = policy.forward(std::span<const TokenId>(seq.data(), seq.size() - 1), !config.value_trunk_gradient);

      auto logp = nn::log_softmax_gather(nn::slice_rows(out.logits, P - 1, R), std::span<const TokenId>(r.response));
      auto old = nn::Tensor<float>::constant(column(r.logp));
      auto adv = nn::Tensor<float>::constant(column(r.advantages));
      auto ratio = nn::exp(logp - old);
      auto surrogate = nn::minimum(nn::mul(ratio, adv), nn::mul(nn::clamp(ratio, lo, hi), adv));
      auto policy_loss = nn::scale(nn::sum(surrogate), -inv_n);

      auto err = nn::slice_rows(out.values, P - 1, R) - nn::Tensor<float>::constant(column(r.returns));
      auto value_loss = nn::scale(nn::sum(nn::square(err)), inv_n);
      auto total = policy_loss + nn::scale(value_loss, static_cast<float>(config.value_coef));

      losses.policy_loss += static_cast<double>(policy_loss.item());
      losses.value_loss += static_cast<double>(value_loss.item());
      losses.total += static_cast<double>(total.item());
      nn::backward(total);
    }
    if (!std::isfinite(losses.total) || !std::isfinite(losses.policy_loss) || !std::isfinite(losses.value_loss)) {
      optimizer.zero_grad();
      throw NonFiniteLoss("non-finite PPO loss in update pass " + std::to_string(epoch),
                          dump_batch(batch, epoch, losses));
    }
    optimizer.step(config.lr);
    result.epochs.push_back(losses);
  }
  return result;
}

std::string sample_json_line(const SampleRecord& s) {
  nlohmann::ordered_json j;
  const auto& rec = *s.record;
  j["doc_id"] = nlohmann::ordered_json::array({rec.doc_id});
  j["appl_id"] = nlohmann::ordered_json::array({rec.appl_id});
  j["flag_patent"] = nlohmann::ordered_json::array({rec.grant_flag});
  j["claim_one"] = nlohmann::ordered_json::array({rec.claim_text});
  j["prompt"] = nlohmann::ordered_json::array({s.prompt});
  j["generated"] = nlohmann::ordered_json::array({s.generated});
  j["rewards"] = nlohmann::ordered_json::array({s.reward});
  j["step"] = s.step;
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

namespace {

bool whitespace_only(std::string_view text) {
  const auto end = text.find(tok::kEndTag);
  if (end != std::string_view::npos) text = text.substr(0, end);
  return std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

PpoResult train_ppo(const nn::PolicyModel<float>& sft, std::span<const corpus::ClaimRecord> dataset,
                    const tok::Vocabulary& vocab, const rewards::RewardSpec& reward, const PpoConfig& config,
                    const SampleSink& sink) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("ppo dataset is empty");
  if (static_cast<std::size_t>(sft.config().vocab_size) != vocab.size())
    throw std::invalid_argument("model vocabulary size does not match the tokenizer");
  const int ctx = sft.config().context_length;
  const std::size_t pool = config.prompt_pool == 0 ? dataset.size() : std::min(config.prompt_pool, dataset.size());
  const auto prompts = make_prompts(dataset, vocab, config.prompt_token_count, pool, ctx);
  const auto scorer = make_scorer(reward, vocab);

  const nn::PolicyModel<float> reference(sft);
  PpoResult result{nn::PolicyModel<float>(sft), {}, 0};
  for (const auto& p : prompts) result.short_prompts += p.short_claim ? 1 : 0;
  auto& policy = result.policy;
  nn::Adam<float> optimizer(nn::tensors_of(policy.parameters()),
                            nn::AdamConfig{config.lr, 0.9, 0.999, 1e-8, config.grad_clip});

  nn::SamplerConfig sampler;
  sampler.temperature = config.temperature;
  sampler.max_new_tokens = config.max_new_tokens > 0 ? config.max_new_tokens : ctx;
  sampler.stop_token = vocab.end_id();

  const auto R = static_cast<std::size_t>(config.rollouts_per_step);
  std::vector<std::vector<TokenId>> step_prompts(R);
  std::vector<std::size_t> step_index(R);
  for (std::int64_t step = 1; step <= config.total_steps; ++step) {
    for (std::size_t i = 0; i < R; ++i) {
      step_index[i] = (static_cast<std::size_t>(step - 1) * R + i) % prompts.size();
      step_prompts[i] = prompts[step_index[i]].tokens;
    }
    auto batch = collect_rollouts(policy, reference, step_prompts, scorer, sampler, config.kl_coef, config.seed,
                                  static_cast<std::uint64_t>(step));
    for (auto& r : batch) compute_advantages(r, config.gae_gamma, config.gae_lambda);
    if (config.advantage_whitening) whiten_advantages(batch);

    TrainLogRow row;
    row.step = step;
    double kl_sum = 0.0;
    std::size_t kl_tokens = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& r = batch[i];
      const std::string text = vocab.decode(r.response);
      row.reward_mean += r.reward;
      row.claim_length_mean += static_cast<double>(text.size());
      row.limiting_term_count_mean += rewards::limiting_term_reward(text);
      row.end_tag_fraction += text.find(tok::kEndTag) != std::string::npos ? 1.0 : 0.0;
      row.degenerate_fraction += whitespace_only(text) ? 1.0 : 0.0;
      for (std::size_t t = 0; t < r.response.size(); ++t) kl_sum += r.logp[t] - r.ref_logp[t];
      kl_tokens += r.response.size();
      if (sink) {
        const auto& rec = dataset[prompts[step_index[i]].record_index];
        sink(SampleRecord{step, &rec, vocab.decode(r.prompt), text, r.reward});
      }
    }
    const double n = static_cast<double>(batch.size());
    row.reward_mean /= n;
    row.claim_length_mean /= n;
    row.limiting_term_count_mean /= n;
    row.end_tag_fraction /= n;
    row.degenerate_fraction /= n;
    row.kl_mean = kl_tokens > 0 ? kl_sum / static_cast<double>(kl_tokens) : 0.0;

    const auto losses = ppo_update(policy, optimizer, batch, config).mean();
    row.policy_loss = losses.policy_loss;
    row.value_loss = losses.value_loss;
    result.log.push_back(row);
  }
  return result;
}

namespace {
constexpr const char* kLogHeader =
    "step,reward_mean,claim_length_mean,limiting_term_count_mean,kl_mean,policy_loss,value_loss,end_tag_fraction,"
    "degenerate_fraction";
}

void write_log_csv(const std::filesystem::path& path, std::span<const TrainLogRow> log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kLogHeader << '\n';
  using util::format_double;
  for (const auto& r : log) {
    out << r.step << ',' << format_double(r.reward_mean) << ',' << format_double(r.claim_length_mean) << ','
        << format_double(r.limiting_term_count_mean) << ',' << format_double(r.kl_mean) << ','
        << format_double(r.policy_loss) << ',' << format_double(r.value_loss) << ','
        << format_double(r.end_tag_fraction) << ',' << format_double(r.degenerate_fraction) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<TrainLogRow> read_log_csv(const std::filesystem::path& path) {
  const auto table = util::read_csv(path);
  const std::size_t c[] = {table.column("step"),
                           table.column("reward_mean"),
                           table.column("claim_length_mean"),
                           table.column("limiting_term_count_mean"),
                           table.column("kl_mean"),
                           table.column("policy_loss"),
                           table.column("value_loss"),
                           table.column("end_tag_fraction"),
                           table.column("degenerate_fraction")};
  std::vector<TrainLogRow> out;
  out.reserve(table.rows.size());
  for (const auto& f : table.rows) {
    if (f.size() < table.header.size()) throw std::runtime_error("short row in " + path.string());
    TrainLogRow r;
    r.step = std::stoll(f[c[0]]);
    r.reward_mean = std::stod(f[c[1]]);
    r.claim_length_mean = std::stod(f[c[2]]);
    r.limiting_term_count_mean = std::stod(f[c[3]]);
    r.kl_mean = std::stod(f[c[4]]);
    r.policy_loss = std::stod(f[c[5]]);
    r.value_loss = std::stod(f[c[6]]);
    r.end_tag_fraction = std::stod(f[c[7]]);
    r.degenerate_fraction = std::stod(f[c[8]]);
    out.push_back(r);
  }
  return out;
}

}  // namespace claimrl::ppo
