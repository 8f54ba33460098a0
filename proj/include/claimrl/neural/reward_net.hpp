#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "claimrl/neural/adam.hpp"
#include "claimrl/neural/ops.hpp"

namespace claimrl::nn {

struct RewardNetConfig {
  int vocab_size = 1024;
  int token_cap = 500;  // inputs are truncated to this many tokens
  int layers = 1;
  int heads = 2;
  int model_dim = 32;
  int feedforward_dim = 64;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static RewardNetConfig from_json(const nlohmann::json& j);
  bool operator==(const RewardNetConfig&) const = default;
};

template <typename Scalar>
struct EncoderBlock {
  Tensor<Scalar> ln1_gain, ln1_bias, w_qkv, b_qkv, w_out, b_out;
  Tensor<Scalar> ln2_gain, ln2_bias, w_fc, b_fc, w_proj, b_proj;
};

/// Sequence classifier: embeddings, a bidirectional encoder stack, mean
/// pooling and a single-logit head. P(granted) = logistic(logit).
template <typename Scalar>
class RewardNet {
 public:
  explicit RewardNet(const RewardNetConfig& config);
  RewardNet(const RewardNet& other);
  RewardNet& operator=(const RewardNet& other);
  RewardNet(RewardNet&&) noexcept = default;
  RewardNet& operator=(RewardNet&&) noexcept = default;

  const RewardNetConfig& config() const { return config_; }

  /// 1 x 1 logit. Tokens past token_cap are dropped; an empty input scores a
  /// single pad position.
  Tensor<Scalar> logit(std::span<const std::int32_t> tokens) const;
  Scalar probability(std::span<const std::int32_t> tokens) const;

  std::vector<NamedParameter<Scalar>> parameters() const;
  void zero_grad();

  void save(const std::filesystem::path& path) const;
  static RewardNet load(const std::filesystem::path& path);

  Tensor<Scalar> token_embedding, position_embedding;
  std::vector<EncoderBlock<Scalar>> blocks;
  Tensor<Scalar> lnf_gain, lnf_bias;
  Tensor<Scalar> head_weight, head_bias;

 private:
  void allocate();
  void copy_from(const RewardNet& other);
  RewardNetConfig config_;
};

/// label = probability >= 0.5
template <typename Scalar>
int classify_label(Scalar probability) {
  return probability >= Scalar(0.5) ? 1 : 0;
}

extern template class RewardNet<float>;
extern template class RewardNet<double>;

}  // namespace claimrl::nn
