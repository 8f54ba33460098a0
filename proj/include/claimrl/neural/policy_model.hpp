#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "claimrl/neural/adam.hpp"
#include "claimrl/neural/ops.hpp"

namespace claimrl::nn {

using TokenId = std::int32_t;

struct LmConfig {
  int vocab_size = 1024;
  int context_length = 128;
  int layers = 2;
  int heads = 4;
  int model_dim = 64;
  int feedforward_dim = 256;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static LmConfig from_json(const nlohmann::json& j);
  bool operator==(const LmConfig&) const = default;
};

template <typename Scalar>
struct DecoderBlock {
  Tensor<Scalar> ln1_gain, ln1_bias;
  Tensor<Scalar> w_qkv, b_qkv;
  Tensor<Scalar> w_out, b_out;
  Tensor<Scalar> ln2_gain, ln2_bias;
  Tensor<Scalar> w_fc, b_fc;
  Tensor<Scalar> w_proj, b_proj;
};

/// Pre-norm decoder-only transformer with tied input/output embeddings and a
/// scalar value head on the final hidden state. Copies are deep.
template <typename Scalar>
class PolicyModel {
 public:
  struct Output {
    Tensor<Scalar> logits;  // T x vocab
    Tensor<Scalar> values;  // T x 1
  };

  explicit PolicyModel(const LmConfig& config);
  PolicyModel(const PolicyModel& other);
  PolicyModel& operator=(const PolicyModel& other);
  PolicyModel(PolicyModel&&) noexcept = default;
  PolicyModel& operator=(PolicyModel&&) noexcept = default;

  const LmConfig& config() const { return config_; }

  /// Throws std::invalid_argument for an empty sequence or one longer than the context.
  /// With value_stop_gradient the value head reads a detached copy of the
  /// final hidden state, so value gradients reach only the head.
  Output forward(std::span<const TokenId> tokens, bool value_stop_gradient = false) const;

  std::vector<NamedParameter<Scalar>> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  void save(const std::filesystem::path& path) const;
  static PolicyModel load(const std::filesystem::path& path);

  /// Bitwise parameter equality.
  bool same_parameters(const PolicyModel& other) const;

  // Direct access for tests and the incremental decoder.
  Tensor<Scalar> token_embedding, position_embedding;
  std::vector<DecoderBlock<Scalar>> blocks;
  Tensor<Scalar> lnf_gain, lnf_bias;
  Tensor<Scalar> value_weight, value_bias;

 private:
  void allocate();
  void copy_from(const PolicyModel& other);
  LmConfig config_;
};

/// Incremental, gradient-free evaluation with a key/value cache. Produces the
/// same next-token distribution as forward() one position at a time.
template <typename Scalar>
class Decoder {
 public:
  using Row = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  explicit Decoder(const PolicyModel<Scalar>& model);

  /// Appends a token; returns the logits for the following position.
  Row push(TokenId token, Scalar* value = nullptr);
  std::size_t length() const { return length_; }

 private:
  const PolicyModel<Scalar>& model_;
  std::vector<Mat<Scalar>> keys_, values_;
  std::size_t length_ = 0;
};

extern template class PolicyModel<float>;
extern template class PolicyModel<double>;
extern template class Decoder<float>;
extern template class Decoder<double>;

}  // namespace claimrl::nn
