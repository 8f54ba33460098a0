#include "claimrl/neural/reward_net.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "claimrl/neural/checkpoint.hpp"

namespace claimrl::nn {

void RewardNetConfig::validate() const {
  if (vocab_size < 2) throw std::invalid_argument("reward net vocab_size must be at least 2");
  if (token_cap < 1) throw std::invalid_argument("reward net token_cap must be positive");
  if (layers < 0 || heads < 1 || model_dim < 1 || feedforward_dim < 1)
    throw std::invalid_argument("reward net dimensions must be positive");
  if (model_dim % heads != 0) throw std::invalid_argument("reward net model_dim must be divisible by heads");
}

nlohmann::json RewardNetConfig::to_json() const {
  return {{"vocab_size", vocab_size}, {"token_cap", token_cap},         {"layers", layers}, {"heads", heads},
          {"model_dim", model_dim},   {"feedforward_dim", feedforward_dim}, {"seed", seed}};
}

RewardNetConfig RewardNetConfig::from_json(const nlohmann::json& j) {
  RewardNetConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.token_cap = j.at("token_cap").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.model_dim = j.at("model_dim").get<int>();
  c.feedforward_dim = j.at("feedforward_dim").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

namespace {

template <typename Scalar>
Tensor<Scalar> normal_param(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 0.02);
  Mat<Scalar> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(d(rng));
  return Tensor<Scalar>::parameter(std::move(m));
}

template <typename Scalar>
Tensor<Scalar> filled_param(Eigen::Index r, Eigen::Index c, Scalar v) {
  return Tensor<Scalar>::parameter(Mat<Scalar>::Constant(r, c, v));
}

}  // namespace

template <typename Scalar>
RewardNet<Scalar>::RewardNet(const RewardNetConfig& config) : config_(config) {
  config_.validate();
  allocate();
}

template <typename Scalar>
void RewardNet<Scalar>::allocate() {
  std::mt19937_64 rng(config_.seed);
  const Eigen::Index d = config_.model_dim;
  const Eigen::Index f = config_.feedforward_dim;
  token_embedding = normal_param<Scalar>(config_.vocab_size, d, rng);
  position_embedding = normal_param<Scalar>(config_.token_cap, d, rng);
  blocks.clear();
  for (int l = 0; l < config_.layers; ++l) {
    EncoderBlock<Scalar> b;
    b.ln1_gain = filled_param<Scalar>(1, d, 1);
    b.ln1_bias = filled_param<Scalar>(1, d, 0);
    b.w_qkv = normal_param<Scalar>(d, 3 * d, rng);
    b.b_qkv = filled_param<Scalar>(1, 3 * d, 0);
    b.w_out = normal_param<Scalar>(d, d, rng);
    b.b_out = filled_param<Scalar>(1, d, 0);
    b.ln2_gain = filled_param<Scalar>(1, d, 1);
    b.ln2_bias = filled_param<Scalar>(1, d, 0);
    b.w_fc = normal_param<Scalar>(d, f, rng);
    b.b_fc = filled_param<Scalar>(1, f, 0);
    b.w_proj = normal_param<Scalar>(f, d, rng);
    b.b_proj = filled_param<Scalar>(1, d, 0);
    blocks.push_back(std::move(b));
  }
  lnf_gain = filled_param<Scalar>(1, d, 1);
  lnf_bias = filled_param<Scalar>(1, d, 0);
  head_weight = filled_param<Scalar>(d, 1, 0);
  head_bias = filled_param<Scalar>(1, 1, 0);
}

template <typename Scalar>
void RewardNet<Scalar>::copy_from(const RewardNet& other) {
  config_ = other.config_;
  allocate();
  auto mine = parameters();
  auto theirs = other.parameters();
  for (std::size_t i = 0; i < mine.size(); ++i) mine[i].tensor.mutable_value() = theirs[i].tensor.value();
}

template <typename Scalar>
RewardNet<Scalar>::RewardNet(const RewardNet& other) : config_(other.config_) {
  copy_from(other);
}

template <typename Scalar>
RewardNet<Scalar>& RewardNet<Scalar>::operator=(const RewardNet& other) {
  if (this != &other) copy_from(other);
  return *this;
}

template <typename Scalar>
std::vector<NamedParameter<Scalar>> RewardNet<Scalar>::parameters() const {
  std::vector<NamedParameter<Scalar>> out;
  out.push_back({"token_embedding", token_embedding});
  out.push_back({"position_embedding", position_embedding});
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const auto& b = blocks[l];
    const std::string p = "blocks." + std::to_string(l) + ".";
    out.push_back({p + "ln1.gain", b.ln1_gain});
    out.push_back({p + "ln1.bias", b.ln1_bias});
    out.push_back({p + "attn.w_qkv", b.w_qkv});
    out.push_back({p + "attn.b_qkv", b.b_qkv});
    out.push_back({p + "attn.w_out", b.w_out});
    out.push_back({p + "attn.b_out", b.b_out});
    out.push_back({p + "ln2.gain", b.ln2_gain});
    out.push_back({p + "ln2.bias", b.ln2_bias});
    out.push_back({p + "mlp.w_fc", b.w_fc});
    out.push_back({p + "mlp.b_fc", b.b_fc});
    out.push_back({p + "mlp.w_proj", b.w_proj});
    out.push_back({p + "mlp.b_proj", b.b_proj});
  }
  out.push_back({"lnf.gain", lnf_gain});
  out.push_back({"lnf.bias", lnf_bias});
  out.push_back({"head.weight", head_weight});
  out.push_back({"head.bias", head_bias});
  return out;
}

template <typename Scalar>
void RewardNet<Scalar>::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

template <typename Scalar>
Tensor<Scalar> RewardNet<Scalar>::logit(std::span<const std::int32_t> tokens) const {
  static constexpr std::int32_t kPad = 256;
  std::vector<std::int32_t> ids(tokens.begin(),
                                tokens.begin() + std::min<std::size_t>(tokens.size(), config_.token_cap));
  if (ids.empty()) ids.push_back(kPad < config_.vocab_size ? kPad : 0);
  std::vector<std::int32_t> positions(ids.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<std::int32_t>(i);

  Tensor<Scalar> x = embedding(token_embedding, std::span<const std::int32_t>(ids)) +
                     embedding(position_embedding, std::span<const std::int32_t>(positions));
  for (const auto& b : blocks) {
    auto h = layer_norm(x, b.ln1_gain, b.ln1_bias);
    auto a = attention(add_row(matmul(h, b.w_qkv), b.b_qkv), config_.heads, /*causal=*/false);
    x = x + add_row(matmul(a, b.w_out), b.b_out);
    auto h2 = layer_norm(x, b.ln2_gain, b.ln2_bias);
    x = x + add_row(matmul(gelu(add_row(matmul(h2, b.w_fc), b.b_fc)), b.w_proj), b.b_proj);
  }
  auto pooled = mean_rows(layer_norm(x, lnf_gain, lnf_bias));
  return add_row(matmul(pooled, head_weight), head_bias);
}

template <typename Scalar>
Scalar RewardNet<Scalar>::probability(std::span<const std::int32_t> tokens) const {
  const Scalar z = logit(tokens).item();
  return Scalar(1) / (Scalar(1) + std::exp(-z));
}

template <typename Scalar>
void RewardNet<Scalar>::save(const std::filesystem::path& path) const {
  save_archive<Scalar>(path, "reward", config_.to_json(), parameters());
}

template <typename Scalar>
RewardNet<Scalar> RewardNet<Scalar>::load(const std::filesystem::path& path) {
  const Archive a = load_archive(path);
  if (a.kind != "reward") throw std::runtime_error(path.string() + " holds a " + a.kind + " checkpoint, not a reward net");
  RewardNet m(RewardNetConfig::from_json(a.config));
  auto params = m.parameters();
  restore_parameters(a, params);
  return m;
}

template class RewardNet<float>;
template class RewardNet<double>;

}  // namespace claimrl::nn
