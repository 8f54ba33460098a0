#include "claimrl/neural/policy_model.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>

#include "claimrl/neural/checkpoint.hpp"

namespace claimrl::nn {

void LmConfig::validate() const {
  if (vocab_size < 2) throw std::invalid_argument("vocab_size must be at least 2");
  if (context_length < 32) throw std::invalid_argument("context_length must be at least 32");
  if (layers < 1 || heads < 1 || model_dim < 1 || feedforward_dim < 1)
    throw std::invalid_argument("model dimensions must be positive");
  if (model_dim % heads != 0) throw std::invalid_argument("model_dim must be divisible by heads");
}

nlohmann::json LmConfig::to_json() const {
  return {{"vocab_size", vocab_size}, {"context_length", context_length}, {"layers", layers},
          {"heads", heads},           {"model_dim", model_dim},           {"feedforward_dim", feedforward_dim},
          {"seed", seed}};
}

LmConfig LmConfig::from_json(const nlohmann::json& j) {
  LmConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.context_length = j.at("context_length").get<int>();
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

template <typename Scalar, typename Row>
Row layer_norm_row(const Row& x, const Mat<Scalar>& gain, const Mat<Scalar>& bias) {
  const Scalar mu = x.mean();
  const Scalar var = (x.array() - mu).square().mean();
  const Scalar rstd = Scalar(1) / std::sqrt(var + Scalar(1e-5));
  Row out = ((x.array() - mu) * rstd * gain.row(0).array() + bias.row(0).array()).matrix();
  return out;
}

template <typename Row>
void gelu_inplace(Row& x) {
  using Scalar = typename Row::Scalar;
  const Scalar k = Scalar(0.7978845608028654);
  const Scalar c = Scalar(0.044715);
  x = (Scalar(0.5) * x.array() * (Scalar(1) + (k * (x.array() + c * x.array().cube())).tanh())).matrix();
}

}  // namespace

template <typename Scalar>
PolicyModel<Scalar>::PolicyModel(const LmConfig& config) : config_(config) {
  config_.validate();
  allocate();
}

template <typename Scalar>
void PolicyModel<Scalar>::allocate() {
  std::mt19937_64 rng(config_.seed);
  const Eigen::Index V = config_.vocab_size;
  const Eigen::Index C = config_.context_length;
  const Eigen::Index d = config_.model_dim;
  const Eigen::Index f = config_.feedforward_dim;
  token_embedding = normal_param<Scalar>(V, d, rng);
  position_embedding = normal_param<Scalar>(C, d, rng);
  blocks.clear();
  for (int l = 0; l < config_.layers; ++l) {
    DecoderBlock<Scalar> b;
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
  value_weight = filled_param<Scalar>(d, 1, 0);
  value_bias = filled_param<Scalar>(1, 1, 0);
}

template <typename Scalar>
void PolicyModel<Scalar>::copy_from(const PolicyModel& other) {
  config_ = other.config_;
  allocate();
  auto mine = parameters();
  auto theirs = other.parameters();
  for (std::size_t i = 0; i < mine.size(); ++i) mine[i].tensor.mutable_value() = theirs[i].tensor.value();
}

template <typename Scalar>
PolicyModel<Scalar>::PolicyModel(const PolicyModel& other) : config_(other.config_) {
  copy_from(other);
}

template <typename Scalar>
PolicyModel<Scalar>& PolicyModel<Scalar>::operator=(const PolicyModel& other) {
  if (this != &other) copy_from(other);
  return *this;
}

template <typename Scalar>
std::vector<NamedParameter<Scalar>> PolicyModel<Scalar>::parameters() const {
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
  out.push_back({"value_head.weight", value_weight});
  out.push_back({"value_head.bias", value_bias});
  return out;
}

template <typename Scalar>
std::size_t PolicyModel<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += static_cast<std::size_t>(p.tensor.size());
  return n;
}

template <typename Scalar>
void PolicyModel<Scalar>::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

template <typename Scalar>
typename PolicyModel<Scalar>::Output PolicyModel<Scalar>::forward(std::span<const TokenId> tokens, bool value_stop_gradient) const {
  const auto T = static_cast<Eigen::Index>(tokens.size());
  if (T == 0) throw std::invalid_argument("forward on an empty sequence");
  if (T > config_.context_length)
    throw std::invalid_argument("sequence of " + std::to_string(T) + " tokens exceeds context length " +
                                std::to_string(config_.context_length));
  std::vector<TokenId> positions(tokens.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<TokenId>(i);

  Tensor<Scalar> x = embedding(token_embedding, tokens) + embedding(position_embedding, std::span(positions));
  for (const auto& b : blocks) {
    auto h = layer_norm(x, b.ln1_gain, b.ln1_bias);
    auto qkv = add_row(matmul(h, b.w_qkv), b.b_qkv);
    auto a = attention(qkv, config_.heads, /*causal=*/true);
    x = x + add_row(matmul(a, b.w_out), b.b_out);
    auto h2 = layer_norm(x, b.ln2_gain, b.ln2_bias);
    auto f = gelu(add_row(matmul(h2, b.w_fc), b.b_fc));
    x = x + add_row(matmul(f, b.w_proj), b.b_proj);
  }
  auto hf = layer_norm(x, lnf_gain, lnf_bias);
  Output out;
  out.logits = matmul_nt(hf, token_embedding);
  out.values = add_row(matmul(value_stop_gradient ? hf.detach() : hf, value_weight), value_bias);
  return out;
}

template <typename Scalar>
void PolicyModel<Scalar>::save(const std::filesystem::path& path) const {
  save_archive<Scalar>(path, "policy", config_.to_json(), parameters());
}

template <typename Scalar>
PolicyModel<Scalar> PolicyModel<Scalar>::load(const std::filesystem::path& path) {
  const Archive a = load_archive(path);
  if (a.kind != "policy") throw std::runtime_error(path.string() + " holds a " + a.kind + " checkpoint, not a policy");
  PolicyModel m(LmConfig::from_json(a.config));
  auto params = m.parameters();
  restore_parameters(a, params);
  return m;
}

template <typename Scalar>
bool PolicyModel<Scalar>::same_parameters(const PolicyModel& other) const {
  if (!(config_ == other.config_)) return false;
  auto a = parameters();
  auto b = other.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& va = a[i].tensor.value();
    const auto& vb = b[i].tensor.value();
    if (va.size() != vb.size()) return false;
    if (std::memcmp(va.data(), vb.data(), static_cast<std::size_t>(va.size()) * sizeof(Scalar)) != 0) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

template <typename Scalar>
Decoder<Scalar>::Decoder(const PolicyModel<Scalar>& model) : model_(model) {
  const auto& c = model.config();
  for (int l = 0; l < c.layers; ++l) {
    keys_.emplace_back(c.context_length, c.model_dim);
    values_.emplace_back(c.context_length, c.model_dim);
  }
}

template <typename Scalar>
typename Decoder<Scalar>::Row Decoder<Scalar>::push(TokenId token, Scalar* value) {
  const auto& c = model_.config();
  if (length_ >= static_cast<std::size_t>(c.context_length)) throw std::out_of_range("decoder context is full");
  if (token < 0 || token >= c.vocab_size) throw std::out_of_range("token id outside vocabulary");
  const auto pos = static_cast<Eigen::Index>(length_);
  const Eigen::Index d = c.model_dim;
  const Eigen::Index hd = d / c.heads;
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));

  Row x = model_.token_embedding.value().row(token) + model_.position_embedding.value().row(pos);
  for (std::size_t l = 0; l < model_.blocks.size(); ++l) {
    const auto& b = model_.blocks[l];
    Row h = layer_norm_row<Scalar>(x, b.ln1_gain.value(), b.ln1_bias.value());
    Row qkv = h * b.w_qkv.value() + b.b_qkv.value();
    keys_[l].row(pos) = qkv.segment(d, d);
    values_[l].row(pos) = qkv.segment(2 * d, d);
    Row att(d);
    for (int hh = 0; hh < c.heads; ++hh) {
      const Eigen::Index off = hh * hd;
      Eigen::Matrix<Scalar, 1, Eigen::Dynamic> s =
          (qkv.segment(off, hd) * keys_[l].block(0, off, pos + 1, hd).transpose()) * inv_sqrt;
      const Scalar m = s.maxCoeff();
      s = (s.array() - m).exp().matrix();
      s /= s.sum();
      att.segment(off, hd) = s * values_[l].block(0, off, pos + 1, hd);
    }
    x += att * b.w_out.value() + b.b_out.value();
    Row h2 = layer_norm_row<Scalar>(x, b.ln2_gain.value(), b.ln2_bias.value());
    Row f = h2 * b.w_fc.value() + b.b_fc.value();
    gelu_inplace(f);
    x += f * b.w_proj.value() + b.b_proj.value();
  }
  Row hf = layer_norm_row<Scalar>(x, model_.lnf_gain.value(), model_.lnf_bias.value());
  if (value) *value = (hf * model_.value_weight.value())(0, 0) + model_.value_bias.value()(0, 0);
  ++length_;
  return hf * model_.token_embedding.value().transpose();
}

template class PolicyModel<float>;
template class PolicyModel<double>;
template class Decoder<float>;
template class Decoder<double>;

}  // namespace claimrl::nn
