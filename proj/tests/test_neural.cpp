#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "claimrl/neural/checkpoint.hpp"
#include "claimrl/neural/generation.hpp"
#include "claimrl/neural/policy_model.hpp"
#include "claimrl/neural/reward_net.hpp"
#include "test_support.hpp"

using namespace claimrl::nn;

namespace {

LmConfig toy_lm(int vocab = 11) {
  LmConfig c;
  c.vocab_size = vocab;
  c.context_length = 32;
  c.layers = 2;
  c.heads = 2;
  c.model_dim = 8;
  c.feedforward_dim = 16;
  c.seed = 3;
  return c;
}

// Breaks the zero-init symmetry so every parameter receives gradient.
template <typename Scalar>
void jitter(const std::vector<NamedParameter<Scalar>>& params, std::uint64_t seed, double scale = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  for (auto p : params) {
    auto& v = p.tensor.mutable_value();
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] += static_cast<Scalar>(d(rng));
  }
}

template <typename Scalar>
Tensor<Scalar> lm_loss(const PolicyModel<Scalar>& m, const std::vector<TokenId>& seq) {
  std::span<const TokenId> all(seq);
  auto out = m.forward(all.first(seq.size() - 1));
  auto lp = log_softmax_gather(out.logits, all.subspan(1));
  // Value term so the value head is covered too.
  return scale(sum(lp), Scalar(-1)) + scale(sum(square(out.values)), Scalar(0.5));
}

// Straight-line reference forward written against raw matrices.
Mat<double> dense_forward(const PolicyModel<double>& m, const std::vector<TokenId>& tokens) {
  const auto& cfg = m.config();
  const int T = static_cast<int>(tokens.size());
  const int d = cfg.model_dim;
  const int H = cfg.heads;
  const int dh = d / H;
  auto ln = [](const Mat<double>& x, const Mat<double>& g, const Mat<double>& b) {
    Mat<double> y(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i) {
      double mu = 0, var = 0;
      for (int j = 0; j < x.cols(); ++j) mu += x(i, j);
      mu /= x.cols();
      for (int j = 0; j < x.cols(); ++j) var += (x(i, j) - mu) * (x(i, j) - mu);
      var /= x.cols();
      for (int j = 0; j < x.cols(); ++j) y(i, j) = (x(i, j) - mu) / std::sqrt(var + 1e-5) * g(0, j) + b(0, j);
    }
    return y;
  };
  auto affine = [](const Mat<double>& x, const Mat<double>& w, const Mat<double>& b) {
    Mat<double> y(x.rows(), w.cols());
    for (int i = 0; i < x.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j) {
        double s = b(0, j);
        for (int k = 0; k < x.cols(); ++k) s += x(i, k) * w(k, j);
        y(i, j) = s;
      }
    return y;
  };
  Mat<double> x(T, d);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < d; ++j)
      x(t, j) = m.token_embedding.value()(tokens[t], j) + m.position_embedding.value()(t, j);
  for (const auto& b : m.blocks) {
    Mat<double> qkv = affine(ln(x, b.ln1_gain.value(), b.ln1_bias.value()), b.w_qkv.value(), b.b_qkv.value());
    Mat<double> a = Mat<double>::Zero(T, d);
    for (int h = 0; h < H; ++h)
      for (int i = 0; i < T; ++i) {
        std::vector<double> s(i + 1);
        double mx = -1e300;
        for (int j = 0; j <= i; ++j) {
          double dot = 0;
          for (int k = 0; k < dh; ++k) dot += qkv(i, h * dh + k) * qkv(j, d + h * dh + k);
          s[j] = dot / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, s[j]);
        }
        double z = 0;
        for (auto& v : s) z += (v = std::exp(v - mx));
        for (int j = 0; j <= i; ++j)
          for (int k = 0; k < dh; ++k) a(i, h * dh + k) += s[j] / z * qkv(j, 2 * d + h * dh + k);
      }
    x += affine(a, b.w_out.value(), b.b_out.value());
    Mat<double> f = affine(ln(x, b.ln2_gain.value(), b.ln2_bias.value()), b.w_fc.value(), b.b_fc.value());
    for (int i = 0; i < f.size(); ++i) {
      const double u = f.data()[i];
      f.data()[i] = 0.5 * u * (1.0 + std::tanh(std::sqrt(2.0 / std::numbers::pi) * (u + 0.044715 * u * u * u)));
    }
    x += affine(f, b.w_proj.value(), b.b_proj.value());
  }
  Mat<double> hf = ln(x, m.lnf_gain.value(), m.lnf_bias.value());
  Mat<double> logits(T, cfg.vocab_size);
  for (int t = 0; t < T; ++t)
    for (int v = 0; v < cfg.vocab_size; ++v) {
      double s = 0;
      for (int k = 0; k < d; ++k) s += hf(t, k) * m.token_embedding.value()(v, k);
      logits(t, v) = s;
    }
  return logits;
}

}  // namespace

TEST(Tensor, SumOfSquaresGradientIsTwiceTheValue) {
  Mat<double> v(2, 3);
  v << 1, -2, 3, 0.5, 0, -4;
  auto p = Tensor<double>::parameter(v);
  backward(sum(square(p)));
  EXPECT_TRUE(p.grad().isApprox(2.0 * v));
}

TEST(Tensor, SecondBackwardWithoutZeroingDoublesGradients) {
  Mat<double> v(1, 2);
  v << 1.5, -1;
  auto p = Tensor<double>::parameter(v);
  backward(sum(square(p)));
  backward(sum(square(p)));
  EXPECT_TRUE(p.grad().isApprox(4.0 * v));
  p.zero_grad();
  EXPECT_FALSE(p.has_grad());
}

TEST(Tensor, BackwardOnDetachedValueThrows) {
  auto p = Tensor<double>::parameter(Mat<double>::Ones(1, 1));
  EXPECT_THROW(backward(sum(p).detach()), std::logic_error);
  EXPECT_THROW(backward(Tensor<double>::scalar(1.0)), std::logic_error);
}

TEST(Tensor, SharedSubexpressionAccumulatesOnce) {
  auto p = Tensor<double>::parameter(Mat<double>::Constant(1, 1, 3.0));
  auto q = square(p);  // used twice
  backward(sum(q + q));
  EXPECT_DOUBLE_EQ(p.grad()(0, 0), 12.0);
}

TEST(Adam, FollowsBiasCorrectedRule) {
  Mat<double> v(1, 2);
  v << 1.0, -2.0;
  auto p = Tensor<double>::parameter(v);
  Adam<double> opt({p}, AdamConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
  double m[2] = {0, 0}, s[2] = {0, 0}, x[2] = {1.0, -2.0};
  for (int step = 1; step <= 3; ++step) {
    opt.zero_grad();
    backward(sum(square(p)));
    opt.step();
    for (int i = 0; i < 2; ++i) {
      const double g = 2 * x[i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      s[i] = 0.999 * s[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, step));
      const double sh = s[i] / (1 - std::pow(0.999, step));
      x[i] -= 0.1 * mh / (std::sqrt(sh) + 1e-8);
    }
    EXPECT_NEAR(p.value()(0, 0), x[0], 1e-12);
    EXPECT_NEAR(p.value()(0, 1), x[1], 1e-12);
  }
}

TEST(Adam, ClipsToGlobalNorm) {
  auto p = Tensor<double>::parameter(Mat<double>::Constant(1, 1, 10.0));
  Adam<double> opt({p}, AdamConfig{0.1, 0.9, 0.999, 1e-8, 1.0});
  backward(sum(square(p)));
  const double norm = opt.step();
  EXPECT_DOUBLE_EQ(norm, 20.0);
  EXPECT_NEAR(p.grad()(0, 0), 1.0, 1e-12);
}

TEST(PolicyModel, ShapesAndLengthGuard) {
  PolicyModel<float> m(toy_lm());
  std::vector<TokenId> seq = {1, 2, 3, 4};
  auto out = m.forward(seq);
  EXPECT_EQ(out.logits.rows(), 4);
  EXPECT_EQ(out.logits.cols(), 11);
  EXPECT_EQ(out.values.rows(), 4);
  EXPECT_EQ(out.values.cols(), 1);
  std::vector<TokenId> too_long(33, 1);
  EXPECT_THROW(m.forward(too_long), std::invalid_argument);
  EXPECT_THROW(m.forward(std::vector<TokenId>{}), std::invalid_argument);
}

TEST(PolicyModel, ZeroTokenEmbeddingGivesUniformDistribution) {
  PolicyModel<double> m(toy_lm());
  m.token_embedding.mutable_value().setZero();
  std::vector<TokenId> seq = {1, 5, 2};
  const auto out = m.forward(seq);
  const Mat<double> lp = log_softmax_rows(out.logits.value());
  for (Eigen::Index i = 0; i < lp.size(); ++i) EXPECT_NEAR(lp.data()[i], -std::log(11.0), 1e-12);
}

TEST(PolicyModel, ValueHeadStartsAtZero) {
  PolicyModel<float> m(toy_lm());
  auto out = m.forward(std::vector<TokenId>{1, 2, 3});
  EXPECT_TRUE(out.values.value().isZero());
}

TEST(PolicyModel, CausalAttention) {
  PolicyModel<double> m(toy_lm());
  jitter(m.parameters(), 5);
  std::vector<TokenId> a = {1, 2, 3, 4, 5, 6};
  const auto base = m.forward(a).logits.value();
  for (std::size_t t = 0; t + 1 < a.size(); ++t) {
    auto b = a;
    b[t + 1] = (b[t + 1] + 3) % 11;
    const auto pert = m.forward(b).logits.value();
    EXPECT_TRUE(pert.topRows(static_cast<Eigen::Index>(t + 1)).isApprox(base.topRows(static_cast<Eigen::Index>(t + 1)), 0.0))
        << "position " << t;
  }
  auto longer = a;
  longer.push_back(7);
  EXPECT_EQ(m.forward(longer).logits.value().topRows(6), base);
}

TEST(PolicyModel, MatchesDenseReferenceForward) {
  PolicyModel<double> m(toy_lm());
  jitter(m.parameters(), 9);
  std::vector<TokenId> seq = {3, 1, 4, 1, 5, 9, 2, 6};
  const auto got = m.forward(seq).logits.value();
  const auto want = dense_forward(m, seq);
  EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-10);  // same arithmetic in 64-bit
}

TEST(PolicyModel, SoftmaxRowsSumToOne) {
  PolicyModel<float> m(toy_lm());
  jitter(m.parameters(), 2);
  const auto lp = log_softmax_rows(m.forward(std::vector<TokenId>{1, 2, 3, 4, 5}).logits.value());
  for (Eigen::Index i = 0; i < lp.rows(); ++i) EXPECT_NEAR(lp.row(i).array().exp().sum(), 1.0f, 1e-6f);
}

TEST(PolicyModel, IncrementalDecoderMatchesFullForward) {
  PolicyModel<double> m(toy_lm());
  jitter(m.parameters(), 4);
  std::vector<TokenId> seq = {1, 7, 3, 3, 9, 0, 2};
  const auto full = m.forward(seq);
  Decoder<double> dec(m);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    double v = 0;
    const auto row = dec.push(seq[t], &v);
    EXPECT_LT((row - full.logits.value().row(static_cast<Eigen::Index>(t))).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(v, full.values.value()(static_cast<Eigen::Index>(t), 0), 1e-10);
  }
}

TEST(GradientCheck, FullModel64BitAgainstCentralDifferences) {
  PolicyModel<double> m(toy_lm());
  jitter(m.parameters(), 11);
  const std::vector<TokenId> seq = {2, 7, 1, 8, 2, 8, 1};
  m.zero_grad();
  backward(lm_loss(m, seq));
  const double worst = claimrl::testing::max_relative_fd_error(m.parameters(), [&] { return lm_loss(m, seq).item(); });
  EXPECT_LT(worst, 1e-6);
}

TEST(GradientCheck, FullModel32BitAgainstCentralDifferences) {
  PolicyModel<double> ref(toy_lm());
  jitter(ref.parameters(), 11);
  PolicyModel<float> m(toy_lm());
  auto fp = m.parameters();
  auto dp = ref.parameters();
  for (std::size_t i = 0; i < fp.size(); ++i) fp[i].tensor.mutable_value() = dp[i].tensor.value().cast<float>();
  // Evaluate the 64-bit twin at the float-rounded point so only gradient error remains.
  for (std::size_t i = 0; i < fp.size(); ++i) dp[i].tensor.mutable_value() = fp[i].tensor.value().cast<double>();
  const std::vector<TokenId> seq = {2, 7, 1, 8, 2, 8, 1};
  m.zero_grad();
  backward(lm_loss(m, seq));
  const double worst = claimrl::testing::max_relative_fd_error(
      dp, [&] { return lm_loss(ref, seq).item(); }, fp);
  EXPECT_LT(worst, 1e-3);
}

TEST(GradientCheck, RewardNet64Bit) {
  RewardNetConfig c;
  c.vocab_size = 13;
  c.token_cap = 20;
  c.layers = 1;
  c.heads = 2;
  c.model_dim = 8;
  c.feedforward_dim = 12;
  c.seed = 1;
  RewardNet<double> net(c);
  jitter(net.parameters(), 6);
  const std::vector<TokenId> seq = {1, 4, 4, 12, 0, 3};
  const int label = 1;
  auto loss = [&] { return bce_with_logits(net.logit(seq), std::span<const int>(&label, 1)); };
  net.zero_grad();
  backward(loss());
  EXPECT_LT(claimrl::testing::max_relative_fd_error(net.parameters(), [&] { return loss().item(); }), 1e-6);
}

TEST(LogProbs, UniformLogitsGiveMinusLogV) {
  Mat<float> logits = Mat<float>::Zero(3, 256);
  const auto lp = log_probs(logits, std::vector<TokenId>{0, 100, 255});
  for (double v : lp) EXPECT_NEAR(v, -std::log(256.0), 1e-6);
}

TEST(LogProbs, LargeMarginIsNearZeroAndOutOfRangeThrows) {
  Mat<double> logits = Mat<double>::Zero(1, 4);
  logits(0, 2) = 1000.0;
  EXPECT_NEAR(log_probs(logits, std::vector<TokenId>{2})[0], 0.0, 1e-12);
  EXPECT_LE(log_probs(logits, std::vector<TokenId>{1})[0], 0.0);
  EXPECT_THROW(log_probs(logits, std::vector<TokenId>{4}), std::out_of_range);
  EXPECT_THROW(log_probs(logits, std::vector<TokenId>{-1}), std::out_of_range);
}

TEST(LogProbs, MatchesLongDoubleReference) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> d(0.0, 3.0);
  Mat<double> logits(5, 40);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = d(rng);
  std::vector<TokenId> targets = {0, 13, 39, 7, 21};
  const auto got = log_probs(logits, targets);
  for (int r = 0; r < 5; ++r) {
    long double z = 0;
    for (int c = 0; c < 40; ++c) z += std::exp(static_cast<long double>(logits(r, c)));
    const long double want = static_cast<long double>(logits(r, targets[r])) - std::log(z);
    EXPECT_NEAR(got[r], static_cast<double>(want), 1e-6);
  }
}

TEST(Sampling, GreedyEqualsArgmaxAndSeedsAreDeterministic) {
  PolicyModel<float> m(toy_lm());
  jitter(m.parameters(), 12, 0.5);
  const std::vector<TokenId> prompt = {1, 2};
  SamplerConfig greedy{0.0, 0, 10, -1};
  const auto g = sample(m, prompt, greedy, 1);
  std::vector<TokenId> seq = prompt;
  for (auto t : g) {
    const auto logits = m.forward(seq).logits.value();
    Eigen::Index arg = 0;
    logits.row(logits.rows() - 1).maxCoeff(&arg);
    EXPECT_EQ(t, arg);
    seq.push_back(t);
  }
  SamplerConfig hot{1.0, 0, 20, -1};
  EXPECT_EQ(sample(m, prompt, hot, 42), sample(m, prompt, hot, 42));
  EXPECT_NE(sample(m, prompt, hot, 42), sample(m, prompt, hot, 43));
}

TEST(Sampling, ForcedStopTokenEndsImmediately) {
  PolicyModel<float> m(toy_lm());
  // Logits are hf . E^T; a huge bias on the stop token's embedding through a
  // constant feature makes it certain.
  m.lnf_gain.mutable_value().setZero();
  m.lnf_bias.mutable_value().setZero();
  m.lnf_bias.mutable_value()(0, 0) = 1.0f;
  m.token_embedding.mutable_value().col(0).setZero();
  m.token_embedding.mutable_value()(5, 0) = 100.0f;
  SamplerConfig cfg{1.0, 0, 10, 5};
  EXPECT_EQ(sample(m, std::vector<TokenId>{1}, cfg, 3), std::vector<TokenId>{5});
}

TEST(Sampling, RespectsContextLimitAndMaxNew) {
  PolicyModel<float> m(toy_lm());
  SamplerConfig cfg{1.0, 0, 100, -1};
  std::vector<TokenId> prompt(30, 1);
  EXPECT_EQ(sample(m, prompt, cfg, 1).size(), 2u);
  cfg.max_new_tokens = 3;
  EXPECT_EQ(sample(m, std::vector<TokenId>{1}, cfg, 1).size(), 3u);
  cfg.max_new_tokens = 0;
  EXPECT_THROW(sample(m, std::vector<TokenId>{1}, cfg, 1), std::invalid_argument);
  cfg.max_new_tokens = 1;
  EXPECT_THROW(sample(m, std::vector<TokenId>{}, cfg, 1), std::invalid_argument);
}

TEST(Sampling, TopKRestrictsSupport) {
  PolicyModel<float> m(toy_lm());
  jitter(m.parameters(), 21, 0.5);
  const std::vector<TokenId> prompt = {4};
  const auto logits = m.forward(prompt).logits.value();
  Eigen::Index arg = 0;
  logits.row(0).maxCoeff(&arg);
  SamplerConfig cfg{1.0, 1, 1, -1};
  for (std::uint64_t s = 0; s < 20; ++s) EXPECT_EQ(sample(m, prompt, cfg, s)[0], arg);
}

TEST(Perplexity, UniformModelOverBytes) {
  LmConfig c = toy_lm(256);
  PolicyModel<float> m(c);
  m.token_embedding.mutable_value().setZero();
  std::vector<std::vector<TokenId>> seqs = {{1, 2, 3, 4}, {200, 100, 50}};
  EXPECT_NEAR(perplexity(m, std::span<const std::vector<TokenId>>(seqs)), 256.0, 1e-3);
}

TEST(RewardNet, ZeroHeadGivesHalfAndTruncatesAtCap) {
  RewardNetConfig c;
  c.vocab_size = 300;
  RewardNet<float> net(c);
  std::vector<TokenId> ids(600);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<TokenId>(i % 300);
  EXPECT_FLOAT_EQ(net.probability(ids), 0.5f);
  EXPECT_TRUE(classify_label(net.probability(ids)));
  jitter(net.parameters(), 1);
  std::vector<TokenId> prefix(ids.begin(), ids.begin() + 500);
  EXPECT_EQ(net.probability(ids), net.probability(prefix));
  const float p = net.probability(ids);
  EXPECT_GT(p, 0.0f);
  EXPECT_LT(p, 1.0f);
}

TEST(Checkpoint, PolicyRoundTripIsBitExact) {
  claimrl::testing::TempDir dir;
  PolicyModel<float> m(toy_lm());
  jitter(m.parameters(), 3);
  m.save(dir.path / "p.ckpt");
  const auto back = PolicyModel<float>::load(dir.path / "p.ckpt");
  EXPECT_TRUE(back.same_parameters(m));
  EXPECT_EQ(back.config(), m.config());

  PolicyModel<double> md(toy_lm());
  jitter(md.parameters(), 4);
  md.save(dir.path / "d.ckpt");
  EXPECT_TRUE(PolicyModel<double>::load(dir.path / "d.ckpt").same_parameters(md));
}

TEST(Checkpoint, HeaderLayoutAndKindCheck) {
  claimrl::testing::TempDir dir;
  RewardNetConfig c;
  c.vocab_size = 270;
  RewardNet<float> net(c);
  net.save(dir.path / "r.ckpt");
  const auto a = load_archive(dir.path / "r.ckpt");
  EXPECT_EQ(a.kind, "reward");
  EXPECT_EQ(a.dtype, "f32");
  EXPECT_TRUE(a.tensors.contains("token_embedding"));
  EXPECT_THROW(PolicyModel<float>::load(dir.path / "r.ckpt"), std::runtime_error);
  std::ifstream in(dir.path / "r.ckpt", std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  EXPECT_EQ(std::string(magic, 8), "CLRMCKPT");
}

TEST(Checkpoint, CorruptFileIsRejected) {
  claimrl::testing::TempDir dir;
  std::ofstream(dir.path / "bad.ckpt") << "not a checkpoint";
  EXPECT_THROW(load_archive(dir.path / "bad.ckpt"), std::runtime_error);
}
