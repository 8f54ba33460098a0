#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "claimrl/neural/generation.hpp"
#include "claimrl/sft.hpp"
#include "test_support.hpp"

using namespace claimrl;
using corpus::ClaimRecord;

namespace {

std::size_t occurrences(const std::string& s, std::string_view needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + needle.size())) ++n;
  return n;
}

struct Fixture {
  std::vector<ClaimRecord> train, val;
  tok::Vocabulary vocab;
  nn::LmConfig lm;
};

Fixture small_fixture(std::size_t n = 200) {
  corpus::FixtureConfig fc;
  fc.size = n;
  auto ds = corpus::synthesize_fixture_corpus(fc);
  Fixture f;
  f.val.assign(ds.end() - 20, ds.end());
  f.train.assign(ds.begin(), ds.end() - 20);
  f.vocab = tok::train_vocab(f.train, 400);
  f.lm.vocab_size = static_cast<int>(f.vocab.size());
  f.lm.context_length = 64;
  f.lm.layers = 1;
  f.lm.heads = 2;
  f.lm.model_dim = 32;
  f.lm.feedforward_dim = 64;
  f.lm.seed = 1;
  return f;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(FormatTrainingText, Concatenation) {
  ClaimRecord r{"D", "A", 1, {corpus::ComponentTag::ML}, "1. X."};
  EXPECT_EQ(sft::format_training_text(r), "<|start_of_claim|>1. X.<|end_of_claim|>");
}

TEST(FormatTrainingText, ExactlyOneTagEachOnFixture) {
  corpus::FixtureConfig fc;
  fc.size = 300;
  for (const auto& r : corpus::synthesize_fixture_corpus(fc)) {
    const auto s = sft::format_training_text(r);
    EXPECT_EQ(occurrences(s, tok::kStartTag), 1u);
    EXPECT_EQ(occurrences(s, tok::kEndTag), 1u);
  }
}

TEST(TrainingTokens, TruncatesToContext) {
  const auto f = small_fixture(40);
  const auto ids = sft::training_tokens(f.vocab, f.train[0], 16);
  EXPECT_EQ(ids.size(), 16u);
  EXPECT_EQ(ids.front(), f.vocab.start_id());
  const auto full = sft::training_tokens(f.vocab, f.train[0], 100000);
  EXPECT_EQ(full.back(), f.vocab.end_id());
}

TEST(TrainSft, EvalOnlyLeavesParametersUnchanged) {
  const auto f = small_fixture();
  nn::PolicyModel<float> m(f.lm);
  sft::SftConfig cfg;
  cfg.max_steps = 0;
  const auto r = sft::train_sft(m, f.train, f.val, f.vocab, cfg);
  EXPECT_TRUE(r.model.same_parameters(m));
  EXPECT_EQ(r.steps, 0);
  EXPECT_EQ(r.initial_val_perplexity, r.final_val_perplexity);
  ASSERT_EQ(r.log.size(), 1u);
  EXPECT_FALSE(r.log[0].loss.has_value());
}

TEST(TrainSft, EmptyTrainingSetIsAnError) {
  const auto f = small_fixture(40);
  sft::SftConfig cfg;
  EXPECT_THROW(sft::train_sft(nn::PolicyModel<float>(f.lm), {}, f.val, f.vocab, cfg), std::invalid_argument);
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(TrainSft, MemorizesASingleSequence) {
  auto f = small_fixture(40);
  std::vector<ClaimRecord> one = {f.train[0]};
  one[0].claim_text = one[0].claim_text.substr(0, 120);
  sft::SftConfig cfg;
  cfg.epochs = 500;
  cfg.batch_size = 1;
  cfg.eval_every = 100;
  const auto r = sft::train_sft(nn::PolicyModel<float>(f.lm), one, one, f.vocab, cfg);
  EXPECT_EQ(r.steps, 500);
  EXPECT_LT(r.final_val_perplexity, 1.1);
}

TEST(TrainSft, LossFallsOverFiftySteps) {
  const auto f = small_fixture();
  sft::SftConfig cfg;
  cfg.epochs = 3;  // 23 batches per epoch
  cfg.max_steps = 60;
  cfg.eval_every = 1000;
  const auto r = sft::train_sft(nn::PolicyModel<float>(f.lm), f.train, f.val, f.vocab, cfg);
  std::vector<double> loss;
  for (const auto& row : r.log)
    if (row.loss) loss.push_back(*row.loss);
  ASSERT_GE(loss.size(), 60u);
  double head = 0, tail = 0;
  for (int i = 0; i < 10; ++i) {
    head += loss[static_cast<std::size_t>(i)];
    tail += loss[static_cast<std::size_t>(45 + i)];
  }
  EXPECT_LT(tail, head);
}

TEST(TrainSft, BitIdenticalAcrossRuns) {
  const auto f = small_fixture();
  sft::SftConfig cfg;
  cfg.max_steps = 25;
  cfg.eval_every = 10;
  cfg.seed = 5;
  claimrl::testing::TempDir d;
  const auto a = sft::train_sft(nn::PolicyModel<float>(f.lm), f.train, f.val, f.vocab, cfg);
  const auto b = sft::train_sft(nn::PolicyModel<float>(f.lm), f.train, f.val, f.vocab, cfg);
  a.model.save(d.path / "a.ckpt");
  b.model.save(d.path / "b.ckpt");
  EXPECT_EQ(slurp(d.path / "a.ckpt"), slurp(d.path / "b.ckpt"));
  sft::write_log_csv(d.path / "a.csv", a.log);
  sft::write_log_csv(d.path / "b.csv", b.log);
  EXPECT_EQ(slurp(d.path / "a.csv"), slurp(d.path / "b.csv"));
  EXPECT_EQ(slurp(d.path / "a.csv").substr(0, 25), "step,loss,val_perplexity\n");
}

TEST(TrainSft, ReportedPerplexityMatchesIndependentEvaluation) {
  const auto f = small_fixture();
  sft::SftConfig cfg;
  cfg.max_steps = 30;
  const auto r = sft::train_sft(nn::PolicyModel<float>(f.lm), f.train, f.val, f.vocab, cfg);
  std::vector<std::vector<tok::TokenId>> seqs;
  for (const auto& rec : f.val) seqs.push_back(f.vocab.encode(sft::format_training_text(rec)));
  const double direct = nn::perplexity(r.model, std::span<const std::vector<tok::TokenId>>(seqs));
  EXPECT_NEAR(r.final_val_perplexity, direct, 1e-6);
  EXPECT_NEAR(r.final_val_perplexity, sft::perplexity(r.model, f.val, f.vocab), 1e-6);
  ASSERT_TRUE(r.log.back().val_perplexity.has_value());
  EXPECT_EQ(*r.log.back().val_perplexity, r.final_val_perplexity);
}

TEST(TrainSft, VocabularyMismatchIsRejected) {
  auto f = small_fixture(40);
  f.lm.vocab_size += 1;
  sft::SftConfig cfg;
  EXPECT_THROW(sft::train_sft(nn::PolicyModel<float>(f.lm), f.train, f.val, f.vocab, cfg), std::invalid_argument);
}
