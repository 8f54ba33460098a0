#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "run_config.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using claimrl::cli::ConfigError;
using claimrl::cli::RunConfig;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Result {
  int status = -1;
  std::string out, err;
};

// Runs the claimrl binary with the given argument string; stdout and stderr land in files under dir.
Result claimrl_cli(const fs::path& dir, const std::string& args) {
  static int counter = 0;
  const auto tag = std::to_string(counter++);
  const fs::path out = dir / ("stdout" + tag), err = dir / ("stderr" + tag);
  const std::string cmd =
      std::string("'") + CLAIMRL_CLI_PATH + "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
  const int raw = std::system(cmd.c_str());
  Result r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

const char* kTinyModel =
    " --set tokenizer.vocab_size=300 --set model.context_length=48 --set model.layers=1 --set model.heads=2"
    " --set model.model_dim=16 --set model.feedforward_dim=16";

// Every stage of the pipeline on a small fixture, writing into root/<stage>.
void run_pipeline(const fs::path& root) {
  fs::create_directories(root);
  auto ok = [&](const std::string& args) {
    const auto r = claimrl_cli(root, args);
    ASSERT_EQ(r.status, 0) << args << "\n" << r.err;
  };
  ok("make-fixture --size 120 --out " + q(root / "fx"));
  ok("build-corpus --component-table " + q(root / "fx/component_table.tsv") + " --granted-claims " +
     q(root / "fx/claims_granted.tsv") + " --pregrant-claims " + q(root / "fx/claims_pregrant.tsv") +
     " --crosswalk " + q(root / "fx/crosswalk.tsv") + " --out " + q(root / "corpus"));
  ok("train-sft --train " + q(root / "corpus/train.jsonl") + " --val " + q(root / "corpus/val.jsonl") +
     " --set sft.max_steps=4 --set sft.eval_every=2" + kTinyModel + " --out " + q(root / "sft"));
  ok("train-rm --train " + q(root / "corpus/train.jsonl") + " --val " + q(root / "corpus/val.jsonl") + " --vocab " +
     q(root / "sft/vocab.jsonl") + " --set rm.epochs=1 --set rm.model_dim=16 --set rm.feedforward_dim=16" +
     " --out " + q(root / "rm"));
  ok("train-ppo --sft-checkpoint " + q(root / "sft/sft.ckpt") + " --vocab " + q(root / "sft/vocab.jsonl") +
     " --data " + q(root / "corpus/train.jsonl") + " --reward terms --steps 2" +
     " --set ppo.rollouts_per_step=2 --set ppo.prompt_token_count=10 --set ppo.max_new_tokens=8 --out " +
     q(root / "ppo"));
  ok("eval-granted-ratio --sft-checkpoint " + q(root / "sft/sft.ckpt") + " --policy-checkpoint " +
     q(root / "ppo/policy.ckpt") + " --rm-checkpoint " + q(root / "rm/rm.ckpt") + " --vocab " +
     q(root / "sft/vocab.jsonl") + " --data " + q(root / "corpus/test.jsonl") +
     " --rows 3 --set eval.prompt_token_count=10 --set eval.max_new_tokens=8 --out " + q(root / "eval"));
  ok("report --log " + q(root / "ppo/train_log.csv") + " --granted-ratio " + q(root / "eval/granted_ratio.json") +
     " --out " + q(root / "report"));
}

}  // namespace

TEST(RunConfig, UnknownAndDuplicateKeysNameTheLine) {
  RunConfig c;
  try {
    c.parse_text("seed = 3\n\n# comment\nmodel.layerz = 2\n", "run.cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("run.cfg:4: unknown key 'model.layerz'"), std::string::npos) << e.what();
  }
  try {
    RunConfig d;
    d.parse_text("seed = 1\nseed = 2\n", "x.cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("x.cfg:2: duplicate key 'seed'"), std::string::npos) << e.what();
  }
  RunConfig e;
  EXPECT_THROW(e.parse_text("no equals sign\n", "y.cfg"), ConfigError);
  EXPECT_THROW(e.set("nope", "1"), ConfigError);
}

TEST(RunConfig, TypedValuesAndComments) {
  RunConfig c;
  c.parse_text("  seed=42   # trailing comment\nppo.kl_coef = 0.5\nrm.shuffle_labels = true\n", "t");
  EXPECT_EQ(c.uinteger("seed"), 42u);
  EXPECT_EQ(c.real("ppo.kl_coef"), 0.5);
  EXPECT_TRUE(c.boolean("rm.shuffle_labels"));
  EXPECT_EQ(c.integer("sft.max_steps"), -1);
  c.set("seed", "-1");
  EXPECT_THROW(c.uinteger("seed"), ConfigError);
  c.set("ppo.kl_coef", "0.5x");
  EXPECT_THROW(c.real("ppo.kl_coef"), ConfigError);
  c.set("rm.shuffle_labels", "yes");
  EXPECT_THROW(c.boolean("rm.shuffle_labels"), ConfigError);
  c.set("model.layers", "2.0");
  EXPECT_THROW(c.integer("model.layers"), ConfigError);
}

TEST(RunConfig, SnapshotHoldsEveryKnownKey) {
  RunConfig c;
  const auto j = c.snapshot();
  EXPECT_EQ(j.size(), claimrl::cli::known_keys().size());
  for (const auto& k : claimrl::cli::known_keys()) EXPECT_EQ(j.at(k.key), k.default_value);
}

TEST(Cli, ListKeysPrintsDefaults) {
  claimrl::testing::TempDir d;
  const auto r = claimrl_cli(d.path, "--list-keys");
  EXPECT_EQ(r.status, 0);
  for (const auto& k : claimrl::cli::known_keys())
    EXPECT_NE(r.out.find(k.key + " = " + k.default_value), std::string::npos) << k.key;
}

TEST(Cli, UsageErrorsExitTwo) {
  claimrl::testing::TempDir d;
  EXPECT_EQ(claimrl_cli(d.path, "").status, 2);
  EXPECT_EQ(claimrl_cli(d.path, "no-such-command").status, 2);
  EXPECT_EQ(claimrl_cli(d.path, "make-fixture --bogus-flag 1 --out " + q(d.path / "o")).status, 2);
  EXPECT_EQ(claimrl_cli(d.path, "make-fixture --set nokey=1 --out " + q(d.path / "o")).status, 2);
  EXPECT_EQ(claimrl_cli(d.path, "make-fixture --set fixture.size --out " + q(d.path / "o")).status, 2);
  EXPECT_EQ(claimrl_cli(d.path, "make-fixture").status, 2);  // no --out
  EXPECT_EQ(claimrl_cli(d.path, "make-fixture --config " + q(d.path / "absent.cfg") + " --out " + q(d.path / "o"))
                .status,
            2);
  EXPECT_EQ(claimrl_cli(d.path, "make-fixture --size ten --out " + q(d.path / "o")).status, 2);
  EXPECT_FALSE(fs::exists(d.path / "o"));
  EXPECT_FALSE(fs::exists(d.path / "o.quarantine"));
  EXPECT_FALSE(fs::exists(d.path / "o.partial"));
}

TEST(Cli, ConfigFileErrorsNameFileAndLine) {
  claimrl::testing::TempDir d;
  std::ofstream(d.path / "run.cfg") << "seed = 1\nfixture.sise = 5\n";
  const auto r = claimrl_cli(d.path, "make-fixture --config " + q(d.path / "run.cfg") + " --out " + q(d.path / "o"));
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("run.cfg:2: unknown key 'fixture.sise'"), std::string::npos) << r.err;
}

TEST(Cli, MissingInputsExitTwoAndNameTheFlag) {
  claimrl::testing::TempDir d;
  ASSERT_EQ(claimrl_cli(d.path, "make-fixture --size 40 --out " + q(d.path / "fx")).status, 0);
  const std::string tables = " --component-table " + q(d.path / "fx/component_table.tsv") + " --granted-claims " +
                             q(d.path / "fx/claims_granted.tsv") + " --pregrant-claims " +
                             q(d.path / "fx/claims_pregrant.tsv");
  const auto missing = claimrl_cli(d.path, "build-corpus" + tables + " --out " + q(d.path / "c"));
  EXPECT_EQ(missing.status, 2);
  EXPECT_NE(missing.err.find("--crosswalk"), std::string::npos) << missing.err;

  const auto absent =
      claimrl_cli(d.path, "build-corpus" + tables + " --crosswalk " + q(d.path / "nope.tsv") + " --out " + q(d.path / "c"));
  EXPECT_EQ(absent.status, 2);
  EXPECT_NE(absent.err.find("nope.tsv"), std::string::npos) << absent.err;
  EXPECT_FALSE(fs::exists(d.path / "c"));
}

TEST(Cli, MakeFixtureWritesTablesStatsAndManifest) {
  claimrl::testing::TempDir d;
  const auto r = claimrl_cli(d.path, "make-fixture --size 50 --seed 9 --out " + q(d.path / "fx"));
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(r.out.rfind("rows\tgranted\tgranted_avg_len\tpregrant\tpregrant_avg_len\n50\t", 0), 0u) << r.out;
  for (const char* f : {"dataset.jsonl", "component_table.tsv", "claims_granted.tsv", "claims_pregrant.tsv",
                        "crosswalk.tsv", "manifest_make-fixture.json"})
    EXPECT_TRUE(fs::exists(d.path / "fx" / f)) << f;
  EXPECT_FALSE(fs::exists(d.path / "fx.partial"));

  const auto m = nlohmann::json::parse(slurp(d.path / "fx" / "manifest_make-fixture.json"));
  EXPECT_EQ(m.at("command"), "make-fixture");
  EXPECT_EQ(m.at("seed"), 9);
  EXPECT_EQ(m.at("config").at("fixture.size"), "50");
  EXPECT_GE(m.at("elapsed_seconds").get<double>(), 0.0);
  EXPECT_TRUE(m.at("finished_at").is_string());
  const auto outputs = m.at("outputs").get<std::vector<std::string>>();
  EXPECT_EQ(outputs.size(), 5u);  // the manifest does not list itself
  for (const auto& o : outputs) EXPECT_TRUE(fs::exists(d.path / "fx" / o)) << o;
}

TEST(Cli, ComponentWithNoRecordsWarnsAndSucceeds) {
  claimrl::testing::TempDir d;
  ASSERT_EQ(claimrl_cli(d.path, "make-fixture --size 30 --out " + q(d.path / "fx")).status, 0);
  // Clear the NLP column so no record carries that label.
  std::ifstream in(d.path / "fx/component_table.tsv");
  std::ofstream out(d.path / "components_no_nlp.tsv");
  std::string line;
  std::getline(in, line);
  out << line << "\n";
  std::size_t nlp_col = 0;
  {
    std::stringstream ss(line);
    std::string cell;
    for (std::size_t i = 0; std::getline(ss, cell, '\t'); ++i)
      if (cell == "NLP") nlp_col = i;
  }
  ASSERT_GT(nlp_col, 1u);
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell, row;
    for (std::size_t i = 0; std::getline(ss, cell, '\t'); ++i) row += (i ? "\t" : "") + (i == nlp_col ? "0" : cell);
    out << row << "\n";
  }
  out.close();

  const auto r = claimrl_cli(d.path, "build-corpus --component NLP --component-table " +
                                         q(d.path / "components_no_nlp.tsv") + " --granted-claims " +
                                         q(d.path / "fx/claims_granted.tsv") + " --pregrant-claims " +
                                         q(d.path / "fx/claims_pregrant.tsv") + " --crosswalk " +
                                         q(d.path / "fx/crosswalk.tsv") + " --out " + q(d.path / "c"));
  EXPECT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.err.find("warning: no records carry component NLP"), std::string::npos) << r.err;
  EXPECT_EQ(slurp(d.path / "c/dataset.jsonl"), "");
  EXPECT_FALSE(fs::exists(d.path / "c/train.jsonl"));
  EXPECT_TRUE(fs::exists(d.path / "c/manifest_build-corpus.json"));

  const auto bad = claimrl_cli(d.path, "build-corpus --component QUANTUM --component-table " +
                                           q(d.path / "components_no_nlp.tsv") + " --granted-claims " +
                                           q(d.path / "fx/claims_granted.tsv") + " --pregrant-claims " +
                                           q(d.path / "fx/claims_pregrant.tsv") + " --crosswalk " +
                                           q(d.path / "fx/crosswalk.tsv") + " --out " + q(d.path / "c2"));
  EXPECT_EQ(bad.status, 2);
}

TEST(Cli, RuntimeFailureIsQuarantined) {
  claimrl::testing::TempDir d;
  std::ofstream(d.path / "train.jsonl") << "{not json\n";
  std::ofstream(d.path / "val.jsonl") << "";
  const auto r = claimrl_cli(d.path, "train-sft --train " + q(d.path / "train.jsonl") + " --val " +
                                         q(d.path / "val.jsonl") + " --out " + q(d.path / "sft"));
  EXPECT_EQ(r.status, 1) << r.err;
  EXPECT_FALSE(fs::exists(d.path / "sft"));
  EXPECT_FALSE(fs::exists(d.path / "sft.partial"));
  ASSERT_TRUE(fs::exists(d.path / "sft.quarantine" / "error.txt"));
  EXPECT_FALSE(slurp(d.path / "sft.quarantine" / "error.txt").empty());
  EXPECT_NE(r.err.find("sft.quarantine"), std::string::npos) << r.err;
}

TEST(Cli, InvalidModelConfigExitsTwo) {
  claimrl::testing::TempDir d;
  ASSERT_EQ(claimrl_cli(d.path, "make-fixture --size 40 --out " + q(d.path / "fx")).status, 0);
  const auto r = claimrl_cli(d.path, "train-sft --train " + q(d.path / "fx/dataset.jsonl") + " --val " +
                                         q(d.path / "fx/dataset.jsonl") +
                                         " --set model.context_length=8 --out " + q(d.path / "sft"));
  EXPECT_EQ(r.status, 2) << r.err;
  EXPECT_NE(r.err.find("context_length"), std::string::npos) << r.err;
}

TEST(Cli, PipelineOutputsAreByteIdenticalAcrossRuns) {
  claimrl::testing::TempDir d;
  run_pipeline(d.path / "a");
  run_pipeline(d.path / "b");
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(d.path / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), d.path / "a");
    const auto name = rel.filename().string();
    if (name.rfind("manifest_", 0) == 0 || name.rfind("std", 0) == 0) continue;
    ASSERT_TRUE(fs::exists(d.path / "b" / rel)) << rel;
    EXPECT_EQ(slurp(e.path()), slurp(d.path / "b" / rel)) << rel;
    ++compared;
  }
  EXPECT_GE(compared, 20u);
  for (const char* f : {"sft/sft.ckpt", "rm/rm.ckpt", "ppo/policy.ckpt", "ppo/samples.jsonl", "eval/granted_ratio.json",
                        "report/reward_mean.svg", "report/granted_ratio.json"})
    EXPECT_TRUE(fs::exists(d.path / "a" / f)) << f;

  const auto m = nlohmann::json::parse(slurp(d.path / "a/ppo/manifest_train-ppo.json"));
  EXPECT_EQ(m.at("inputs").at("paths.sft_checkpoint").at("sha256").get<std::string>().size(), 64u);
  EXPECT_EQ(m.at("config").at("reward.kind"), "terms");
}
