// claimrl: command-line driver for the corpus -> SFT -> reward model -> PPO
// pipeline. Each subcommand wraps one module operation.

#include <chrono>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "claimrl/corpus.hpp"
#include "claimrl/evalreport.hpp"
#include "claimrl/ppo.hpp"
#include "claimrl/rewards.hpp"
#include "claimrl/sft.hpp"
#include "claimrl/tokenizer.hpp"
#include "claimrl/util.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace claimrl;
using cli::ConfigError;
using cli::RunConfig;

namespace {

// Stage offsets mixed into the global seed.
enum SeedStream : std::uint64_t { kSplitSeed = 1, kSftSeed, kRmSeed, kPpoSeed, kEvalSeed };

std::uint64_t stage_seed(const RunConfig& cfg, SeedStream s, std::uint64_t index = 0) {
  return util::derive_seed(cfg.uinteger("seed"), s, index);
}

struct InputSpec {
  std::string key;
  std::string flag;
  bool required = true;
};

struct Context {
  RunConfig cfg;
  fs::path out;
  fs::path staging;
  std::vector<std::string> outputs;

  fs::path output(const std::string& name) {
    outputs.push_back(name);
    return staging / name;
  }
  fs::path input(const std::string& key) const { return cfg.str(key); }
};

struct Command {
  std::string name;
  CLI::App* app = nullptr;
  std::string config_file;
  std::vector<std::pair<std::string, std::string>> overrides;  // applied in order
  std::vector<InputSpec> inputs;
  std::function<void(Context&)> body;
};

// Binds a flag to a config key so that it overrides the file value.
void bind(Command& c, const std::string& flag, const std::string& key, const std::string& help) {
  c.app->add_option_function<std::string>(
      flag, [&c, key](const std::string& v) { c.overrides.emplace_back(key, v); }, help + " [" + key + "]");
}

void add_common(Command& c) {
  c.app->add_option("--config", c.config_file, "key = value run-config file")->check(CLI::ExistingFile);
  c.app->add_option_function<std::vector<std::string>>(
      "--set",
      [&c](const std::vector<std::string>& kvs) {
        for (const auto& kv : kvs) {
          const auto eq = kv.find('=');
          if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value, got '" + kv + "'");
          c.overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
        }
      },
      "override any config key (repeatable)");
  bind(c, "--seed", "seed", "global seed");
  bind(c, "--out", "paths.out", "output directory");
}

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string json_text(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

int run(Command& c) {
  const auto started = std::chrono::steady_clock::now();
  Context ctx;
  try {
    if (!c.config_file.empty()) ctx.cfg.load_file(c.config_file);
    for (const auto& [k, v] : c.overrides) ctx.cfg.set(k, v);
    for (const auto& in : c.inputs) {
      const auto& p = ctx.cfg.str(in.key);
      if (p.empty()) {
        if (in.required) throw ConfigError("missing required " + in.flag + " (" + in.key + ")");
        continue;
      }
      if (!fs::exists(p)) throw ConfigError(in.flag + ": no such file '" + p + "'");
    }
    if (ctx.cfg.str("paths.out").empty()) throw ConfigError("missing required --out (paths.out)");
    ctx.out = ctx.cfg.str("paths.out");
    if (fs::exists(ctx.out) && !fs::is_directory(ctx.out))
      throw ConfigError("--out: '" + ctx.out.string() + "' exists and is not a directory");
  } catch (const ConfigError& e) {
    std::cerr << "claimrl " << c.name << ": " << e.what() << "\n";
    return 2;
  }

  ctx.staging = ctx.out.string() + ".partial";
  const fs::path quarantine = ctx.out.string() + ".quarantine";
  std::error_code ec;
  fs::remove_all(ctx.staging, ec);
  fs::create_directories(ctx.staging, ec);
  if (ec) {
    std::cerr << "claimrl " << c.name << ": cannot create " << ctx.staging << ": " << ec.message() << "\n";
    return 1;
  }

  auto fail = [&](const std::string& message, const std::string& dump, int status) {
    std::cerr << "claimrl " << c.name << ": " << message << "\n";
    if (status == 2 && ctx.outputs.empty()) {
      fs::remove_all(ctx.staging, ec);
      return status;
    }
    try {
      write_text(ctx.staging / "error.txt", message + "\n");
      if (!dump.empty()) write_text(ctx.staging / "failed_batch.jsonl", dump);
    } catch (...) {
    }
    fs::remove_all(quarantine, ec);
    fs::rename(ctx.staging, quarantine, ec);
    std::cerr << "claimrl " << c.name << ": partial outputs left in " << quarantine.string() << "\n";
    return status;
  };

  try {
    c.body(ctx);

    nlohmann::ordered_json manifest;
    manifest["command"] = c.name;
    manifest["seed"] = ctx.cfg.uinteger("seed");
    manifest["config"] = ctx.cfg.snapshot();
    nlohmann::ordered_json inputs = nlohmann::ordered_json::object();
    if (!c.config_file.empty()) inputs["config"] = {{"path", c.config_file}, {"sha256", util::sha256_file(c.config_file)}};
    for (const auto& in : c.inputs) {
      const auto& p = ctx.cfg.str(in.key);
      if (!p.empty()) inputs[in.key] = {{"path", p}, {"sha256", util::sha256_file(p)}};
    }
    manifest["inputs"] = inputs;
    manifest["outputs"] = ctx.outputs;
    manifest["elapsed_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    manifest["finished_at"] = now_utc();
    const std::string manifest_name = "manifest_" + c.name + ".json";
    write_text(ctx.staging / manifest_name, json_text(manifest));
    ctx.outputs.push_back(manifest_name);

    fs::create_directories(ctx.out);
    for (const auto& name : ctx.outputs) fs::rename(ctx.staging / name, ctx.out / name);
    fs::remove_all(ctx.staging);
    fs::remove_all(quarantine, ec);
    return 0;
  } catch (const ConfigError& e) {
    return fail(e.what(), "", 2);
  } catch (const ppo::NonFiniteLoss& e) {
    return fail(e.what(), e.dump(), 1);
  } catch (const std::exception& e) {
    return fail(e.what(), "", 1);
  }
}

// ---------------------------------------------------------------------------
// Config -> module types

corpus::FixtureConfig fixture_config(const RunConfig& cfg) {
  corpus::FixtureConfig f;
  f.seed = cfg.uinteger("fixture.seed");
  f.size = cfg.uinteger("fixture.size");
  f.granted_len_range = {cfg.uinteger("fixture.granted_min_chars"), cfg.uinteger("fixture.granted_max_chars")};
  f.pregrant_len_range = {cfg.uinteger("fixture.pregrant_min_chars"), cfg.uinteger("fixture.pregrant_max_chars")};
  f.granted_term_rate = cfg.real("fixture.granted_term_rate");
  f.pregrant_term_rate = cfg.real("fixture.pregrant_term_rate");
  return f;
}

nn::LmConfig lm_config(const RunConfig& cfg, std::size_t vocab_size) {
  nn::LmConfig m;
  m.vocab_size = static_cast<int>(vocab_size);
  m.context_length = static_cast<int>(cfg.integer("model.context_length"));
  m.layers = static_cast<int>(cfg.integer("model.layers"));
  m.heads = static_cast<int>(cfg.integer("model.heads"));
  m.model_dim = static_cast<int>(cfg.integer("model.model_dim"));
  m.feedforward_dim = static_cast<int>(cfg.integer("model.feedforward_dim"));
  m.seed = stage_seed(cfg, kSftSeed, 0);
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return m;
}

std::vector<std::string> parse_terms(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  std::string t;
  while (std::getline(ss, t, ',')) {
    while (!t.empty() && t.front() == ' ') t.erase(t.begin());
    while (!t.empty() && t.back() == ' ') t.pop_back();
    if (t.empty()) continue;
    out.push_back(t + " ");
  }
  if (out.empty()) throw ConfigError("reward.terms: empty term list");
  return out;
}

rewards::RewardSpec reward_spec(const RunConfig& cfg, const std::shared_ptr<const tok::Vocabulary>& vocab) {
  const std::string kind = cfg.str("reward.kind");
  rewards::RewardSpec spec;
  if (kind == "length") {
    spec = rewards::RewardSpec::length(cfg.uinteger("reward.max_len"));
  } else if (kind == "terms") {
    spec = rewards::RewardSpec::limiting_terms(parse_terms(cfg.str("reward.terms")));
  } else if (kind == "joint") {
    spec = rewards::RewardSpec::joint(cfg.uinteger("reward.max_len"), parse_terms(cfg.str("reward.terms")));
  } else if (kind == "model") {
    if (cfg.str("paths.rm_checkpoint").empty()) throw ConfigError("--reward model needs --rm-checkpoint");
    auto net = std::make_shared<nn::RewardNet<float>>(nn::RewardNet<float>::load(cfg.str("paths.rm_checkpoint")));
    if (static_cast<std::size_t>(net->config().vocab_size) != vocab->size())
      throw ConfigError("--rm-checkpoint: reward model vocabulary does not match --vocab");
    spec = rewards::RewardSpec::learned(std::move(net), vocab);
  } else {
    throw ConfigError("--reward: expected length, terms, joint or model, got '" + kind + "'");
  }
  const std::string inc = cfg.str("reward.include_prompt");
  if (inc != "auto") spec.include_prompt = cfg.boolean("reward.include_prompt");
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("reward: ") + e.what());
  }
  return spec;
}

std::vector<corpus::ClaimRecord> load_records(const Context& ctx, const std::string& key) {
  return corpus::read_jsonl(ctx.input(key));
}

// ---------------------------------------------------------------------------
// Commands

void cmd_make_fixture(Context& ctx) {
  const auto records = corpus::synthesize_fixture_corpus(fixture_config(ctx.cfg));
  corpus::write_jsonl(ctx.output("dataset.jsonl"), records);
  corpus::write_source_tables(ctx.staging, records);
  for (const char* n : {"component_table.tsv", "claims_granted.tsv", "claims_pregrant.tsv", "crosswalk.tsv"})
    ctx.outputs.emplace_back(n);
  std::cout << corpus::format_stats(corpus::compute_stats(records));
}

void cmd_build_corpus(Context& ctx) {
  corpus::ComponentTag tag;
  try {
    tag = corpus::parse_component(ctx.cfg.str("corpus.component"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("--component: ") + e.what());
  }
  corpus::SplitConfig split_cfg{ctx.cfg.real("corpus.train_fraction"), ctx.cfg.real("corpus.val_fraction"),
                                ctx.cfg.real("corpus.test_fraction"), stage_seed(ctx.cfg, kSplitSeed)};
  try {
    split_cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("corpus: ") + e.what());
  }

  const auto components = corpus::ingest_component_table(ctx.input("paths.component_table"));
  const auto granted = corpus::ingest_claims(ctx.input("paths.granted_claims"));
  const auto pregrant = corpus::ingest_claims(ctx.input("paths.pregrant_claims"));
  const auto crosswalk = corpus::ingest_crosswalk(ctx.input("paths.crosswalk"));
  const auto built = corpus::build_aipco(tag, components, granted, pregrant, crosswalk);

  std::string report = built.report.summary();
  for (const auto& w : granted.warnings) report += "warning: " + w + "\n";
  for (const auto& w : pregrant.warnings) report += "warning: " + w + "\n";
  for (const auto& w : built.report.warnings) report += "warning: " + w + "\n";
  write_text(ctx.output("build_report.txt"), report);

  corpus::write_jsonl(ctx.output("dataset.jsonl"), built.records);
  const auto stats = corpus::compute_stats(built.records);
  write_text(ctx.output("stats.txt"), corpus::format_stats(stats));
  std::cout << corpus::format_stats(stats);

  if (built.records.empty()) {
    std::cerr << "warning: no records carry component " << ctx.cfg.str("corpus.component")
              << "; dataset is empty and no splits were written\n";
    return;
  }
  if (built.records.size() < 3) {
    std::cerr << "warning: fewer than 3 records; no splits were written\n";
    return;
  }
  const auto split = corpus::split_dataset(built.records, split_cfg);
  corpus::write_jsonl(ctx.output("train.jsonl"), split.train);
  corpus::write_jsonl(ctx.output("val.jsonl"), split.val);
  corpus::write_jsonl(ctx.output("test.jsonl"), split.test);
}

void cmd_train_sft(Context& ctx) {
  const auto train = load_records(ctx, "paths.train");
  const auto val = load_records(ctx, "paths.val");
  if (train.empty()) throw std::runtime_error("training split is empty");

  tok::Vocabulary vocab = ctx.cfg.has_value("paths.vocab")
                              ? tok::Vocabulary::load(ctx.input("paths.vocab"))
                              : tok::train_vocab(train, ctx.cfg.uinteger("tokenizer.vocab_size"));
  vocab.save(ctx.output("vocab.jsonl"));

  nn::PolicyModel<float> model = ctx.cfg.has_value("paths.init_checkpoint")
                                     ? nn::PolicyModel<float>::load(ctx.input("paths.init_checkpoint"))
                                     : nn::PolicyModel<float>(lm_config(ctx.cfg, vocab.size()));
  sft::SftConfig sc;
  sc.epochs = static_cast<int>(ctx.cfg.integer("sft.epochs"));
  sc.batch_size = static_cast<int>(ctx.cfg.integer("sft.batch_size"));
  sc.lr = ctx.cfg.real("sft.lr");
  sc.warmup_steps = static_cast<int>(ctx.cfg.integer("sft.warmup_steps"));
  sc.eval_every = static_cast<int>(ctx.cfg.integer("sft.eval_every"));
  sc.max_steps = ctx.cfg.integer("sft.max_steps");
  sc.seed = stage_seed(ctx.cfg, kSftSeed, 1);
  try {
    sc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("sft: ") + e.what());
  }

  std::cerr << "train-sft: " << train.size() << " claims, vocab " << vocab.size() << ", "
            << model.parameter_count() << " parameters\n";
  auto result = sft::train_sft(std::move(model), train, val, vocab, sc);
  result.model.save(ctx.output("sft.ckpt"));
  sft::write_log_csv(ctx.output("sft_log.csv"), result.log);

  nlohmann::ordered_json summary;
  summary["steps"] = result.steps;
  summary["parameters"] = result.model.parameter_count();
  summary["vocab_size"] = vocab.size();
  summary["initial_val_perplexity"] = result.initial_val_perplexity;
  summary["final_val_perplexity"] = result.final_val_perplexity;
  write_text(ctx.output("sft_summary.json"), json_text(summary));
  std::cout << "validation perplexity " << result.initial_val_perplexity << " -> " << result.final_val_perplexity
            << " after " << result.steps << " steps\n";
}

void cmd_train_rm(Context& ctx) {
  auto train = load_records(ctx, "paths.train");
  const auto val = load_records(ctx, "paths.val");
  const auto vocab = tok::Vocabulary::load(ctx.input("paths.vocab"));
  const bool shuffled = ctx.cfg.boolean("rm.shuffle_labels");
  if (shuffled) {
    std::vector<int> labels;
    for (const auto& r : train) labels.push_back(r.grant_flag);
    std::mt19937_64 rng(stage_seed(ctx.cfg, kRmSeed, 1));
    std::shuffle(labels.begin(), labels.end(), rng);
    for (std::size_t i = 0; i < train.size(); ++i) train[i].grant_flag = labels[i];
  }
  rewards::RewardModelConfig rc;
  rc.net.layers = static_cast<int>(ctx.cfg.integer("rm.layers"));
  rc.net.heads = static_cast<int>(ctx.cfg.integer("rm.heads"));
  rc.net.model_dim = static_cast<int>(ctx.cfg.integer("rm.model_dim"));
  rc.net.feedforward_dim = static_cast<int>(ctx.cfg.integer("rm.feedforward_dim"));
  rc.net.token_cap = static_cast<int>(ctx.cfg.integer("rm.token_cap"));
  rc.net.seed = stage_seed(ctx.cfg, kRmSeed, 0);
  rc.epochs = static_cast<int>(ctx.cfg.integer("rm.epochs"));
  rc.batch_size = static_cast<int>(ctx.cfg.integer("rm.batch_size"));
  rc.lr = ctx.cfg.real("rm.lr");
  rc.seed = stage_seed(ctx.cfg, kRmSeed, 2);

  auto result = rewards::train_reward_model(train, val, vocab, rc);
  result.net.save(ctx.output("rm.ckpt"));
  nlohmann::ordered_json metrics;
  metrics["accuracy"] = result.accuracy;
  metrics["val_rows"] = val.size();
  metrics["train_rows"] = train.size();
  metrics["shuffled_labels"] = shuffled;
  metrics["epoch_losses"] = result.epoch_losses;
  write_text(ctx.output("rm_metrics.json"), json_text(metrics));
  std::cout << "held-out accuracy " << result.accuracy << " on " << val.size() << " claims\n";
}

void cmd_train_ppo(Context& ctx) {
  const auto vocab = std::make_shared<const tok::Vocabulary>(tok::Vocabulary::load(ctx.input("paths.vocab")));
  const auto spec = reward_spec(ctx.cfg, vocab);
  const auto sft_model = nn::PolicyModel<float>::load(ctx.input("paths.sft_checkpoint"));
  const auto data = load_records(ctx, "paths.data");

  ppo::PpoConfig pc;
  pc.total_steps = ctx.cfg.integer("ppo.total_steps");
  pc.rollouts_per_step = static_cast<int>(ctx.cfg.integer("ppo.rollouts_per_step"));
  pc.prompt_token_count = static_cast<int>(ctx.cfg.integer("ppo.prompt_token_count"));
  pc.max_new_tokens = static_cast<int>(ctx.cfg.integer("ppo.max_new_tokens"));
  pc.lr = ctx.cfg.real("ppo.lr");
  pc.clip_epsilon = ctx.cfg.real("ppo.clip_epsilon");
  pc.value_coef = ctx.cfg.real("ppo.value_coef");
  pc.value_trunk_gradient = ctx.cfg.boolean("ppo.value_trunk_gradient");
  pc.kl_coef = ctx.cfg.real("ppo.kl_coef");
  pc.gae_gamma = ctx.cfg.real("ppo.gae_gamma");
  pc.gae_lambda = ctx.cfg.real("ppo.gae_lambda");
  pc.advantage_whitening = ctx.cfg.boolean("ppo.advantage_whitening");
  pc.ppo_epochs = static_cast<int>(ctx.cfg.integer("ppo.ppo_epochs"));
  pc.grad_clip = ctx.cfg.real("ppo.grad_clip");
  pc.temperature = ctx.cfg.real("ppo.temperature");
  pc.prompt_pool = ctx.cfg.uinteger("ppo.prompt_pool");
  pc.seed = stage_seed(ctx.cfg, kPpoSeed);
  try {
    pc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("ppo: ") + e.what());
  }

  std::ofstream samples(ctx.output("samples.jsonl"), std::ios::binary);
  if (!samples) throw std::runtime_error("cannot write samples.jsonl");
  std::int64_t last_step = 0;
  double reward_acc = 0.0;
  int reward_n = 0;
  auto sink = [&](const ppo::SampleRecord& s) {
    samples << ppo::sample_json_line(s) << '\n';
    reward_acc += s.reward;
    ++reward_n;
    if (s.step != last_step && s.step % 50 == 0) {
      last_step = s.step;
      std::cerr << "train-ppo: step " << s.step << "/" << pc.total_steps << " recent reward "
                << reward_acc / reward_n << "\n";
      reward_acc = 0.0;
      reward_n = 0;
    }
  };
  auto result = ppo::train_ppo(sft_model, data, *vocab, spec, pc, sink);
  samples.close();
  if (!samples) throw std::runtime_error("failed writing samples.jsonl");
  if (result.short_prompts > 0)
    std::cerr << "train-ppo: " << result.short_prompts << " prompts came from claims shorter than "
              << pc.prompt_token_count << " tokens\n";
  result.policy.save(ctx.output("policy.ckpt"));
  ppo::write_log_csv(ctx.output("train_log.csv"), result.log);
  if (!result.log.empty()) {
    const auto& last = result.log.back();
    std::cout << "final step " << last.step << ": reward_mean " << last.reward_mean << ", end_tag_fraction "
              << last.end_tag_fraction << ", kl_mean " << last.kl_mean << "\n";
  }
}

void cmd_eval_granted_ratio(Context& ctx) {
  const auto vocab = tok::Vocabulary::load(ctx.input("paths.vocab"));
  const auto sft_model = nn::PolicyModel<float>::load(ctx.input("paths.sft_checkpoint"));
  const auto policy = nn::PolicyModel<float>::load(ctx.input("paths.policy_checkpoint"));
  const auto net = nn::RewardNet<float>::load(ctx.input("paths.rm_checkpoint"));
  const auto data = load_records(ctx, "paths.data");

  eval::GrantedRatioConfig ec;
  ec.n_rows = ctx.cfg.uinteger("eval.n_rows");
  ec.prompt_token_count = static_cast<int>(ctx.cfg.integer("eval.prompt_token_count"));
  ec.sampler.temperature = ctx.cfg.real("eval.temperature");
  const auto max_new = ctx.cfg.integer("eval.max_new_tokens");
  ec.sampler.max_new_tokens = max_new > 0 ? static_cast<int>(max_new) : sft_model.config().context_length;
  ec.seed = stage_seed(ctx.cfg, kEvalSeed);
  ec.dataset_name = ctx.cfg.str("eval.dataset_name");
  if (ec.n_rows == 0 || ec.n_rows > data.size())
    throw ConfigError("eval.n_rows must lie in [1, " + std::to_string(data.size()) + "]");

  const auto report = eval::granted_ratio_eval(sft_model, policy, eval::net_classifier(net, vocab), data, vocab, ec);
  write_text(ctx.output("granted_ratio.json"), json_text(report.to_json()));
  std::cout << json_text(report.to_json());
}

void cmd_report(Context& ctx) {
  const auto log = ppo::read_log_csv(ctx.input("paths.log"));
  eval::emit_report(log, ctx.staging);
  for (const char* n : {"report.csv", "reward_mean.svg", "claim_length.svg", "limiting_terms.svg"})
    ctx.outputs.emplace_back(n);
  if (ctx.cfg.has_value("paths.granted_ratio")) {
    std::ifstream in(ctx.input("paths.granted_ratio"));
    const auto report = eval::GrantedRatioReport::from_json(nlohmann::json::parse(in));
    write_text(ctx.output("granted_ratio.json"), json_text(report.to_json()));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"claimrl: patent claim-one generation with RLHF"};
  app.set_help_all_flag("--help-all", "show help for every subcommand");
  bool list_keys = false;
  app.add_flag("--list-keys", list_keys, "print every config key with its default and exit");
  app.require_subcommand(0, 1);

  std::vector<std::unique_ptr<Command>> commands;
  auto make = [&](const std::string& name, const std::string& help, std::function<void(Context&)> body) -> Command& {
    auto c = std::make_unique<Command>();
    c->name = name;
    c->app = app.add_subcommand(name, help);
    c->body = std::move(body);
    add_common(*c);
    commands.push_back(std::move(c));
    return *commands.back();
  };

  {
    auto& c = make("make-fixture", "write the synthetic corpus as a dataset and as raw source tables", cmd_make_fixture);
    bind(c, "--size", "fixture.size", "number of claims");
  }
  {
    auto& c = make("build-corpus", "join the source tables into one component dataset and split it", cmd_build_corpus);
    bind(c, "--component-table", "paths.component_table", "component table TSV");
    bind(c, "--granted-claims", "paths.granted_claims", "granted claims TSV");
    bind(c, "--pregrant-claims", "paths.pregrant_claims", "pre-grant claims TSV");
    bind(c, "--crosswalk", "paths.crosswalk", "application-to-grant crosswalk TSV");
    bind(c, "--component", "corpus.component", "component label filter");
    c.inputs = {{"paths.component_table", "--component-table"},
                {"paths.granted_claims", "--granted-claims"},
                {"paths.pregrant_claims", "--pregrant-claims"},
                {"paths.crosswalk", "--crosswalk"}};
  }
  {
    auto& c = make("train-sft", "supervised fine-tuning of the policy language model", cmd_train_sft);
    bind(c, "--train", "paths.train", "training JSON-lines");
    bind(c, "--val", "paths.val", "validation JSON-lines");
    bind(c, "--vocab", "paths.vocab", "existing vocabulary (default: train one)");
    bind(c, "--init-checkpoint", "paths.init_checkpoint", "policy checkpoint to continue from");
    bind(c, "--epochs", "sft.epochs", "training epochs");
    c.inputs = {{"paths.train", "--train"},
                {"paths.val", "--val"},
                {"paths.vocab", "--vocab", false},
                {"paths.init_checkpoint", "--init-checkpoint", false}};
  }
  {
    auto& c = make("train-rm", "train the granted / pre-grant reward classifier", cmd_train_rm);
    bind(c, "--train", "paths.train", "training JSON-lines");
    bind(c, "--val", "paths.val", "held-out JSON-lines");
    bind(c, "--vocab", "paths.vocab", "vocabulary file");
    c.app->add_flag_callback(
        "--shuffle-labels", [&c] { c.overrides.emplace_back("rm.shuffle_labels", "true"); },
        "permute training labels (control run) [rm.shuffle_labels]");
    c.inputs = {{"paths.train", "--train"}, {"paths.val", "--val"}, {"paths.vocab", "--vocab"}};
  }
  {
    auto& c = make("train-ppo", "optimize the policy against a reward with PPO", cmd_train_ppo);
    bind(c, "--sft-checkpoint", "paths.sft_checkpoint", "SFT policy checkpoint");
    bind(c, "--vocab", "paths.vocab", "vocabulary file");
    bind(c, "--data", "paths.data", "dataset JSON-lines providing prompts");
    bind(c, "--reward", "reward.kind", "length | terms | joint | model");
    bind(c, "--max-len", "reward.max_len", "character cap for length and joint rewards");
    bind(c, "--terms", "reward.terms", "comma-separated limiting terms");
    bind(c, "--rm-checkpoint", "paths.rm_checkpoint", "reward model checkpoint for --reward model");
    bind(c, "--steps", "ppo.total_steps", "PPO steps");
    bind(c, "--kl-coef", "ppo.kl_coef", "KL penalty coefficient");
    c.inputs = {{"paths.sft_checkpoint", "--sft-checkpoint"},
                {"paths.vocab", "--vocab"},
                {"paths.data", "--data"},
                {"paths.rm_checkpoint", "--rm-checkpoint", false}};
  }
  {
    auto& c = make("eval-granted-ratio", "classify SFT and PPO generations before and after training",
                   cmd_eval_granted_ratio);
    bind(c, "--sft-checkpoint", "paths.sft_checkpoint", "SFT policy checkpoint");
    bind(c, "--policy-checkpoint", "paths.policy_checkpoint", "PPO policy checkpoint");
    bind(c, "--rm-checkpoint", "paths.rm_checkpoint", "reward model checkpoint");
    bind(c, "--vocab", "paths.vocab", "vocabulary file");
    bind(c, "--data", "paths.data", "dataset JSON-lines providing prompts");
    bind(c, "--rows", "eval.n_rows", "number of leading rows to evaluate");
    c.inputs = {{"paths.sft_checkpoint", "--sft-checkpoint"},
                {"paths.policy_checkpoint", "--policy-checkpoint"},
                {"paths.rm_checkpoint", "--rm-checkpoint"},
                {"paths.vocab", "--vocab"},
                {"paths.data", "--data"}};
  }
  {
    auto& c = make("report", "write the training-log CSV and trend plots", cmd_report);
    bind(c, "--log", "paths.log", "train_log.csv from train-ppo");
    bind(c, "--granted-ratio", "paths.granted_ratio", "granted_ratio.json to include");
    c.inputs = {{"paths.log", "--log"}, {"paths.granted_ratio", "--granted-ratio", false}};
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (list_keys) {
    for (const auto& k : cli::known_keys())
      std::cout << k.key << " = " << k.default_value << (k.help.empty() ? "" : "    # " + k.help) << "\n";
    return 0;
  }
  for (auto& c : commands) {
    if (c->app->parsed()) return run(*c);
  }
  std::cerr << app.help();
  return 2;
}
