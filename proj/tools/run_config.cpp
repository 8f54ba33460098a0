#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace claimrl::cli {

const std::vector<KeyInfo>& known_keys() {
  static const std::vector<KeyInfo> keys = {
      {"seed", "0", "global seed; stages mix it with their own offsets"},

      {"paths.component_table", "", "component TSV (doc_id, appl_id, eight labels)"},
      {"paths.granted_claims", "", "granted claims TSV (doc_id, claim_text)"},
      {"paths.pregrant_claims", "", "pre-grant claims TSV (doc_id, claim_text)"},
      {"paths.crosswalk", "", "crosswalk TSV (appl_id, granted_doc_id)"},
      {"paths.train", "", "training split JSON-lines"},
      {"paths.val", "", "validation split JSON-lines"},
      {"paths.data", "", "dataset JSON-lines used for prompts"},
      {"paths.vocab", "", "vocabulary file"},
      {"paths.init_checkpoint", "", "policy checkpoint to start SFT from"},
      {"paths.sft_checkpoint", "", "SFT policy checkpoint"},
      {"paths.policy_checkpoint", "", "PPO policy checkpoint"},
      {"paths.rm_checkpoint", "", "reward model checkpoint"},
      {"paths.log", "", "PPO training log CSV"},
      {"paths.granted_ratio", "", "granted_ratio.json to copy into a report"},
      {"paths.out", "", "output directory"},

      {"corpus.component", "ML", "component filter label"},
      {"corpus.train_fraction", "0.90", ""},
      {"corpus.val_fraction", "0.05", ""},
      {"corpus.test_fraction", "0.05", ""},

      {"fixture.size", "2000", "number of synthetic claims"},
      {"fixture.seed", "7", ""},
      {"fixture.granted_min_chars", "420", ""},
      {"fixture.granted_max_chars", "640", ""},
      {"fixture.pregrant_min_chars", "160", ""},
      {"fixture.pregrant_max_chars", "360", ""},
      {"fixture.granted_term_rate", "3.0", "mean limiting clauses per granted claim"},
      {"fixture.pregrant_term_rate", "0.5", "mean limiting clauses per pre-grant claim"},

      {"tokenizer.vocab_size", "1024", ""},

      {"model.context_length", "128", ""},
      {"model.layers", "2", ""},
      {"model.heads", "4", ""},
      {"model.model_dim", "64", ""},
      {"model.feedforward_dim", "256", ""},

      {"sft.epochs", "1", ""},
      {"sft.batch_size", "8", ""},
      {"sft.lr", "0.003", ""},
      {"sft.warmup_steps", "20", ""},
      {"sft.eval_every", "50", ""},
      {"sft.max_steps", "-1", "-1: no cap; 0: evaluate only"},

      {"rm.epochs", "3", ""},
      {"rm.batch_size", "16", ""},
      {"rm.lr", "0.001", ""},
      {"rm.layers", "1", ""},
      {"rm.heads", "2", ""},
      {"rm.model_dim", "32", ""},
      {"rm.feedforward_dim", "64", ""},
      {"rm.token_cap", "500", ""},
      {"rm.shuffle_labels", "false", "permute training labels (control run)"},

      {"ppo.total_steps", "200", ""},
      {"ppo.rollouts_per_step", "8", ""},
      {"ppo.prompt_token_count", "30", ""},
      {"ppo.max_new_tokens", "0", "0: context_length - prompt length"},
      {"ppo.lr", "0.0001", ""},
      {"ppo.clip_epsilon", "0.2", ""},
      {"ppo.value_coef", "0.1", ""},
      {"ppo.value_trunk_gradient", "false", "let value-loss gradients reach the shared trunk"},
      {"ppo.kl_coef", "0.1", ""},
      {"ppo.gae_gamma", "1.0", ""},
      {"ppo.gae_lambda", "0.95", ""},
      {"ppo.advantage_whitening", "true", ""},
      {"ppo.ppo_epochs", "4", ""},
      {"ppo.grad_clip", "1.0", ""},
      {"ppo.temperature", "1.0", ""},
      {"ppo.prompt_pool", "0", "prompts come from the first n records; 0: all"},

      {"reward.kind", "length", "length | terms | joint | model"},
      {"reward.max_len", "512", "character cap for length and joint"},
      {"reward.terms", "wherein,whereby,where,when", "comma-separated; each gets one trailing space"},
      {"reward.include_prompt", "auto", "auto | true | false; auto is true only for model"},

      {"eval.n_rows", "100", ""},
      {"eval.prompt_token_count", "30", ""},
      {"eval.temperature", "1.0", ""},
      {"eval.max_new_tokens", "0", "0: up to the context"},
      {"eval.dataset_name", "synthetic", ""},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : known_keys()) values_[k.key] = k.default_value;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  parse_text(ss.str(), path.string());
}

void RunConfig::parse_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(n);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError(where + ": duplicate key '" + key + "'");
    if (!values_.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    values_[key] = trim(line.substr(eq + 1));
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!values_.contains(key)) throw ConfigError("unknown key '" + key + "'");
  values_[key] = value;
}

const std::string& RunConfig::str(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw std::logic_error("unregistered key " + key);
  return it->second;
}

std::int64_t RunConfig::integer(const std::string& key) const {
  const auto& s = str(key);
  std::int64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw ConfigError(key + ": '" + s + "' is not an integer");
  return v;
}

std::uint64_t RunConfig::uinteger(const std::string& key) const {
  const auto& s = str(key);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ConfigError(key + ": '" + s + "' is not a non-negative integer");
  return v;
}

double RunConfig::real(const std::string& key) const {
  const auto& s = str(key);
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw ConfigError(key + ": '" + s + "' is not a number");
  return v;
}

bool RunConfig::boolean(const std::string& key) const {
  const auto& s = str(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(key + ": '" + s + "' is not a boolean");
}

nlohmann::ordered_json RunConfig::snapshot() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace claimrl::cli
