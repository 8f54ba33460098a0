#include "claimrl/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

namespace claimrl::tok {

namespace {

constexpr std::array<std::string_view, 4> kSpecials = {kPadTag, kStartTag, kEndTag, kUnkTag};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool contains_special(std::string_view s) {
  return std::any_of(kSpecials.begin(), kSpecials.end(),
                     [&](std::string_view sp) { return s.find(sp) != std::string_view::npos; });
}

std::string to_hex(std::string_view s) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : s) {
    out.push_back(kDigits[c >> 4]);
    out.push_back(kDigits[c & 15]);
  }
  return out;
}

std::string from_hex(std::string_view s) {
  if (s.size() % 2) throw std::runtime_error("odd-length hex surface");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    throw std::runtime_error("bad hex digit");
  };
  std::string out;
  for (std::size_t i = 0; i < s.size(); i += 2) out.push_back(static_cast<char>(nibble(s[i]) * 16 + nibble(s[i + 1])));
  return out;
}

}  // namespace

Vocabulary::Vocabulary() {
  surfaces_.reserve(kMinVocabSize);
  for (std::size_t b = 0; b < kByteTokens; ++b) surfaces_.emplace_back(1, static_cast<char>(b));
  for (auto sp : kSpecials) surfaces_.emplace_back(sp);
  rebuild_index();
}

Vocabulary Vocabulary::with_words(std::vector<std::string> words) {
  Vocabulary v;
  for (auto& w : words) {
    if (w.size() < 2) throw std::invalid_argument("word surface must be longer than one byte");
    if (contains_special(w)) throw std::invalid_argument("word surface contains a special tag");
    v.surfaces_.push_back(std::move(w));
  }
  v.rebuild_index();
  if (v.index_.size() != v.surfaces_.size()) throw std::invalid_argument("duplicate surface in vocabulary");
  return v;
}

std::int32_t Vocabulary::child(std::int32_t node, unsigned char c) const {
  const auto& ch = trie_[static_cast<std::size_t>(node)].children;
  auto it = std::lower_bound(ch.begin(), ch.end(), c, [](const auto& p, unsigned char x) { return p.first < x; });
  if (it == ch.end() || it->first != c) return -1;
  return it->second;
}

void Vocabulary::rebuild_index() {
  index_.clear();
  trie_.assign(1, TrieNode{});
  for (std::size_t id = 0; id < surfaces_.size(); ++id) {
    index_.emplace(surfaces_[id], static_cast<TokenId>(id));
    if (is_special(static_cast<TokenId>(id))) continue;  // specials are split out before trie matching
    std::int32_t node = 0;
    for (unsigned char c : surfaces_[id]) {
      std::int32_t next = child(node, c);
      if (next < 0) {
        next = static_cast<std::int32_t>(trie_.size());
        trie_.push_back(TrieNode{});
        auto& ch = trie_[static_cast<std::size_t>(node)].children;
        auto it =
            std::lower_bound(ch.begin(), ch.end(), c, [](const auto& p, unsigned char x) { return p.first < x; });
        ch.insert(it, {c, next});
      }
      node = next;
    }
    trie_[static_cast<std::size_t>(node)].token = static_cast<TokenId>(id);
  }
}

const std::string& Vocabulary::surface(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= surfaces_.size())
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(surfaces_.size()));
  return surfaces_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::find(std::string_view s) const {
  auto it = index_.find(std::string(s));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void Vocabulary::encode_plain(std::string_view text, std::vector<TokenId>& out) const {
  std::size_t i = 0;
  while (i < text.size()) {
    std::int32_t node = 0;
    TokenId best = -1;
    std::size_t best_len = 0;
    for (std::size_t j = i; j < text.size(); ++j) {
      node = child(node, static_cast<unsigned char>(text[j]));
      if (node < 0) break;
      if (trie_[static_cast<std::size_t>(node)].token >= 0) {
        best = trie_[static_cast<std::size_t>(node)].token;
        best_len = j - i + 1;
      }
    }
    // Every byte is a token, so best is always found.
    out.push_back(best);
    i += best_len;
  }
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t next = std::string_view::npos;
    std::size_t which = 0;
    for (std::size_t s = 0; s < kSpecials.size(); ++s) {
      auto at = text.find(kSpecials[s], pos);
      if (at < next) {
        next = at;
        which = s;
      }
    }
    if (next == std::string_view::npos) {
      encode_plain(text.substr(pos), out);
      break;
    }
    encode_plain(text.substr(pos, next - pos), out);
    out.push_back(static_cast<TokenId>(kByteTokens + which));
    pos = next + kSpecials[which].size();
  }
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> tokens) const {
  std::string out;
  for (TokenId id : tokens) out += surface(id);
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t id = 0; id < surfaces_.size(); ++id) {
    nlohmann::ordered_json j;
    j["id"] = id;
    if (id < kByteTokens) {
      j["byte"] = id;
    } else {
      j["surface"] = surfaces_[id];
      try {
        out << j.dump() << '\n';
        continue;
      } catch (const nlohmann::json::type_error&) {
        j.erase("surface");
        j["hex"] = to_hex(surfaces_[id]);
      }
    }
    out << j.dump() << '\n';
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::string> words;
  std::string line;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    const auto id = j.at("id").get<std::size_t>();
    if (id != expected) throw std::runtime_error(path.string() + ": vocabulary ids are not contiguous at " + std::to_string(id));
    ++expected;
    std::string s;
    if (j.contains("byte")) {
      s = std::string(1, static_cast<char>(j["byte"].get<int>()));
    } else if (j.contains("hex")) {
      s = from_hex(j["hex"].get<std::string>());
    } else {
      s = j.at("surface").get<std::string>();
    }
    if (id < kByteTokens) {
      if (s != std::string(1, static_cast<char>(id))) throw std::runtime_error(path.string() + ": byte token mismatch");
    } else if (id < kMinVocabSize) {
      if (s != kSpecials[id - kByteTokens]) throw std::runtime_error(path.string() + ": special token mismatch");
    } else {
      words.push_back(std::move(s));
    }
  }
  if (expected < kMinVocabSize) throw std::runtime_error(path.string() + ": truncated vocabulary");
  return with_words(std::move(words));
}

std::vector<std::string_view> word_units(std::string_view text) {
  std::vector<std::string_view> units;
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_space(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j < text.size() && text[j] == ' ') ++j;
    units.push_back(text.substr(i, j - i));
    i = j;
  }
  return units;
}

Vocabulary train_vocab(std::span<const corpus::ClaimRecord> corpus, std::size_t target_size) {
  if (corpus.empty()) throw std::invalid_argument("cannot train a vocabulary on an empty corpus");
  if (target_size < kMinVocabSize)
    throw std::invalid_argument("vocabulary target size must be at least " + std::to_string(kMinVocabSize));

  std::map<std::string, std::size_t, std::less<>> counts;
  for (const auto& rec : corpus) {
    for (auto unit : word_units(rec.claim_text)) {
      if (unit.size() < 2 || contains_special(unit)) continue;
      auto it = counts.find(unit);
      if (it == counts.end()) {
        counts.emplace(std::string(unit), 1);
      } else {
        ++it->second;
      }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  const std::size_t room = target_size - kMinVocabSize;
  std::vector<std::string> words;
  for (std::size_t i = 0; i < ranked.size() && i < room; ++i) words.push_back(ranked[i].first);
  return Vocabulary::with_words(std::move(words));
}

}  // namespace claimrl::tok
