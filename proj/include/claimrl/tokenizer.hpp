#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "claimrl/corpus.hpp"

namespace claimrl::tok {

using TokenId = std::int32_t;

inline constexpr std::string_view kStartTag = "<|start_of_claim|>";
inline constexpr std::string_view kEndTag = "<|end_of_claim|>";
inline constexpr std::string_view kPadTag = "<|pad|>";
inline constexpr std::string_view kUnkTag = "<|unk|>";

inline constexpr std::size_t kByteTokens = 256;
inline constexpr std::size_t kSpecialTokens = 4;
inline constexpr std::size_t kMinVocabSize = kByteTokens + kSpecialTokens;

/// Word-level vocabulary with a complete byte fallback.
///
/// Ids 0..255 are the raw bytes, 256..259 the special tags (pad, start, end,
/// unk), and everything above is a word unit: a whitespace-delimited word,
/// carrying its single trailing space when it had one. Special tags are
/// matched before anything else and are never split.
class Vocabulary {
 public:
  Vocabulary();  // bytes and specials only

  static Vocabulary with_words(std::vector<std::string> words);

  std::size_t size() const { return surfaces_.size(); }
  const std::string& surface(TokenId id) const;
  std::optional<TokenId> find(std::string_view surface) const;

  TokenId pad_id() const { return 256; }
  TokenId start_id() const { return 257; }
  TokenId end_id() const { return 258; }
  TokenId unk_id() const { return 259; }
  bool is_special(TokenId id) const { return id >= 256 && id < 260; }

  std::vector<TokenId> encode(std::string_view text) const;
  /// Throws std::out_of_range on an id outside the vocabulary.
  std::string decode(std::span<const TokenId> tokens) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return surfaces_ == other.surfaces_; }

 private:
  struct TrieNode {
    std::vector<std::pair<unsigned char, std::int32_t>> children;  // sorted by byte
    TokenId token = -1;
  };

  void rebuild_index();
  void encode_plain(std::string_view text, std::vector<TokenId>& out) const;
  std::int32_t child(std::int32_t node, unsigned char c) const;

  std::vector<std::string> surfaces_;
  std::unordered_map<std::string, TokenId> index_;
  std::vector<TrieNode> trie_;
};

/// Splits text into word units: maximal non-whitespace runs plus one trailing
/// space when present.
std::vector<std::string_view> word_units(std::string_view text);

/// Throws std::invalid_argument for an empty corpus or target_size < 260.
Vocabulary train_vocab(std::span<const corpus::ClaimRecord> corpus, std::size_t target_size);

}  // namespace claimrl::tok
