#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace claimrl::corpus {

enum class ComponentTag : std::uint8_t { ML, EVO, NLP, SPEECH, VISION, KR, PLANNING, HARDWARE };

inline constexpr std::array<ComponentTag, 8> kAllComponents = {
    ComponentTag::ML,     ComponentTag::EVO, ComponentTag::NLP,      ComponentTag::SPEECH,
    ComponentTag::VISION, ComponentTag::KR,  ComponentTag::PLANNING, ComponentTag::HARDWARE};

std::string_view to_string(ComponentTag tag);
/// Throws std::invalid_argument on anything but the eight labels.
ComponentTag parse_component(std::string_view label);

/// Non-owning bit set over the eight component labels.
class ComponentSet {
 public:
  ComponentSet() = default;
  ComponentSet(std::initializer_list<ComponentTag> tags) {
    for (auto t : tags) insert(t);
  }

  void insert(ComponentTag t) { bits_ |= bit(t); }
  bool contains(ComponentTag t) const { return (bits_ & bit(t)) != 0; }
  bool empty() const { return bits_ == 0; }
  std::size_t size() const;
  std::vector<ComponentTag> tags() const;
  bool operator==(const ComponentSet&) const = default;

 private:
  static std::uint8_t bit(ComponentTag t) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(t)); }
  std::uint8_t bits_ = 0;
};

struct ClaimRecord {
  std::string doc_id;
  std::string appl_id;
  int grant_flag = 0;  // 1 granted, 0 pre-grant
  ComponentSet components;
  std::string claim_text;

  bool operator==(const ClaimRecord&) const = default;
};

/// Throws std::invalid_argument when a record breaks its field invariants.
void validate(const ClaimRecord& record);

struct ComponentRow {
  std::string doc_id;
  std::string appl_id;
  ComponentSet components;
};

struct CrosswalkEntry {
  std::string appl_id;
  std::optional<std::string> granted_doc_id;
};

struct ClaimTable {
  std::map<std::string, std::string> claims;
  std::vector<std::string> warnings;
};

struct CorpusStats {
  std::size_t rows = 0;
  std::size_t granted_count = 0;
  double granted_avg_len = 0.0;
  std::size_t pregrant_count = 0;
  double pregrant_avg_len = 0.0;

  bool operator==(const CorpusStats&) const = default;
};

struct SplitConfig {
  double train_fraction = 0.90;
  double val_fraction = 0.05;
  double test_fraction = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Split {
  std::vector<ClaimRecord> train;
  std::vector<ClaimRecord> val;
  std::vector<ClaimRecord> test;
};

struct SkipReport {
  std::size_t matched_rows = 0;  // component-table rows carrying the filter tag
  std::size_t emitted = 0;
  std::vector<std::string> skipped_doc_ids;
  std::vector<std::string> warnings;

  std::size_t skipped() const { return skipped_doc_ids.size(); }
  std::string summary() const;
};

struct BuildResult {
  std::vector<ClaimRecord> records;
  SkipReport report;
};

/// Parse failure in a tabular or JSON-lines input; carries the 1-based line.
class CorpusError : public std::runtime_error {
 public:
  CorpusError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Tab-separated tables with minimal quoting: a field that starts with a double
// quote runs to the matching quote, "" inside it is a literal quote, and it may
// contain tabs and newlines.
struct TsvRow {
  std::size_t line = 0;  // line where the row starts
  std::vector<std::string> fields;
};
std::vector<TsvRow> parse_tsv(std::string_view text);
std::vector<TsvRow> read_tsv(const std::filesystem::path& path);
std::string tsv_field(std::string_view value);
void write_tsv(const std::filesystem::path& path, const std::vector<std::vector<std::string>>& rows);

std::vector<ComponentRow> ingest_component_table(const std::filesystem::path& path);
ClaimTable ingest_claims(const std::filesystem::path& path);
std::vector<CrosswalkEntry> ingest_crosswalk(const std::filesystem::path& path);

BuildResult build_aipco(ComponentTag component, std::span<const ComponentRow> component_table,
                        const ClaimTable& granted_claims, const ClaimTable& pregrant_claims,
                        std::span<const CrosswalkEntry> crosswalk);

CorpusStats compute_stats(std::span<const ClaimRecord> dataset);
/// Table-1 column order: rows, granted count, granted avg, pre-grant count, pre-grant avg.
std::string format_stats(const CorpusStats& stats);

Split split_dataset(std::span<const ClaimRecord> dataset, const SplitConfig& config);

struct FixtureConfig {
  std::uint64_t seed = 7;
  std::size_t size = 2000;
  std::pair<std::size_t, std::size_t> granted_len_range{420, 640};
  std::pair<std::size_t, std::size_t> pregrant_len_range{160, 360};
  double granted_term_rate = 3.0;
  double pregrant_term_rate = 0.5;
};

std::vector<ClaimRecord> synthesize_fixture_corpus(const FixtureConfig& config);

/// Writes the four raw tables build_aipco consumes (component_table.tsv,
/// claims_granted.tsv, claims_pregrant.tsv, crosswalk.tsv) into dir.
void write_source_tables(const std::filesystem::path& dir, std::span<const ClaimRecord> records);

// Dataset files: one JSON object per line with doc_id, appl_id, flag_patent,
// components and claim_one.
std::string to_json_line(const ClaimRecord& record);
ClaimRecord from_json_line(std::string_view line);
void write_jsonl(const std::filesystem::path& path, std::span<const ClaimRecord> records);
std::vector<ClaimRecord> read_jsonl(const std::filesystem::path& path);

}  // namespace claimrl::corpus
