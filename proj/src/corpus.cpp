#include "claimrl/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace claimrl::corpus {

namespace {

constexpr std::array<std::string_view, 8> kLabels = {"ML",     "EVO", "NLP",      "SPEECH",
                                                     "VISION", "KR",  "PLANNING", "HARDWARE"};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t header_index(const TsvRow& header, std::string_view name, const std::filesystem::path& path) {
  for (std::size_t i = 0; i < header.fields.size(); ++i) {
    if (header.fields[i] == name) return i;
  }
  throw CorpusError(path.string() + ": header lacks column '" + std::string(name) + "'", header.line);
}

bool parse_flag(std::string_view s, bool& out) {
  if (s == "1" || s == "true" || s == "True" || s == "TRUE") {
    out = true;
    return true;
  }
  if (s == "0" || s == "false" || s == "False" || s == "FALSE") {
    out = false;
    return true;
  }
  return false;
}

}  // namespace

std::string_view to_string(ComponentTag tag) { return kLabels[static_cast<std::size_t>(tag)]; }

ComponentTag parse_component(std::string_view label) {
  for (std::size_t i = 0; i < kLabels.size(); ++i) {
    if (kLabels[i] == label) return static_cast<ComponentTag>(i);
  }
  throw std::invalid_argument("unknown component label '" + std::string(label) + "'");
}

std::size_t ComponentSet::size() const { return static_cast<std::size_t>(std::popcount(bits_)); }

std::vector<ComponentTag> ComponentSet::tags() const {
  std::vector<ComponentTag> out;
  for (auto t : kAllComponents) {
    if (contains(t)) out.push_back(t);
  }
  return out;
}

void validate(const ClaimRecord& r) {
  if (r.doc_id.empty()) throw std::invalid_argument("claim record with empty doc_id");
  if (r.claim_text.empty()) throw std::invalid_argument("claim record " + r.doc_id + " has empty claim text");
  if (r.grant_flag != 0 && r.grant_flag != 1)
    throw std::invalid_argument("claim record " + r.doc_id + " has grant flag outside {0,1}");
  if (r.components.empty()) throw std::invalid_argument("claim record " + r.doc_id + " has no component set");
}

// ---------------------------------------------------------------------------
// TSV

std::vector<TsvRow> parse_tsv(std::string_view text) {
  std::vector<TsvRow> rows;
  std::size_t line = 1;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    TsvRow row;
    row.line = line;
    while (true) {
      std::string field;
      if (i < n && text[i] == '"') {
        const std::size_t open_line = line;
        ++i;
        bool closed = false;
        while (i < n) {
          char c = text[i];
          if (c == '"') {
            if (i + 1 < n && text[i + 1] == '"') {
              field.push_back('"');
              i += 2;
              continue;
            }
            ++i;
            closed = true;
            break;
          }
          if (c == '\n') ++line;
          field.push_back(c);
          ++i;
        }
        if (!closed) throw CorpusError("unterminated quoted field", open_line);
        if (i < n && text[i] == '\r') ++i;
        if (i < n && text[i] != '\t' && text[i] != '\n')
          throw CorpusError("unexpected character after closing quote", line);
      } else {
        while (i < n && text[i] != '\t' && text[i] != '\n') {
          if (text[i] == '"') throw CorpusError("stray quote inside unquoted field", line);
          field.push_back(text[i]);
          ++i;
        }
        if (!field.empty() && field.back() == '\r') field.pop_back();
      }
      row.fields.push_back(std::move(field));
      if (i >= n) break;
      if (text[i] == '\t') {
        ++i;
        continue;
      }
      // newline ends the record
      ++i;
      ++line;
      break;
    }
    // Skip blank lines.
    if (row.fields.size() == 1 && row.fields[0].empty()) continue;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<TsvRow> read_tsv(const std::filesystem::path& path) { return parse_tsv(read_file(path)); }

std::string tsv_field(std::string_view value) {
  const bool needs_quote = value.find_first_of("\t\n\r\"") != std::string_view::npos;
  if (!needs_quote) return std::string(value);
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_tsv(const std::filesystem::path& path, const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << '\t';
      out << tsv_field(row[i]);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Ingestion

std::vector<ComponentRow> ingest_component_table(const std::filesystem::path& path) {
  auto rows = read_tsv(path);
  if (rows.empty()) throw CorpusError(path.string() + ": missing header", 1);
  const TsvRow& header = rows.front();
  const std::size_t doc_col = header_index(header, "doc_id", path);
  const std::size_t appl_col = header_index(header, "appl_id", path);
  std::array<std::size_t, 8> tag_cols{};
  for (std::size_t t = 0; t < kLabels.size(); ++t) tag_cols[t] = header_index(header, kLabels[t], path);

  std::vector<ComponentRow> out;
  out.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const TsvRow& row = rows[r];
    if (row.fields.size() != header.fields.size()) {
      throw CorpusError(path.string() + ": expected " + std::to_string(header.fields.size()) + " columns, got " +
                            std::to_string(row.fields.size()),
                        row.line);
    }
    ComponentRow entry{row.fields[doc_col], row.fields[appl_col], {}};
    if (entry.doc_id.empty()) throw CorpusError(path.string() + ": empty doc_id", row.line);
    for (std::size_t t = 0; t < tag_cols.size(); ++t) {
      bool flag = false;
      if (!parse_flag(row.fields[tag_cols[t]], flag)) {
        throw CorpusError(path.string() + ": non-boolean value '" + row.fields[tag_cols[t]] + "' in column " +
                              std::string(kLabels[t]),
                          row.line);
      }
      if (flag) entry.components.insert(kAllComponents[t]);
    }
    if (entry.components.empty()) throw CorpusError(path.string() + ": no component set", row.line);
    out.push_back(std::move(entry));
  }
  return out;
}

ClaimTable ingest_claims(const std::filesystem::path& path) {
  auto rows = read_tsv(path);
  if (rows.empty()) throw CorpusError(path.string() + ": missing header", 1);
  const std::size_t doc_col = header_index(rows.front(), "doc_id", path);
  const std::size_t text_col = header_index(rows.front(), "claim_text", path);
  const std::size_t width = rows.front().fields.size();

  ClaimTable table;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const TsvRow& row = rows[r];
    if (row.fields.size() != width) {
      throw CorpusError(path.string() + ": expected " + std::to_string(width) + " columns, got " +
                            std::to_string(row.fields.size()),
                        row.line);
    }
    const std::string& doc = row.fields[doc_col];
    if (doc.empty()) throw CorpusError(path.string() + ": empty doc_id", row.line);
    auto [it, inserted] = table.claims.insert_or_assign(doc, row.fields[text_col]);
    if (!inserted) {
      table.warnings.push_back(path.filename().string() + ": duplicate doc_id " + doc + " at line " +
                               std::to_string(row.line) + " overrides earlier row");
    }
  }
  return table;
}

std::vector<CrosswalkEntry> ingest_crosswalk(const std::filesystem::path& path) {
  auto rows = read_tsv(path);
  if (rows.empty()) throw CorpusError(path.string() + ": missing header", 1);
  const std::size_t appl_col = header_index(rows.front(), "appl_id", path);
  const std::size_t grant_col = header_index(rows.front(), "granted_doc_id", path);
  const std::size_t width = rows.front().fields.size();

  std::vector<CrosswalkEntry> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const TsvRow& row = rows[r];
    // A trailing empty granted_doc_id may be written without its tab.
    if (row.fields.size() != width && !(row.fields.size() + 1 == width && grant_col + 1 == width)) {
      throw CorpusError(path.string() + ": expected " + std::to_string(width) + " columns", row.line);
    }
    CrosswalkEntry e;
    e.appl_id = row.fields[appl_col];
    if (e.appl_id.empty()) throw CorpusError(path.string() + ": empty appl_id", row.line);
    if (grant_col < row.fields.size() && !row.fields[grant_col].empty()) e.granted_doc_id = row.fields[grant_col];
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Join

std::string SkipReport::summary() const {
  std::ostringstream ss;
  ss << "rows matching component filter: " << matched_rows << "\n";
  ss << "records emitted: " << emitted << "\n";
  ss << "rows skipped (no claim text): " << skipped() << "\n";
  for (const auto& id : skipped_doc_ids) ss << "  skipped " << id << "\n";
  for (const auto& w : warnings) ss << "warning: " << w << "\n";
  return ss.str();
}

BuildResult build_aipco(ComponentTag component, std::span<const ComponentRow> component_table,
                        const ClaimTable& granted_claims, const ClaimTable& pregrant_claims,
                        std::span<const CrosswalkEntry> crosswalk) {
  BuildResult result;
  std::unordered_set<std::string> seen;
  for (const auto& row : component_table) {
    if (!row.components.contains(component)) continue;
    ++result.report.matched_rows;
    auto g = granted_claims.claims.find(row.doc_id);
    auto p = pregrant_claims.claims.find(row.doc_id);
    const bool in_granted = g != granted_claims.claims.end();
    const bool in_pregrant = p != pregrant_claims.claims.end();
    if (in_granted && in_pregrant) {
      throw std::runtime_error("doc_id " + row.doc_id + " resolves in both granted and pre-grant claims tables");
    }
    if (!in_granted && !in_pregrant) {
      result.report.skipped_doc_ids.push_back(row.doc_id);
      continue;
    }
    if (!seen.insert(row.doc_id).second) {
      throw std::runtime_error("doc_id " + row.doc_id + " appears twice in the component table");
    }
    ClaimRecord rec{row.doc_id, row.appl_id, in_granted ? 1 : 0, row.components,
                    in_granted ? g->second : p->second};
    if (rec.claim_text.empty()) {
      result.report.skipped_doc_ids.push_back(row.doc_id);
      continue;
    }
    result.records.push_back(std::move(rec));
  }
  result.report.emitted = result.records.size();

  // Crosswalk is only used to flag applications present in both states.
  std::map<std::string, std::string> pregrant_by_appl;
  std::map<std::string, std::string> granted_by_doc;
  for (const auto& r : result.records) {
    if (r.grant_flag == 0) {
      pregrant_by_appl[r.appl_id] = r.doc_id;
    } else {
      granted_by_doc[r.doc_id] = r.appl_id;
    }
  }
  for (const auto& e : crosswalk) {
    if (!e.granted_doc_id) continue;
    auto pg = pregrant_by_appl.find(e.appl_id);
    if (pg == pregrant_by_appl.end()) continue;
    auto gr = granted_by_doc.find(*e.granted_doc_id);
    if (gr == granted_by_doc.end()) continue;
    result.report.warnings.push_back("application " + e.appl_id + " appears as pre-grant " + pg->second +
                                     " and granted " + *e.granted_doc_id);
  }
  return result;
}

CorpusStats compute_stats(std::span<const ClaimRecord> dataset) {
  CorpusStats s;
  // Integer sums keep the result independent of input order.
  std::uint64_t granted_chars = 0;
  std::uint64_t pregrant_chars = 0;
  for (const auto& r : dataset) {
    if (r.grant_flag == 1) {
      ++s.granted_count;
      granted_chars += r.claim_text.size();
    } else {
      ++s.pregrant_count;
      pregrant_chars += r.claim_text.size();
    }
  }
  s.rows = s.granted_count + s.pregrant_count;
  if (s.granted_count) s.granted_avg_len = static_cast<double>(granted_chars) / static_cast<double>(s.granted_count);
  if (s.pregrant_count)
    s.pregrant_avg_len = static_cast<double>(pregrant_chars) / static_cast<double>(s.pregrant_count);
  return s;
}

std::string format_stats(const CorpusStats& s) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(1);
  ss << "rows\tgranted\tgranted_avg_len\tpregrant\tpregrant_avg_len\n";
  ss << s.rows << '\t' << s.granted_count << '\t' << s.granted_avg_len << '\t' << s.pregrant_count << '\t'
     << s.pregrant_avg_len << '\n';
  return ss.str();
}

void SplitConfig::validate() const {
  if (!(train_fraction > 0.0 && val_fraction > 0.0 && test_fraction > 0.0))
    throw std::invalid_argument("split fractions must be positive");
  if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must sum to 1");
}

Split split_dataset(std::span<const ClaimRecord> dataset, const SplitConfig& config) {
  config.validate();
  if (dataset.size() < 3) throw std::invalid_argument("dataset needs at least 3 records to split");
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config.seed);
  std::shuffle(order.begin(), order.end(), rng);

  const double n = static_cast<double>(dataset.size());
  auto part = [&](double f) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(n * f + 1e-9)));
  };
  const std::size_t n_val = part(config.val_fraction);
  const std::size_t n_test = part(config.test_fraction);
  const std::size_t n_train = dataset.size() - n_val - n_test;

  Split s;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& rec = dataset[order[i]];
    if (i < n_train) {
      s.train.push_back(rec);
    } else if (i < n_train + n_val) {
      s.val.push_back(rec);
    } else {
      s.test.push_back(rec);
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic claims

namespace {

constexpr std::array<std::string_view, 32> kNouns = {
    "sensor",    "processor", "memory",     "controller", "signal",    "model",    "network",  "image",
    "vector",    "module",    "interface", "database",   "classifier", "feature",  "layer",    "camera",
    "device",    "circuit",   "server",    "node",       "user",      "message",  "document", "query",
    "threshold", "parameter", "estimate",  "frame",      "token",      "gradient", "policy",   "agent"};
constexpr std::array<std::string_view, 16> kAdjectives = {
    "first",    "second",  "neural",   "adaptive",  "trained",  "digital",  "remote", "local",
    "weighted", "encoded", "selected", "temporary", "optical",  "acoustic", "sparse", "predicted"};
constexpr std::array<std::string_view, 14> kVerbs = {"receive",  "determine", "generate", "store",  "transmit",
                                                     "classify", "update",    "compare",  "encode", "detect",
                                                     "select",   "compute",   "filter",   "rank"};
constexpr std::array<std::string_view, 10> kGerunds = {"receiving", "determining", "generating", "storing",
                                                       "training",  "classifying", "updating",   "comparing",
                                                       "encoding",  "detecting"};
constexpr std::array<std::string_view, 6> kSubjects = {"method", "system", "apparatus",
                                                       "device", "medium", "circuit"};
constexpr std::array<std::string_view, 4> kShort = {"a bus", "a hub", "a key", "a map"};

template <std::size_t N>
std::string_view pick(const std::array<std::string_view, N>& words, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, N - 1);
  return words[d(rng)];
}

std::string plain_element(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> shape(0, 2);
  std::string e;
  switch (shape(rng)) {
    case 0:
      e = "a " + std::string(pick(kAdjectives, rng)) + " " + std::string(pick(kNouns, rng)) + " configured to " +
          std::string(pick(kVerbs, rng)) + " the " + std::string(pick(kNouns, rng));
      break;
    case 1:
      e = std::string(pick(kGerunds, rng)) + " a " + std::string(pick(kNouns, rng)) + " based on the " +
          std::string(pick(kAdjectives, rng)) + " " + std::string(pick(kNouns, rng));
      break;
    default:
      e = "a " + std::string(pick(kNouns, rng)) + " coupled to the " + std::string(pick(kNouns, rng));
      break;
  }
  return e;
}

std::string limiting_element(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> term(0, 3);
  const std::string n1(pick(kNouns, rng));
  const std::string n2(pick(kNouns, rng));
  const std::string adj(pick(kAdjectives, rng));
  switch (term(rng)) {
    case 0:
      return "wherein the " + n1 + " is " + adj;
    case 1:
      return "whereby the " + n1 + " is used to " + std::string(pick(kVerbs, rng)) + " the " + n2;
    case 2:
      return "where the " + n1 + " comprises a " + adj + " " + n2;
    default:
      return "when the " + n1 + " is " + adj;
  }
}

std::string assemble(const std::string& preamble, const std::vector<std::string>& elements) {
  std::string s = preamble;
  for (std::size_t i = 0; i < elements.size(); ++i) {
    if (i) s += "; ";
    if (i + 1 == elements.size() && elements.size() > 1) s += "and ";
    s += elements[i];
  }
  s += ".";
  return s;
}

std::string synth_claim(std::size_t lo, std::size_t hi, double term_rate, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> target_d(lo, hi);
  const std::size_t target = target_d(rng);
  const std::string subject(pick(kSubjects, rng));
  const std::string preamble = "1. A " + subject + " for " + std::string(pick(kGerunds, rng)) + " a " +
                               std::string(pick(kNouns, rng)) + ", comprising: ";

  std::vector<std::string> elements;
  std::vector<bool> limiting;
  std::size_t k = 0;
  if (term_rate > 0.0) {
    std::poisson_distribution<std::size_t> pd(term_rate);
    k = pd(rng);
  }
  // Interleave limiting clauses among plain elements.
  std::vector<std::string> terms;
  for (std::size_t i = 0; i < k; ++i) terms.push_back(limiting_element(rng));
  std::size_t next_term = 0;
  std::bernoulli_distribution place_term(0.5);
  while (assemble(preamble, elements).size() < target) {
    if (next_term < terms.size() && (elements.empty() ? false : place_term(rng))) {
      elements.push_back(terms[next_term++]);
      limiting.push_back(true);
    } else {
      elements.push_back(plain_element(rng));
      limiting.push_back(false);
    }
  }
  while (next_term < terms.size()) {
    elements.push_back(terms[next_term++]);
    limiting.push_back(true);
  }
  // Trim to the upper bound: plain elements go first.
  while (assemble(preamble, elements).size() > hi && !elements.empty()) {
    std::size_t victim = elements.size();
    for (std::size_t i = elements.size(); i-- > 0;) {
      if (!limiting[i]) {
        victim = i;
        break;
      }
    }
    if (victim == elements.size()) victim = elements.size() - 1;
    elements.erase(elements.begin() + static_cast<std::ptrdiff_t>(victim));
    limiting.erase(limiting.begin() + static_cast<std::ptrdiff_t>(victim));
  }
  while (assemble(preamble, elements).size() < lo) {
    elements.push_back(std::string(pick(kShort, rng)));
  }
  return assemble(preamble, elements);
}

}  // namespace

std::vector<ClaimRecord> synthesize_fixture_corpus(const FixtureConfig& c) {
  if (c.size == 0) throw std::invalid_argument("fixture size must be positive");
  for (auto [lo, hi] : {c.granted_len_range, c.pregrant_len_range}) {
    if (lo > hi) throw std::invalid_argument("fixture length range is empty");
    if (lo < 80) throw std::invalid_argument("fixture length range must start at 80 characters or more");
    if (hi - lo < 16) throw std::invalid_argument("fixture length range must span at least 16 characters");
  }
  if (c.granted_term_rate < 0.0 || c.pregrant_term_rate < 0.0)
    throw std::invalid_argument("term rates must be non-negative");

  std::mt19937_64 rng(c.seed);
  std::bernoulli_distribution extra_tag(0.25);
  std::vector<ClaimRecord> out;
  out.reserve(c.size);
  for (std::size_t i = 0; i < c.size; ++i) {
    ClaimRecord r;
    r.grant_flag = (i % 2 == 0) ? 1 : 0;
    std::ostringstream doc;
    if (r.grant_flag) {
      doc << (8000000 + i);
    } else {
      doc << "2015" << std::setw(7) << std::setfill('0') << i;
    }
    r.doc_id = doc.str();
    r.appl_id = std::to_string(12000000 + i);
    r.components.insert(ComponentTag::ML);
    for (auto t : kAllComponents) {
      if (t != ComponentTag::ML && extra_tag(rng)) r.components.insert(t);
    }
    const auto& range = r.grant_flag ? c.granted_len_range : c.pregrant_len_range;
    r.claim_text = synth_claim(range.first, range.second, r.grant_flag ? c.granted_term_rate : c.pregrant_term_rate,
                               rng);
    out.push_back(std::move(r));
  }
  return out;
}

void write_source_tables(const std::filesystem::path& dir, std::span<const ClaimRecord> records) {
  std::vector<std::vector<std::string>> components{{"doc_id", "appl_id"}};
  for (auto label : kLabels) components.front().emplace_back(label);
  std::vector<std::vector<std::string>> granted{{"doc_id", "claim_text"}};
  std::vector<std::vector<std::string>> pregrant{{"doc_id", "claim_text"}};
  std::vector<std::vector<std::string>> crosswalk{{"appl_id", "granted_doc_id"}};
  for (const auto& r : records) {
    std::vector<std::string> row{r.doc_id, r.appl_id};
    for (auto t : kAllComponents) row.emplace_back(r.components.contains(t) ? "1" : "0");
    components.push_back(std::move(row));
    (r.grant_flag ? granted : pregrant).push_back({r.doc_id, r.claim_text});
    crosswalk.push_back({r.appl_id, r.grant_flag ? r.doc_id : std::string()});
  }
  write_tsv(dir / "component_table.tsv", components);
  write_tsv(dir / "claims_granted.tsv", granted);
  write_tsv(dir / "claims_pregrant.tsv", pregrant);
  write_tsv(dir / "crosswalk.tsv", crosswalk);
}

// ---------------------------------------------------------------------------
// JSON lines

std::string to_json_line(const ClaimRecord& r) {
  nlohmann::ordered_json j;
  j["doc_id"] = r.doc_id;
  j["appl_id"] = r.appl_id;
  j["flag_patent"] = r.grant_flag;
  auto comps = nlohmann::ordered_json::array();
  for (auto t : r.components.tags()) comps.push_back(std::string(to_string(t)));
  j["components"] = comps;
  j["claim_one"] = r.claim_text;
  return j.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

ClaimRecord from_json_line(std::string_view line) {
  auto j = nlohmann::json::parse(line);
  ClaimRecord r;
  r.doc_id = j.at("doc_id").get<std::string>();
  r.appl_id = j.at("appl_id").get<std::string>();
  r.grant_flag = j.at("flag_patent").get<int>();
  for (const auto& c : j.at("components")) r.components.insert(parse_component(c.get<std::string>()));
  r.claim_text = j.at("claim_one").get<std::string>();
  validate(r);
  return r;
}

void write_jsonl(const std::filesystem::path& path, std::span<const ClaimRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records) out << to_json_line(r) << '\n';
}

std::vector<ClaimRecord> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<ClaimRecord> out;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(from_json_line(line));
    } catch (const std::exception& e) {
      throw CorpusError(path.string() + ": " + e.what(), lineno);
    }
    if (!ids.insert(out.back().doc_id).second)
      throw CorpusError(path.string() + ": duplicate doc_id " + out.back().doc_id, lineno);
  }
  return out;
}

}  // namespace claimrl::corpus
