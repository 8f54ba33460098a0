#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "claimrl/corpus.hpp"
#include "claimrl/rewards.hpp"
#include "test_support.hpp"

using namespace claimrl::corpus;
using claimrl::testing::TempDir;

namespace {

std::filesystem::path write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

const char* kComponentHeader = "doc_id\tappl_id\tML\tEVO\tNLP\tSPEECH\tVISION\tKR\tPLANNING\tHARDWARE\n";

ClaimRecord rec(std::string id, int flag, std::string text, ComponentSet c = {ComponentTag::ML}) {
  return ClaimRecord{id, "A" + id, flag, c, std::move(text)};
}

}  // namespace

TEST(ComponentTag, ExactlyEightLabelsParse) {
  std::set<std::string_view> names;
  for (auto t : kAllComponents) {
    names.insert(to_string(t));
    EXPECT_EQ(parse_component(to_string(t)), t);
  }
  EXPECT_EQ(names.size(), 8u);
  EXPECT_THROW(parse_component("ROBOTICS"), std::invalid_argument);
  EXPECT_THROW(parse_component("ml"), std::invalid_argument);
  EXPECT_THROW(parse_component(""), std::invalid_argument);
}

TEST(ClaimRecord, ValidateRejectsBrokenRecords) {
  EXPECT_NO_THROW(validate(rec("1", 1, "x")));
  EXPECT_THROW(validate(rec("1", 2, "x")), std::invalid_argument);
  EXPECT_THROW(validate(rec("1", 1, "")), std::invalid_argument);
  EXPECT_THROW(validate(rec("1", 1, "x", {})), std::invalid_argument);
}

TEST(IngestComponentTable, MapsFlaggedColumns) {
  TempDir d;
  auto p = write_text(d.path / "c.tsv", std::string(kComponentHeader) +
                                            "D1\tA1\t1\t0\t1\t0\t0\t0\t0\t0\n"
                                            "D2\tA2\t0\t0\t0\t0\t0\t0\t0\t1\n"
                                            "D3\tA3\t1\t1\t1\t1\t1\t1\t1\t1\n");
  const auto rows = ingest_component_table(p);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].doc_id, "D1");
  EXPECT_EQ(rows[0].components, (ComponentSet{ComponentTag::ML, ComponentTag::NLP}));
  EXPECT_EQ(rows[1].components, (ComponentSet{ComponentTag::HARDWARE}));
  EXPECT_EQ(rows[2].components.size(), 8u);
  EXPECT_EQ(rows[2].doc_id, "D3");
}

TEST(IngestComponentTable, ErrorsCarryLineNumbers) {
  TempDir d;
  auto none = write_text(d.path / "a.tsv", std::string(kComponentHeader) + "D1\tA1\t1\t0\t0\t0\t0\t0\t0\t0\n" +
                                               "D2\tA2\t0\t0\t0\t0\t0\t0\t0\t0\n");
  try {
    ingest_component_table(none);
    FAIL();
  } catch (const CorpusError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("no component set"), std::string::npos);
  }
  auto width = write_text(d.path / "b.tsv", std::string(kComponentHeader) + "D1\tA1\t1\t0\n");
  try {
    ingest_component_table(width);
    FAIL();
  } catch (const CorpusError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  auto flag = write_text(d.path / "c.tsv", std::string(kComponentHeader) + "D1\tA1\tyes\t0\t0\t0\t0\t0\t0\t0\n");
  EXPECT_THROW(ingest_component_table(flag), CorpusError);
  auto empty = write_text(d.path / "d.tsv", "");
  EXPECT_THROW(ingest_component_table(empty), CorpusError);
  auto noheader = write_text(d.path / "e.tsv", "D1\tA1\t1\t0\t0\t0\t0\t0\t0\t0\n");
  EXPECT_THROW(ingest_component_table(noheader), CorpusError);
}

TEST(IngestClaims, DuplicateLastWinsWithWarning) {
  TempDir d;
  auto p = write_text(d.path / "g.tsv", "doc_id\tclaim_text\nX1\t1. A method...\nX2\tfirst\nX2\tsecond\n");
  const auto t = ingest_claims(p);
  EXPECT_EQ(t.claims.at("X1"), "1. A method...");
  EXPECT_EQ(t.claims.at("X2"), "second");
  ASSERT_EQ(t.warnings.size(), 1u);
  EXPECT_NE(t.warnings[0].find("X2"), std::string::npos);
}

TEST(IngestClaims, QuotedFieldsRoundTrip) {
  TempDir d;
  const std::string nasty = "1. A device\tcomprising:\n a \"quoted\" part; and\r\n more";
  write_tsv(d.path / "g.tsv", {{"doc_id", "claim_text"}, {"X1", nasty}, {"X2", "\"starts with quote"}, {"X3", "plain"}});
  const auto t = ingest_claims(d.path / "g.tsv");
  EXPECT_EQ(t.claims.at("X1"), nasty);
  EXPECT_EQ(t.claims.at("X2"), "\"starts with quote");
  EXPECT_EQ(t.claims.at("X3"), "plain");
}

TEST(IngestClaims, BadQuotingReportsLine) {
  TempDir d;
  auto p = write_text(d.path / "g.tsv", "doc_id\tclaim_text\nX1\tok\nX2\t\"never closed\n");
  try {
    ingest_claims(p);
    FAIL();
  } catch (const CorpusError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  auto q = write_text(d.path / "h.tsv", "doc_id\tclaim_text\nX1\t\"closed\"junk\n");
  EXPECT_THROW(ingest_claims(q), CorpusError);
}

TEST(IngestCrosswalk, EmptyGrantIsAbsent) {
  TempDir d;
  auto p = write_text(d.path / "x.tsv", "appl_id\tgranted_doc_id\nA1\tP1\nA2\t\nA3\tP3\nA4\tP4\n");
  const auto x = ingest_crosswalk(p);
  ASSERT_EQ(x.size(), 4u);
  EXPECT_EQ(x[0].granted_doc_id, std::optional<std::string>("P1"));
  EXPECT_FALSE(x[1].granted_doc_id.has_value());
  EXPECT_EQ(std::count_if(x.begin(), x.end(), [](const auto& e) { return !e.granted_doc_id; }), 1);
  auto bad = write_text(d.path / "y.tsv", "appl_id\tgranted_doc_id\n\tP1\n");
  EXPECT_THROW(ingest_crosswalk(bad), CorpusError);
}

TEST(BuildAipco, JoinsAndFlagsByResolvingTable) {
  std::vector<ComponentRow> table = {
      {"G1", "A1", {ComponentTag::ML}},
      {"G2", "A2", {ComponentTag::ML, ComponentTag::NLP}},
      {"P1", "A3", {ComponentTag::ML}},
      {"P2", "A4", {ComponentTag::ML}},
      {"Z9", "A5", {ComponentTag::ML}},
      {"N1", "A6", {ComponentTag::NLP}},
  };
  ClaimTable granted{{{"G1", "g one"}, {"G2", "g two"}, {"N1", "nlp"}}, {}};
  ClaimTable pregrant{{{"P1", "p one"}, {"P2", "p two"}}, {}};
  const auto r = build_aipco(ComponentTag::ML, table, granted, pregrant, {});
  ASSERT_EQ(r.records.size(), 4u);
  std::vector<int> flags;
  for (const auto& x : r.records) flags.push_back(x.grant_flag);
  EXPECT_EQ(flags, (std::vector<int>{1, 1, 0, 0}));
  EXPECT_EQ(r.report.skipped(), 1u);
  EXPECT_EQ(r.report.skipped_doc_ids[0], "Z9");
  EXPECT_EQ(r.report.matched_rows, r.records.size() + r.report.skipped());

  const auto nlp = build_aipco(ComponentTag::NLP, table, granted, pregrant, {});
  ASSERT_EQ(nlp.records.size(), 2u);
  for (const auto& x : nlp.records) EXPECT_TRUE(x.components.contains(ComponentTag::NLP));
}

TEST(BuildAipco, AmbiguousGrantStatusIsAnError) {
  std::vector<ComponentRow> table = {{"D1", "A1", {ComponentTag::ML}}};
  ClaimTable granted{{{"D1", "x"}}, {}};
  ClaimTable pregrant{{{"D1", "y"}}, {}};
  EXPECT_THROW(build_aipco(ComponentTag::ML, table, granted, pregrant, {}), std::runtime_error);
}

TEST(BuildAipco, CrosswalkFlagsApplicationInBothStates) {
  std::vector<ComponentRow> table = {{"G1", "A1", {ComponentTag::ML}}, {"P1", "A1", {ComponentTag::ML}}};
  ClaimTable granted{{{"G1", "x"}}, {}};
  ClaimTable pregrant{{{"P1", "y"}}, {}};
  std::vector<CrosswalkEntry> cw = {{"A1", "G1"}, {"A2", std::nullopt}};
  const auto r = build_aipco(ComponentTag::ML, table, granted, pregrant, cw);
  EXPECT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.report.warnings.size(), 1u);
}

TEST(BuildAipco, SizePlusSkipsEqualsMatchedRowsOnRandomTables) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ComponentRow> table;
    ClaimTable g, p;
    std::size_t matching = 0;
    for (int i = 0; i < 60; ++i) {
      const std::string id = "D" + std::to_string(i);
      ComponentSet c;
      for (auto t : kAllComponents)
        if (rng() % 3 == 0) c.insert(t);
      if (c.empty()) c.insert(ComponentTag::KR);
      table.push_back({id, "A" + std::to_string(i), c});
      if (c.contains(ComponentTag::VISION)) ++matching;
      switch (rng() % 3) {
        case 0: g.claims[id] = "granted " + id; break;
        case 1: p.claims[id] = "pregrant " + id; break;
        default: break;
      }
    }
    const auto r = build_aipco(ComponentTag::VISION, table, g, p, {});
    EXPECT_EQ(r.records.size() + r.report.skipped(), matching);
    EXPECT_EQ(r.report.matched_rows, matching);
  }
}

TEST(Stats, HandArithmeticAndEmpty) {
  EXPECT_EQ(compute_stats({}), CorpusStats{});
  std::vector<ClaimRecord> ds = {rec("1", 1, std::string(10, 'a')), rec("2", 1, std::string(20, 'b')),
                                 rec("3", 0, std::string(6, 'c'))};
  const auto s = compute_stats(ds);
  EXPECT_EQ(s.rows, 3u);
  EXPECT_EQ(s.granted_count, 2u);
  EXPECT_DOUBLE_EQ(s.granted_avg_len, 15.0);
  EXPECT_EQ(s.pregrant_count, 1u);
  EXPECT_DOUBLE_EQ(s.pregrant_avg_len, 6.0);
}

TEST(Stats, PermutationInvariant) {
  FixtureConfig fc;
  fc.size = 300;
  auto ds = synthesize_fixture_corpus(fc);
  const auto base = compute_stats(ds);
  EXPECT_EQ(base.rows, base.granted_count + base.pregrant_count);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10; ++i) {
    std::shuffle(ds.begin(), ds.end(), rng);
    EXPECT_EQ(compute_stats(ds), base);
  }
}

TEST(Split, SizesFollowRemainderToTrain) {
  auto make = [](std::size_t n) {
    std::vector<ClaimRecord> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(rec(std::to_string(i), static_cast<int>(i % 2), "t"));
    return v;
  };
  SplitConfig c;
  auto s100 = split_dataset(make(100), c);
  EXPECT_EQ(s100.train.size(), 90u);
  EXPECT_EQ(s100.val.size(), 5u);
  EXPECT_EQ(s100.test.size(), 5u);
  auto s101 = split_dataset(make(101), c);
  EXPECT_EQ(s101.train.size(), 91u);
  EXPECT_EQ(s101.val.size(), 5u);
  EXPECT_EQ(s101.test.size(), 5u);
  EXPECT_THROW(split_dataset(make(2), c), std::invalid_argument);
  SplitConfig bad;
  bad.train_fraction = 0.8;
  EXPECT_THROW(split_dataset(make(100), bad), std::invalid_argument);
  bad.train_fraction = 0.0;
  bad.val_fraction = 0.95;
  EXPECT_THROW(split_dataset(make(100), bad), std::invalid_argument);
}

TEST(Split, DeterministicDisjointAndComplete) {
  FixtureConfig fc;
  fc.size = 257;
  const auto ds = synthesize_fixture_corpus(fc);
  SplitConfig c;
  c.seed = 99;
  const auto a = split_dataset(ds, c);
  const auto b = split_dataset(ds, c);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.val, b.val);
  EXPECT_EQ(a.test, b.test);
  c.seed = 100;
  EXPECT_NE(split_dataset(ds, c).train, a.train);

  std::multiset<std::string> all, parts;
  for (const auto& r : ds) all.insert(to_json_line(r));
  std::set<std::string> ids;
  for (const auto* part : {&a.train, &a.val, &a.test})
    for (const auto& r : *part) {
      parts.insert(to_json_line(r));
      EXPECT_TRUE(ids.insert(r.doc_id).second) << "doc_id in two parts: " << r.doc_id;
    }
  EXPECT_EQ(all, parts);
}

TEST(Fixture, DeterministicBalancedAndLongerWhenGranted) {
  FixtureConfig fc;
  fc.size = 10;
  EXPECT_EQ(synthesize_fixture_corpus(fc), synthesize_fixture_corpus(fc));
  fc.size = 400;
  const auto ds = synthesize_fixture_corpus(fc);
  const auto s = compute_stats(ds);
  EXPECT_EQ(s.granted_count, 200u);
  EXPECT_EQ(s.pregrant_count, 200u);
  EXPECT_GT(s.granted_avg_len, s.pregrant_avg_len);
  std::set<std::string> ids;
  for (const auto& r : ds) {
    EXPECT_NO_THROW(validate(r));
    EXPECT_TRUE(ids.insert(r.doc_id).second);
    EXPECT_EQ(r.claim_text.rfind("1. A", 0), 0u) << r.claim_text;
    const auto [lo, hi] = r.grant_flag ? fc.granted_len_range : fc.pregrant_len_range;
    EXPECT_GE(r.claim_text.size(), lo);
    EXPECT_LE(r.claim_text.size(), hi);
  }
  fc.size = 0;
  EXPECT_THROW(synthesize_fixture_corpus(fc), std::invalid_argument);
}

TEST(Fixture, TermRateShowsInLimitingTermCounts) {
  FixtureConfig fc;
  fc.size = 1000;
  const auto ds = synthesize_fixture_corpus(fc);
  double g = 0, p = 0;
  for (const auto& r : ds) (r.grant_flag ? g : p) += claimrl::rewards::limiting_term_reward(r.claim_text);
  g /= 500;
  p /= 500;
  EXPECT_GT(g, p);
  EXPECT_GT(g, 1.5);
  EXPECT_LT(p, 1.0);
}

TEST(Jsonl, RoundTripAndKeys) {
  TempDir d;
  FixtureConfig fc;
  fc.size = 50;
  auto ds = synthesize_fixture_corpus(fc);
  ds[0].claim_text = "1. A unicode \xc3\xa9 \"quoted\"\ttabbed\nclaim.";
  write_jsonl(d.path / "d.jsonl", ds);
  EXPECT_EQ(read_jsonl(d.path / "d.jsonl"), ds);
  const auto line = to_json_line(ds[1]);
  for (const char* key : {"\"doc_id\"", "\"appl_id\"", "\"flag_patent\"", "\"components\"", "\"claim_one\""})
    EXPECT_NE(line.find(key), std::string::npos) << key;
  EXPECT_EQ(from_json_line(line), ds[1]);
  EXPECT_THROW(from_json_line("{\"doc_id\": \"x\"}"), std::exception);
}

TEST(Jsonl, DuplicateDocIdRejected) {
  TempDir d;
  std::vector<ClaimRecord> ds = {rec("1", 1, "a"), rec("1", 0, "b")};
  write_jsonl(d.path / "d.jsonl", ds);
  EXPECT_THROW(read_jsonl(d.path / "d.jsonl"), CorpusError);
}

TEST(SourceTables, RebuildReproducesDataset) {
  TempDir d;
  FixtureConfig fc;
  fc.size = 120;
  const auto ds = synthesize_fixture_corpus(fc);
  write_source_tables(d.path, ds);
  const auto comp = ingest_component_table(d.path / "component_table.tsv");
  const auto g = ingest_claims(d.path / "claims_granted.tsv");
  const auto p = ingest_claims(d.path / "claims_pregrant.tsv");
  const auto x = ingest_crosswalk(d.path / "crosswalk.tsv");
  std::vector<ClaimRecord> ml;
  std::copy_if(ds.begin(), ds.end(), std::back_inserter(ml),
               [](const auto& r) { return r.components.contains(ComponentTag::ML); });
  const auto built = build_aipco(ComponentTag::ML, comp, g, p, x);
  EXPECT_EQ(built.records, ml);
  EXPECT_EQ(built.report.skipped(), 0u);
}

TEST(Stats, FormatOrder) {
  EXPECT_EQ(format_stats(CorpusStats{3, 2, 15.0, 1, 6.0}),
            "rows\tgranted\tgranted_avg_len\tpregrant\tpregrant_avg_len\n3\t2\t15.0\t1\t6.0\n");
}
