// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "prefnet/preference.hpp"
#include "test_paths.hpp"

using namespace prefnet;
using namespace prefnet::data;

namespace {

MushraRecord rec(std::string eval, std::string screen, std::string listener, std::string sys, int score) {
  return {eval, screen, listener, sys, "utt-" + screen, score, screen + "_" + sys + ".wav"};
}

std::vector<MushraRecord> parse(const std::string& body) {
  std::istringstream in(std::string(kMushraHeader) + "\n" + body);
  return parse_mushra_csv(in, "ratings.csv");
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(PreferencePairs, ThreeListenersTwoSystems) {
  // listeners prefer A, prefer B, tie -> (1 + 0 + 0.5) / 3
  const std::vector<MushraRecord> rs = {
      rec("e1", "s1", "L1", "A", 80), rec("e1", "s1", "L1", "B", 20),
      rec("e1", "s1", "L2", "A", 10), rec("e1", "s1", "L2", "B", 90),
      rec("e1", "s1", "L3", "A", 50), rec("e1", "s1", "L3", "B", 50),
  };
  const auto pairs = build_preference_pairs(rs);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].system_a, "A");
  EXPECT_EQ(pairs[0].system_b, "B");
  EXPECT_DOUBLE_EQ(pairs[0].label, 0.5);
  EXPECT_EQ(pairs[0].n_listeners, 3);
  EXPECT_EQ(pairs[0].audio_a, "s1_A.wav");
  EXPECT_EQ(pairs[0].audio_b, "s1_B.wav");
}

TEST(PreferencePairs, UnanimousPreference) {
  const std::vector<MushraRecord> rs = {rec("e", "s", "L1", "x", 90), rec("e", "s", "L1", "y", 10),
                                        rec("e", "s", "L2", "x", 70), rec("e", "s", "L2", "y", 69)};
  const auto pairs = build_preference_pairs(rs);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_DOUBLE_EQ(pairs[0].label, 1.0);
  EXPECT_DOUBLE_EQ(pairs[0].reversed().label, 0.0);
  EXPECT_EQ(pairs[0].reversed().system_a, "y");
}

TEST(PreferencePairs, AllUnorderedPairsOfFourSystems) {
  std::vector<MushraRecord> rs;
  for (const char* s : {"a", "b", "c", "d"}) rs.push_back(rec("e", "s", "L", s, 50));
  EXPECT_EQ(build_preference_pairs(rs).size(), 6u);
}

TEST(PreferencePairs, DisjointListenersAreDroppedWithAWarning) {
  const std::vector<MushraRecord> rs = {rec("e", "s", "L1", "x", 90), rec("e", "s", "L2", "y", 10)};
  std::vector<std::string> warnings;
  EXPECT_TRUE(build_preference_pairs(rs, &warnings).empty());
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("share no listener"), std::string::npos);
}

TEST(PreferencePairs, DuplicateRatingIsAnError) {
  const std::vector<MushraRecord> rs = {rec("e", "s", "L1", "x", 90), rec("e", "s", "L1", "x", 10)};
  EXPECT_THROW(build_preference_pairs(rs), DataError);
}

TEST(PreferencePairs, MatchesBruteForceOracle) {
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const auto rs = oracle::random_mushra(rng);
    EXPECT_EQ(build_preference_pairs(rs), oracle::preference_pairs(rs)) << "trial " << trial;
  }
}

TEST(MushraCsv, ParsesQuotedFieldsBomAndCrlf) {
  std::istringstream in("\xEF\xBB\xBF" + std::string(kMushraHeader) +
                        "\r\ne1,s1,L1,\"sys,1\",u1,75,\"a \"\"q\"\".wav\"\r\n");
  const auto rs = parse_mushra_csv(in, "x.csv");
  ASSERT_EQ(rs.size(), 1u);
  EXPECT_EQ(rs[0].system_id, "sys,1");
  EXPECT_EQ(rs[0].audio_path, "a \"q\".wav");
  EXPECT_EQ(rs[0].score, 75);
}

TEST(MushraCsv, ErrorsNameFileAndLine) {
  EXPECT_NE(message_of([] { parse("e,s,L,A,u,50,a.wav\ne,s,L,B,u,101,b.wav\n"); }).find("ratings.csv:3"),
            std::string::npos);
  EXPECT_NE(message_of([] { parse("e,s,L,A,u,-1,a.wav\n"); }).find("ratings.csv:2"), std::string::npos);
  EXPECT_NE(message_of([] { parse("e,s,L,A,u,fifty,a.wav\n"); }).find("ratings.csv:2"), std::string::npos);
  EXPECT_NE(message_of([] { parse("e,s,L,A,u,50\n"); }).find("ratings.csv:2"), std::string::npos);
  std::istringstream bad_header("a,b,c\n");
  EXPECT_THROW(parse_mushra_csv(bad_header, "h.csv"), DataError);
}

TEST(MushraCsv, WriteThenParseRoundTrips) {
  Rng rng(5);
  const auto rs = oracle::random_mushra(rng);
  std::ostringstream out;
  write_mushra_csv(out, rs);
  std::istringstream in(out.str());
  EXPECT_EQ(parse_mushra_csv(in, "rt.csv"), rs);
}

TEST(CsvFields, QuotingRoundTrip) {
  const std::vector<std::string> fields = {"plain", "with,comma", "with \"quote\"", ""};
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) line += (i ? "," : "") + csv_field(fields[i]);
  EXPECT_EQ(split_csv_line(line), fields);
}

namespace {

std::vector<PreferencePair> one_pair_per_eval(int n_evals) {
  std::vector<PreferencePair> pairs;
  for (int k = 0; k < n_evals; ++k) {
    PreferencePair p;
    p.evaluation_id = "ev" + std::to_string(k);
    p.utterance_id = "u";
    pairs.push_back(p);
  }
  return pairs;
}

std::map<std::string, std::string> monthly_dates(int n_evals, bool reversed_ids = false) {
  std::map<std::string, std::string> dates;
  for (int k = 0; k < n_evals; ++k) {
    const int month = reversed_ids ? n_evals - k : k + 1;
    char buf[16];
    std::snprintf(buf, sizeof buf, "2015-%02d-01", month);
    dates["ev" + std::to_string(k)] = buf;
  }
  return dates;
}

}  // namespace

TEST(Folds, TwelveEvaluationsIntoFourBlocksOfThree) {
  const auto folds = split_folds(one_pair_per_eval(12), 4, monthly_dates(12));
  EXPECT_EQ(folds.n_folds, 4);
  std::map<int, int> sizes;
  for (const auto& [id, f] : folds.assignment) ++sizes[f];
  EXPECT_EQ(sizes, (std::map<int, int>{{0, 3}, {1, 3}, {2, 3}, {3, 3}}));
}

TEST(Folds, RemainderGoesToEarlierBlocks) {
  const auto folds = split_folds(one_pair_per_eval(5), 2, monthly_dates(5));
  std::map<int, int> sizes;
  for (const auto& [id, f] : folds.assignment) ++sizes[f];
  EXPECT_EQ(sizes, (std::map<int, int>{{0, 3}, {1, 2}}));
}

TEST(Folds, BlocksFollowDatesNotIds) {
  // ev0 is the latest evaluation here
  const auto folds = split_folds(one_pair_per_eval(4), 2, monthly_dates(4, true));
  EXPECT_EQ(folds.fold_of("ev3"), 0);
  EXPECT_EQ(folds.fold_of("ev2"), 0);
  EXPECT_EQ(folds.fold_of("ev1"), 1);
  EXPECT_EQ(folds.fold_of("ev0"), 1);
}

TEST(Folds, ErrorsOnMissingDatesAndTooManyFolds) {
  auto dates = monthly_dates(3);
  dates.erase("ev1");
  EXPECT_THROW(split_folds(one_pair_per_eval(3), 2, dates), DataError);
  EXPECT_THROW(split_folds(one_pair_per_eval(3), 4, monthly_dates(3)), DataError);
}

TEST(Folds, ApplyCopiesFoldAndDate) {
  auto pairs = one_pair_per_eval(4);
  const auto dates = monthly_dates(4);
  const auto folds = split_folds(pairs, 2, dates);
  apply_folds(pairs, folds, dates);
  for (const auto& p : pairs) {
    ASSERT_TRUE(p.fold.has_value());
    EXPECT_EQ(*p.fold, folds.fold_of(p.evaluation_id));
    EXPECT_EQ(p.eval_date, dates.at(p.evaluation_id));
  }
}

TEST(Manifest, RoundTripWithAndWithoutFolds) {
  Rng rng(9);
  auto pairs = build_preference_pairs(oracle::random_mushra(rng));
  ASSERT_FALSE(pairs.empty());
  pairs[0].fold = 2;
  pairs[0].eval_date = "2016-03-04";
  std::stringstream io;
  write_manifest(pairs, io);
  EXPECT_EQ(read_manifest(io, "m.jsonl"), pairs);
}

TEST(Manifest, RejectsOutOfRangeValuesWithLineNumbers) {
  const std::string ok =
      R"({"evaluation_id":"e","utterance_id":"u","system_a":"a","system_b":"b","audio_a":"a.wav","audio_b":"b.wav","label":0.5,"n_listeners":2,"eval_date":""})";
  std::string bad = ok;
  bad.replace(bad.find("0.5"), 3, "1.5");
  std::istringstream in(ok + "\n" + bad + "\n");
  const auto msg = message_of([&] { read_manifest(in, "m.jsonl"); });
  EXPECT_NE(msg.find("m.jsonl:2"), std::string::npos) << msg;
  std::istringstream garbage("{not json\n");
  EXPECT_THROW(read_manifest(garbage, "g.jsonl"), DataError);
}

TEST(DatesCsv, ParsesAndValidatesHeader) {
  const auto dir = test::scratch_dir("dates_csv");
  std::ofstream(dir / "d.csv") << "evaluation_id,date\ne1,2014-01-01\ne2,2014-02-01\n";
  const auto dates = read_dates_csv(dir / "d.csv");
  EXPECT_EQ(dates.at("e2"), "2014-02-01");
  std::ofstream(dir / "bad.csv") << "id,when\n";
  EXPECT_THROW(read_dates_csv(dir / "bad.csv"), DataError);
  EXPECT_THROW(read_dates_csv(dir / "absent.csv"), DataError);
}
