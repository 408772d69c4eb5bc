#include <gtest/gtest.h>

#include <algorithm>

#include "test_support.hpp"

using namespace spanpsp;
using namespace spanpsp::testing;

namespace {

void expect_counts(const LevelCounts& c, std::size_t tp, std::size_t fp, std::size_t fn) {
  EXPECT_EQ(c.tp, tp);
  EXPECT_EQ(c.fp, fp);
  EXPECT_EQ(c.fn, fn);
}

const std::vector<BoundarySequence> kGold{seq("ab#1cd#2ef#3"), seq("abc#3de#3")};
const std::vector<BoundarySequence> kPred{seq("ab#2cd#1ef#3"), seq("ab#1c#3de#3")};

}  // namespace

TEST(Evaluate, PerfectPrediction) {
  const auto r = evaluate(kGold, kGold);
  for (Level l : kLevels) {
    EXPECT_EQ(r.at(l).precision(), 1.0);
    EXPECT_EQ(r.at(l).recall(), 1.0);
    EXPECT_EQ(r.at(l).f1(), 1.0);
  }
  EXPECT_EQ(r.exact_match(), 1.0);
}

TEST(Evaluate, NoPredictedBoundaries) {
  std::vector<BoundarySequence> pred = kGold;
  for (auto& s : pred) std::fill(s.marks.begin(), s.marks.end() - 1, Mark::None);
  const auto r = evaluate(pred, kGold);
  for (Level l : kLevels) {
    EXPECT_EQ(r.at(l).recall(), 0.0);
    EXPECT_EQ(r.at(l).precision(), 0.0);
    EXPECT_EQ(r.at(l).f1(), 0.0);
  }
}

// Interior positions only; the final #3 is never counted.
//   s1 gold [_,1,_,2,_] pred [_,2,_,1,_]   s2 gold [_,_,3,_] pred [_,1,3,_]
//   cumulative PW: s1 tp 2; s2 tp 1 fp 1         -> 3/1/0
//              PPH: s1 fp 1 fn 1; s2 tp 1        -> 1/1/1
//              IPH: s2 tp 1                      -> 1/0/0
TEST(Evaluate, HandCountedToyCorpus) {
  const auto r = evaluate(kPred, kGold);
  expect_counts(r.at(Level::PW), 3, 1, 0);
  expect_counts(r.at(Level::PPH), 1, 1, 1);
  expect_counts(r.at(Level::IPH), 1, 0, 0);
  EXPECT_DOUBLE_EQ(r.at(Level::PW).precision(), 0.75);
  EXPECT_DOUBLE_EQ(r.at(Level::PW).f1(), 6.0 / 7.0);
  EXPECT_DOUBLE_EQ(r.at(Level::PPH).f1(), 0.5);
  EXPECT_EQ(r.exact_match(), 0.0);
}

//   exact-mark PW:  s1 fp 1 fn 1; s2 fp 1        -> 0/2/1
//              PPH: s1 fp 1 fn 1                 -> 0/1/1
//              IPH: s2 tp 1                      -> 1/0/0
TEST(Evaluate, ExactMarkCounting) {
  const auto r = evaluate(kPred, kGold, CountingMode::ExactMark);
  expect_counts(r.at(Level::PW), 0, 2, 1);
  expect_counts(r.at(Level::PPH), 0, 1, 1);
  expect_counts(r.at(Level::IPH), 1, 0, 0);
}

TEST(Evaluate, Errors) {
  EXPECT_THROW(evaluate(std::vector<BoundarySequence>{kGold[0]}, kGold), Error);
  EXPECT_THROW(evaluate(std::vector<BoundarySequence>{kGold[1], kGold[0]}, kGold), Error);
}

TEST(Evaluate, PermutationInvariantAndMergeable) {
  std::mt19937_64 rng(1);
  std::vector<BoundarySequence> gold, pred;
  for (int k = 0; k < 40; ++k) {
    const std::size_t n = 1 + rng() % 20;
    gold.push_back(random_sequence(n, rng));
    pred.push_back({gold.back().chars, random_marks(n, rng)});
  }
  const auto whole = evaluate(pred, gold);
  std::vector<std::size_t> order(gold.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<BoundarySequence> g2, p2;
  for (auto k : order) {
    g2.push_back(gold[k]);
    p2.push_back(pred[k]);
  }
  const auto shuffled = evaluate(p2, g2);
  EvalReport merged = evaluate(std::span(pred).first(15), std::span(gold).first(15));
  merged += evaluate(std::span(pred).subspan(15), std::span(gold).subspan(15));
  for (Level l : kLevels) {
    EXPECT_EQ(whole.at(l).tp, shuffled.at(l).tp);
    EXPECT_EQ(whole.at(l).fp, shuffled.at(l).fp);
    EXPECT_EQ(whole.at(l).tp, merged.at(l).tp);
    EXPECT_EQ(whole.at(l).fn, merged.at(l).fn);
  }
  // cumulative positives nest: IPH <= PPH <= PW
  EXPECT_LE(whole.at(Level::IPH).tp + whole.at(Level::IPH).fp, whole.at(Level::PPH).tp + whole.at(Level::PPH).fp);
  EXPECT_LE(whole.at(Level::PPH).tp + whole.at(Level::PPH).fn, whole.at(Level::PW).tp + whole.at(Level::PW).fn);
}

TEST(Evaluate, RatesBounded) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<BoundarySequence> gold{random_sequence(10, rng)}, pred{{gold[0].chars, random_marks(10, rng)}};
    const auto r = evaluate(pred, gold);
    for (Level l : kLevels) {
      for (double v : {r.at(l).precision(), r.at(l).recall(), r.at(l).f1()}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
  }
}

TEST(Render, TableAndKeyValues) {
  const auto r = evaluate(kPred, kGold);
  const auto table = render_table(r);
  EXPECT_NE(table.find("PPH"), std::string::npos);
  EXPECT_NE(table.find("exact match"), std::string::npos);
  const auto kv = KeyValueConfig::parse(render_key_values(r));
  EXPECT_DOUBLE_EQ(kv.get_double("PPH_f1", -1), 0.5);
  EXPECT_EQ(kv.get_uint("PW_tp", 0), 3u);
}
