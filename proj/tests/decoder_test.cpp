#include <gtest/gtest.h>

#include <limits>

#include "test_support.hpp"

using namespace spanpsp;
using namespace spanpsp::testing;

namespace {

double best_by_enumeration(const ScoreChart& chart, const ProsodicTree* gold, const LabelVocabulary& vocab) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& d : all_derivations(chart.size(), chart.labels())) {
    double value = sum_entries(chart, d);
    if (gold) value += static_cast<double>(delta_oracle(d, *gold, vocab));
    best = std::max(best, value);
  }
  return best;
}

LabelVocabulary four_labels() { return LabelVocabulary({Label::dummy(), lab({PW}), lab({PPH}), lab({PW, PPH, IPH})}); }

}  // namespace

TEST(Decode, SingleCharacterUsesLabelMax) {
  const auto vocab = LabelVocabulary::standard();
  ScoreChart chart(1, vocab.size());
  chart.at(0, 1, 3) = 0.7;
  chart.at(0, 1, 5) = 1.2;
  const auto r = decode(chart);
  ASSERT_EQ(r.derivation.spans.size(), 1u);
  EXPECT_EQ(r.derivation.spans[0].label, 5u);
  EXPECT_DOUBLE_EQ(r.score, 1.2);

  ScoreChart negative(1, vocab.size(), 0);
  for (std::size_t l = 1; l < vocab.size(); ++l) negative.at(0, 1, l) = -1.0;
  const auto r2 = decode(negative);
  EXPECT_EQ(r2.score, 0.0);
  EXPECT_TRUE(derivation_tree(r2.derivation, vocab).spans().empty());
}

TEST(Decode, AllZeroChart) {
  const auto vocab = LabelVocabulary::standard();
  const auto r = decode(ScoreChart(6, vocab.size()));
  EXPECT_EQ(r.score, 0.0);
  EXPECT_TRUE(derivation_tree(r.derivation, vocab).spans().empty());
  // ties: dummy label everywhere, leftmost split
  for (const auto& s : r.derivation.spans) EXPECT_EQ(s.label, 0u);
  EXPECT_EQ(r.derivation.spans[1].begin, 0u);
  EXPECT_EQ(r.derivation.spans[1].end, 1u);
}

TEST(Decode, LowestLabelWinsTies) {
  ScoreChart chart(1, 4);
  chart.at(0, 1, 2) = 1.0;
  chart.at(0, 1, 3) = 1.0;
  EXPECT_EQ(decode(chart).derivation.spans[0].label, 2u);
}

TEST(Decode, EmptyChartRejected) { EXPECT_THROW(decode(ScoreChart(0, 4)), Error); }

TEST(Decode, MatchesFullEnumerationSmall) {
  std::mt19937_64 rng(1);
  const auto vocab = four_labels();
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 4;
    const ScoreChart chart = random_chart(n, 4, rng);
    const auto r = decode(chart);
    EXPECT_NEAR(r.score, best_by_enumeration(chart, nullptr, vocab), 1e-9);
    EXPECT_NEAR(sum_entries(chart, r.derivation), r.score, 1e-9);
  }
}

TEST(Decode, MatchesBruteForceUpToSeven) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 7;
    const std::size_t labels = trial % 2 ? 4 : 7;
    const ScoreChart chart = random_chart(n, labels, rng);
    const auto r = decode(chart);
    const auto oracle = brute_force_decode(chart);
    EXPECT_NEAR(r.score, oracle.score, 1e-9);
    EXPECT_NEAR(sum_entries(chart, r.derivation), oracle.score, 1e-9);
  }
}

TEST(BruteForce, CountsForTwoCharacters) {
  std::mt19937_64 rng(3);
  const auto r = brute_force_decode(random_chart(2, 7, rng));
  EXPECT_EQ(r.shapes, 1u);
  EXPECT_EQ(r.labelings, 343u);
  EXPECT_THROW(brute_force_decode(ScoreChart(9, 4)), Error);
}

TEST(BruteForce, SingleCharacterIsLabelMax) {
  ScoreChart chart(1, 4);
  chart.at(0, 1, 1) = -0.5;
  chart.at(0, 1, 3) = 0.25;
  EXPECT_DOUBLE_EQ(brute_force_decode(chart).score, 0.25);
}

TEST(Derivation, HasTwoNMinusOneSpans) {
  std::mt19937_64 rng(4);
  for (std::size_t n : {1u, 3u, 5u, 17u, 60u}) {
    const auto r = decode(random_chart(n, 7, rng));
    EXPECT_EQ(r.derivation.spans.size(), 2 * n - 1);
  }
}

TEST(Decode, OptimalAgainstRandomTrees) {
  std::mt19937_64 rng(5);
  const auto vocab = LabelVocabulary::standard();
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng() % 20;
    const ScoreChart chart = random_chart(n, vocab.size(), rng);
    const auto r = decode(chart);
    for (int k = 0; k < 50; ++k) {
      const auto t = sequence_to_tree(random_sequence(n, rng));
      EXPECT_GE(r.score + 1e-12, tree_score(chart, t, vocab));
    }
  }
}

TEST(Decode, Deterministic) {
  std::mt19937_64 rng(6);
  const ScoreChart chart = random_chart(15, 7, rng);
  const auto a = decode(chart), b = decode(chart);
  EXPECT_EQ(a.derivation.spans, b.derivation.spans);
  EXPECT_EQ(a.score, b.score);
}

TEST(Augmented, MarginSatisfiedReturnsGold) {
  std::mt19937_64 rng(7);
  const auto vocab = LabelVocabulary::standard();
  const auto gold = sequence_to_tree(seq("ab#1cd#2ef#3"));
  ScoreChart chart = random_chart(6, vocab.size(), rng);
  const GoldAssignment assignment(gold, vocab);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = i + 1; j <= 6; ++j)
      for (std::size_t l = 1; l < vocab.size(); ++l) chart.at(i, j, l) += assignment.label(i, j) == l ? 100.0 : -100.0;
  const auto r = decode_augmented(chart, gold, vocab);
  EXPECT_EQ(derivation_tree(r.derivation, vocab), gold);
  EXPECT_NEAR(r.score, tree_score(chart, gold, vocab), 1e-9);
}

TEST(Augmented, AllZeroChartTwoCharacters) {
  const auto vocab = LabelVocabulary::standard();
  const auto gold = sequence_to_tree(seq("ab#3"));
  const ScoreChart chart(2, vocab.size());
  const auto r = decode_augmented(chart, gold, vocab);
  EXPECT_GE(hamming_delta(r.derivation, gold, vocab), 1u);
  EXPECT_GE(r.score, 1.0);
  EXPECT_DOUBLE_EQ(r.score, best_by_enumeration(chart, &gold, vocab));
  EXPECT_DOUBLE_EQ(r.score, 3.0);
}

TEST(Augmented, MatchesBruteForce) {
  std::mt19937_64 rng(8);
  const auto vocab = LabelVocabulary::standard();
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 6;
    const ScoreChart chart = random_chart(n, vocab.size(), rng);
    const auto gold = sequence_to_tree(random_sequence(n, rng));
    const GoldAssignment assignment(gold, vocab);
    const auto r = decode_augmented(chart, assignment);
    const auto oracle = brute_force_decode(chart, &assignment);
    EXPECT_NEAR(r.score, oracle.score, 1e-9);
    EXPECT_NEAR(sum_entries(chart, r.derivation) + static_cast<double>(delta_oracle(r.derivation, gold, vocab)),
                r.score, 1e-9);
  }
}

TEST(Augmented, OptimalAgainstRandomTrees) {
  std::mt19937_64 rng(9);
  const auto vocab = LabelVocabulary::standard();
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng() % 15;
    const ScoreChart chart = random_chart(n, vocab.size(), rng);
    const auto gold = sequence_to_tree(random_sequence(n, rng));
    const auto r = decode_augmented(chart, gold, vocab);
    for (int k = 0; k < 50; ++k) {
      const auto d = binarize(sequence_to_tree(random_sequence(n, rng)), vocab);
      EXPECT_GE(r.score + 1e-12, sum_entries(chart, d) + static_cast<double>(hamming_delta(d, gold, vocab)));
    }
  }
}

TEST(Augmented, RejectsLengthMismatch) {
  const auto vocab = LabelVocabulary::standard();
  EXPECT_THROW(decode_augmented(ScoreChart(3, 7), sequence_to_tree(seq("ab#3")), vocab), Error);
}

TEST(Bench, RowsAndGrowth) {
  const auto one = bench_decode({10}, 1, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].n, 10u);
  const auto rows = bench_decode({40, 80}, 7, 2);
  EXPECT_GT(rows[1].median_seconds, rows[0].median_seconds);
  EXPECT_THROW(bench_decode({1}, 1, 1), Error);
}
