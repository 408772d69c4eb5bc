#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "test_support.hpp"

using namespace spanpsp;

namespace {

ModelConfig small_config(std::size_t blocks = 1) {
  ModelConfig c;
  c.encoder.d_model = 8;
  c.encoder.n_blocks = blocks;
  c.encoder.n_heads = 2;
  c.encoder.d_ff = 12;
  c.encoder.max_len = 12;
  c.d_hidden = 6;
  return c;
}

Model small_model(std::size_t blocks = 1, std::uint64_t seed = 5) {
  return Model::initialize(small_config(blocks), CharVocabulary(U"abcdeWPI"), seed);
}

double max_abs_diff(const ad::Tensor& a, const ad::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Positions, SinusoidFormula) {
  const auto pe = sinusoidal_positions(10, 6);
  for (std::size_t p = 0; p < 10; ++p)
    for (std::size_t i = 0; i < 3; ++i) {
      const double angle = static_cast<double>(p) / std::pow(10000.0, 2.0 * static_cast<double>(i) / 6.0);
      EXPECT_NEAR(pe.at(p, 2 * i), std::sin(angle), 1e-12);
      EXPECT_NEAR(pe.at(p, 2 * i + 1), std::cos(angle), 1e-12);
    }
}

TEST(Vocabulary, TokensAndUnknowns) {
  const CharVocabulary v(U"abca");
  EXPECT_EQ(v.size(), 6u);
  std::size_t unknown = 0;
  EXPECT_EQ(v.tokens(U"bz", &unknown), (std::vector<std::size_t>{0, 4, 2, 1}));
  EXPECT_EQ(unknown, 1u);
}

TEST(Encoder, FencepostShape) {
  const Model m = small_model();
  EXPECT_EQ(m.encode(U"a").fenceposts.shape(), (std::vector<std::size_t>{2, 8}));
  EXPECT_EQ(m.encode(U"abcde").fenceposts.shape(), (std::vector<std::size_t>{6, 8}));
  EXPECT_EQ(m.encode(U"abcde").size(), 5u);
}

TEST(Encoder, DeterministicForSeed) {
  EXPECT_EQ(small_model(2, 9).encode(U"abc").fenceposts, small_model(2, 9).encode(U"abc").fenceposts);
  EXPECT_NE(small_model(2, 9).encode(U"abc").fenceposts, small_model(2, 10).encode(U"abc").fenceposts);
}

TEST(Encoder, NoBlocksIsEmbeddingPlusPosition) {
  const Model m = small_model(0);
  const auto fence = m.encode(U"ca").fenceposts;
  const auto& table = m.params()[0].value;
  const auto pe = sinusoidal_positions(12, 8);
  const std::size_t ids[] = {CharVocabulary::kBos, *m.chars().find(U'c'), *m.chars().find(U'a')};
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(fence.at(r, c), table.at(ids[r], c) + pe.at(r, c), 1e-12);
}

TEST(Encoder, ContextReachesEveryFencepost) {
  const Model m = small_model(1);
  const auto a = m.encode(U"abcd").fenceposts;
  const auto b = m.encode(U"abce").fenceposts;
  // a change in the last character moves even the first fencepost
  EXPECT_GT(max_abs_diff(ad::Tensor({1, 8}, std::vector<double>(a.row(0).begin(), a.row(0).end())),
                         ad::Tensor({1, 8}, std::vector<double>(b.row(0).begin(), b.row(0).end()))),
            1e-9);
  const auto p = m.encode(U"dcba").fenceposts;
  EXPECT_GT(max_abs_diff(a, p), 1e-9);
}

TEST(Encoder, LengthLimits) {
  const Model m = small_model();
  EXPECT_NO_THROW(m.encode(std::u32string(10, U'a')));
  EXPECT_THROW(m.encode(std::u32string(11, U'a')), Error);
  EXPECT_THROW(m.encode(U""), Error);
}

TEST(Encoder, ConfigChecks) {
  auto c = small_config();
  c.encoder.n_heads = 3;
  EXPECT_THROW(Model::initialize(c, CharVocabulary(U"a"), 1), Error);
  EXPECT_THROW(ModelConfig::from(KeyValueConfig::parse("embedding_source = external-file\n")), Error);
  EXPECT_THROW(ModelConfig::from(KeyValueConfig::parse("embedding_source = glove\n")), Error);
}

TEST(Encoder, GradCheckFencepostReadout) {
  const Model m = small_model(2);
  const auto tokens = m.tokens(U"abW");
  ad::Tensor weights({4, 8});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (double& w : weights.data()) w = dist(rng);
  const ad::ScalarFn f = [&](ad::Tape& tape, std::span<const ad::Var> leaves) {
    const ad::Var fence = m.fenceposts_on_tape(tape, leaves, tokens);
    return ad::sum(ad::mul(fence, tape.constant(weights)));
  };
  const auto result = ad::grad_check(f, param_values(m), 1e-5, 1e-3);
  EXPECT_TRUE(result.passed) << "max rel err " << result.max_rel_error << " at param "
                             << m.params()[result.worst_param].name;
}

TEST(ExternalEmbeddings, ParseAndUse) {
  std::istringstream text("dim=8\n<unk> 1 1 1 1 1 1 1 1\na 0 0 0 0 0 0 0 1\nb 0 0 0 0 0 0 1 0\n");
  const auto ext = parse_external_embeddings(text);
  EXPECT_EQ(ext.vocab.size(), 5u);
  EXPECT_EQ(ext.table.at(CharVocabulary::kUnk, 0), 1.0);
  EXPECT_EQ(ext.table.at(CharVocabulary::kBos, 0), 0.0);
  auto c = small_config(0);
  c.encoder.embedding_source = EmbeddingSource::ExternalFile;
  c.embedding_file = "unused";
  const Model m = Model::initialize(c, CharVocabulary(U"zzz"), 1, &ext);
  EXPECT_FALSE(m.params()[0].trainable);
  EXPECT_EQ(m.chars().chars(), U"ab");
  const auto fence = m.encode(U"ab").fenceposts;
  const auto pe = sinusoidal_positions(12, 8);
  EXPECT_NEAR(fence.at(1, 7), 1.0 + pe.at(1, 7), 1e-12);
}

TEST(ExternalEmbeddings, Errors) {
  auto parse = [](const std::string& s) {
    std::istringstream in(s);
    return parse_external_embeddings(in);
  };
  EXPECT_THROW(parse("a 1 2\n"), Error);
  EXPECT_THROW(parse("dim=2\na 1\n"), Error);
  EXPECT_THROW(parse("dim=2\na 1 x\n"), Error);
  EXPECT_THROW(parse("dim=2\na 1 2\na 3 4\n"), Error);
  EXPECT_THROW(parse("dim=2\nab 1 2\n"), Error);
  const auto ext = parse("dim=2\na 1 2\n");
  auto c = small_config(0);
  EXPECT_THROW(Model::initialize(c, CharVocabulary(U"a"), 1, &ext), Error);
}
