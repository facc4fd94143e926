#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "tierattn/attention.hpp"
#include "tierattn/rng.hpp"

using namespace tierattn;

namespace {

TokenTensor random_tokens(std::uint64_t seed, std::size_t rows, std::size_t cols) {
  Xoshiro256 rng(seed);
  TokenTensor t(rows, cols);
  for (double& x : t.values()) x = rng.normal();
  return t;
}

double row_norm(std::span<const double> r) {
  double s = 0.0;
  for (double x : r) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST(RopeFrequencies, Examples) {
  EXPECT_EQ(rope_frequencies(4, 10000.0), (std::vector<double>{1.0, 0.01}));
  EXPECT_EQ(rope_frequencies(2, 10000.0), (std::vector<double>{1.0}));
  // 100^(-2t/8) evaluated independently
  const auto f = rope_frequencies(8, 100.0);
  ASSERT_EQ(f.size(), 4u);
  const double expected[] = {1.0, 0.31623, 0.1, 0.031623};
  for (std::size_t t = 0; t < 4; ++t) {
    EXPECT_NEAR(f[t], expected[t], 1e-5);
    EXPECT_NEAR(f[t], std::exp(-0.25 * static_cast<double>(t) * std::log(100.0)), 1e-15);
  }
  for (std::size_t t = 1; t < f.size(); ++t) EXPECT_LT(f[t], f[t - 1]);
}

TEST(RopeFrequencies, RejectsOddOrZeroDim) {
  EXPECT_THROW(rope_frequencies(3), DimensionError);
  EXPECT_THROW(rope_frequencies(0), DimensionError);
  EXPECT_THROW(rope_frequencies(4, 1.0), DimensionError);
}

TEST(RopeApply, ZeroPositionIsIdentity) {
  const auto x = random_tokens(1, 6, 8);
  const auto freqs = rope_frequencies(8);
  EXPECT_EQ(rope_apply(x, {0, 0, 0}, 2, freqs), x);
}

TEST(RopeApply, UnitVectorRotation) {
  const std::vector<double> theta{1.0};
  for (std::int64_t p : {-3, 0, 1, 2, 7}) {
    const auto r = rope_apply(TokenTensor(1, 2, std::vector<double>{1.0, 0.0}), {p}, 1, theta);
    EXPECT_NEAR(r(0, 0), std::cos(static_cast<double>(p)), 1e-15);
    EXPECT_NEAR(r(0, 1), std::sin(static_cast<double>(p)), 1e-15);
  }
}

TEST(RopeApply, InverseAndNormPreservation) {
  const auto freqs = rope_frequencies(16);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto x = random_tokens(seed, 12, 16);
    Xoshiro256 rng(seed + 100);
    PositionIndex p(4);
    PositionIndex neg(4);
    for (std::size_t i = 0; i < 4; ++i) {
      p[i] = static_cast<std::int64_t>(rng.next() % 2001) - 1000;
      neg[i] = -p[i];
    }
    const auto y = rope_apply(x, p, 3, freqs);
    const auto back = rope_apply(y, neg, 3, freqs);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      EXPECT_NEAR(row_norm(y.row(r)), row_norm(x.row(r)), 1e-9);
      for (std::size_t c = 0; c < x.cols(); ++c) EXPECT_NEAR(back(r, c), x(r, c), 1e-9);
    }
  }
}

TEST(RopeApply, DimensionMismatch) {
  const auto freqs = rope_frequencies(4);
  EXPECT_THROW(rope_apply(TokenTensor(4, 4), {0, 1, 2}, 2, freqs), DimensionError);
  EXPECT_THROW(rope_apply(TokenTensor(4, 6), {0, 1}, 2, freqs), DimensionError);
}

TEST(RelativePositionMatrix, Examples) {
  const auto m = relative_position_matrix(iota_positions(3), iota_positions(3));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(m(i, i), 0);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(m(i, j), -m(j, i));
  }
  for (std::size_t len : {1u, 5u, 81u}) {
    const auto r = relative_position_matrix(iota_positions(len), iota_positions(len));
    const auto [lo, hi] = std::minmax_element(r.values().begin(), r.values().end());
    EXPECT_EQ(*lo, -static_cast<std::int64_t>(len - 1));
    EXPECT_EQ(*hi, static_cast<std::int64_t>(len - 1));
  }
  // key positions [0,20] moved to [20,40]
  const auto s = relative_position_matrix(iota_positions(21), iota_positions(21, 20));
  const auto [lo, hi] = std::minmax_element(s.values().begin(), s.values().end());
  EXPECT_EQ(*lo, -40);
  EXPECT_EQ(*hi, 0);
}

TEST(RelativePositionMatrix, ShiftIdentityExhaustive) {
  const auto pq = iota_positions(9);
  const auto base = relative_position_matrix(pq, iota_positions(9));
  for (std::int64_t delta = -12; delta <= 12; ++delta) {
    const auto shifted = relative_position_matrix(pq, iota_positions(9, delta));
    for (std::size_t i = 0; i < base.size(); ++i) {
      EXPECT_EQ(shifted.values()[i], base.values()[i] - delta);
    }
  }
}

TEST(AttentionForward, SingleKeyTakesAllWeight) {
  const auto q = random_tokens(3, 5, 4);
  const auto k = random_tokens(4, 1, 4);
  const auto v = random_tokens(5, 1, 4);
  const auto freqs = rope_frequencies(4);
  const auto rec = attention_forward(q, k, v, {0, 1, 2, 3, 4}, {2}, 1, nullptr, freqs);
  for (std::size_t r = 0; r < 5; ++r) {
    EXPECT_EQ(rec.weights(r, 0), 1.0);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(rec.output(r, c), v(0, c));
  }
}

TEST(AttentionForward, OrthonormalInputs) {
  TokenTensor eye(4, 4);
  for (std::size_t i = 0; i < 4; ++i) eye(i, i) = 1.0;
  const auto freqs = rope_frequencies(4);
  const auto rec = attention_forward(eye, eye, eye, {0, 0, 0, 0}, {0, 0, 0, 0}, 1, nullptr, freqs);
  // softmax of I/sqrt(4): diagonal e^0.5/(e^0.5+3), off-diagonal 1/(e^0.5+3)
  const double e = std::exp(0.5);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_NEAR(rec.weights(i, j), (i == j ? e : 1.0) / (e + 3.0), 1e-15);
      EXPECT_EQ(rec.weights(i, j), rec.weights(j, i));
    }
  }
}

TEST(AttentionForward, DeterministicBitwise) {
  const auto q = random_tokens(7, 12, 8);
  const auto k = random_tokens(8, 12, 8);
  const auto v = random_tokens(9, 12, 8);
  const auto freqs = rope_frequencies(8);
  const auto a = attention_forward(q, k, v, {0, 1, 2, 3}, {0, 1, 2, 3}, 3, nullptr, freqs);
  const auto b = attention_forward(q, k, v, {0, 1, 2, 3}, {0, 1, 2, 3}, 3, nullptr, freqs);
  EXPECT_EQ(a, b);
}

TEST(AttentionForward, MatchesRelativeAngleOracle) {
  const auto q = random_tokens(11, 8, 8);
  const auto k = random_tokens(12, 8, 8);
  const auto v = random_tokens(13, 8, 8);
  const auto freqs = rope_frequencies(8);
  const PositionIndex pq{0, 3, 5, 9};
  const PositionIndex pk{2, 2, 7, 40};
  const auto rec = attention_forward(q, k, v, pq, pk, 2, nullptr, freqs);
  Matrix<std::uint8_t> all(8, 8, 1);
  RealMatrix w;
  const auto out = oracle::masked_attention_output(
      q, k, v, all, [&](std::size_t a, std::size_t b) { return pq[a / 2] - pk[b / 2]; },
      kDefaultRopeBase, &w);
  for (std::size_t a = 0; a < 8; ++a) {
    for (std::size_t b = 0; b < 8; ++b) EXPECT_NEAR(rec.weights(a, b), w(a, b), 1e-12);
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(rec.output(a, c), out(a, c), 1e-12);
  }
}

TEST(AttentionForward, RowsStochasticAndMaskedZero) {
  const auto q = random_tokens(21, 6, 4);
  const auto k = random_tokens(22, 6, 4);
  const auto v = random_tokens(23, 6, 4);
  const auto mask = sliding_window_mask(3, 2, 1);
  const auto rec = attention_forward(q, k, v, {0, 1, 2}, {0, 1, 2}, 2, &mask, rope_frequencies(4));
  for (std::size_t a = 0; a < 6; ++a) {
    double sum = 0.0;
    for (std::size_t b = 0; b < 6; ++b) {
      const double w = rec.weights(a, b);
      EXPECT_GE(w, 0.0);
      EXPECT_LE(w, 1.0);
      if (!mask.allows_token(a, b)) {
        EXPECT_EQ(w, 0.0);
      }
      sum += w;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(AttentionForward, AllOnesMaskMatchesUnmasked) {
  const auto q = random_tokens(31, 12, 8);
  const auto k = random_tokens(32, 12, 8);
  const auto v = random_tokens(33, 12, 8);
  const auto freqs = rope_frequencies(8);
  const auto mask = all_dense_mask(4, 3);
  const auto a = attention_forward(q, k, v, {0, 1, 2, 3}, {0, 1, 2, 3}, 3, nullptr, freqs);
  const auto b = attention_forward(q, k, v, {0, 1, 2, 3}, {0, 1, 2, 3}, 3, &mask, freqs);
  EXPECT_EQ(a.logits, b.logits);
  for (std::size_t i = 0; i < a.weights.size(); ++i) {
    EXPECT_NEAR(a.weights.values()[i], b.weights.values()[i], 1e-12);
  }
}

TEST(AttentionForward, DependsOnlyOnRelativePosition) {
  const auto q = random_tokens(41, 10, 8);
  const auto k = random_tokens(42, 10, 8);
  const auto freqs = rope_frequencies(8);
  const PositionIndex pq{0, 4, 9, 13, 20};
  const PositionIndex pk{1, 1, 6, 30, 2};
  const auto base = attention_forward(q, k, k, pq, pk, 2, nullptr, freqs);
  for (std::int64_t c : {-50, -7, 3, 100, 1000}) {
    PositionIndex sq = pq;
    PositionIndex sk = pk;
    for (auto& x : sq) x += c;
    for (auto& x : sk) x += c;
    const auto moved = attention_forward(q, k, k, sq, sk, 2, nullptr, freqs);
    for (std::size_t i = 0; i < base.logits.size(); ++i) {
      EXPECT_NEAR(moved.logits.values()[i], base.logits.values()[i], 1e-9);
    }
  }
}

TEST(AttentionForward, FullyMaskedRowIsAnError) {
  BlockMaskDescriptor mask{2, 1, 0, std::nullopt, Matrix<BlockKind>(2, 2, BlockKind::Pruned)};
  mask.pattern(0, 0) = BlockKind::Dense;
  const auto x = random_tokens(5, 2, 2);
  EXPECT_THROW(attention_forward(x, x, x, {0, 1}, {0, 1}, 1, &mask, rope_frequencies(2)), MaskError);
}

TEST(AttentionForward, ShapeErrors) {
  const auto freqs = rope_frequencies(4);
  const auto a = random_tokens(1, 4, 4);
  EXPECT_THROW(attention_forward(a, random_tokens(2, 4, 6), a, {0, 1}, {0, 1}, 2, nullptr, freqs),
               DimensionError);
  EXPECT_THROW(attention_forward(a, a, random_tokens(2, 3, 4), {0, 1}, {0, 1}, 2, nullptr, freqs),
               DimensionError);
  auto bad = a;
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(attention_forward(bad, a, a, {0, 1}, {0, 1}, 2, nullptr, freqs), DimensionError);
}

TEST(MultiHead, SingleHeadMatchesCoreEngine) {
  const auto q = random_tokens(51, 6, 8);
  const auto k = random_tokens(52, 6, 8);
  const auto v = random_tokens(53, 6, 8);
  const PositionPair pp{{0, 1, 2}, {0, 1, 2}};
  const auto mh = multi_head_attention_zoned(q, k, v, 1, std::span<const PositionPair>(&pp, 1),
                                             [](std::size_t, std::size_t) { return std::size_t{0}; },
                                             2, nullptr, kDefaultRopeBase);
  const auto single = attention_forward(q, k, v, pp.q, pp.k, 2, nullptr, rope_frequencies(8));
  EXPECT_EQ(mh.heads.front(), single);
  EXPECT_EQ(mh.output, single.output);
  EXPECT_EQ(mean_head_logits(mh), single.logits);
}

TEST(MultiHead, HeadsSeeTheirOwnSlices) {
  const auto q = random_tokens(61, 4, 8);
  const auto k = random_tokens(62, 4, 8);
  const auto v = random_tokens(63, 4, 8);
  const PositionPair pp{{0, 5}, {0, 5}};
  const auto mh = multi_head_attention_zoned(q, k, v, 2, std::span<const PositionPair>(&pp, 1),
                                             [](std::size_t, std::size_t) { return std::size_t{0}; },
                                             2, nullptr, kDefaultRopeBase);
  ASSERT_EQ(mh.heads.size(), 2u);
  const auto h1 = attention_forward(column_slice(q, 4, 4), column_slice(k, 4, 4),
                                    column_slice(v, 4, 4), pp.q, pp.k, 2, nullptr, rope_frequencies(4));
  EXPECT_EQ(mh.heads[1], h1);
  for (std::size_t r = 0; r < 4; ++r) EXPECT_EQ(mh.output(r, 5), h1.output(r, 1));
}
