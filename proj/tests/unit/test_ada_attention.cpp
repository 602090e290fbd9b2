#include <gtest/gtest.h>

#include "ada_oracle.hpp"
#include "gradcheck.hpp"
#include "mozoo/errors.hpp"
#include "mozoo/ops.hpp"
#include "mozoo/random.hpp"

using namespace mozoo;

namespace {

SegmentLayout canonical() { return SegmentLayout::from_counts(2, 16, 16, 2); }

struct Qkv {
  Tensor q, k, v;
};

Qkv random_qkv(std::size_t L, std::size_t heads, std::size_t dh, std::uint64_t seed) {
  Rng rng = substream(seed, "qkv");
  return {randn({L, heads, dh}, rng), randn({L, heads, dh}, rng), randn({L, heads, dh}, rng)};
}

}  // namespace

TEST(Layout, CanonicalOffsets) {
  const SegmentLayout l = canonical();
  EXPECT_EQ(l.total(), 112u);
  EXPECT_EQ(l.offset(Segment::mesh), 32u);
  EXPECT_EQ(l.offset(Segment::mask), 64u);
  EXPECT_EQ(l.offset(Segment::reference), 80u);
  EXPECT_EQ(l.segment_of(79), Segment::mask);
  EXPECT_EQ(l.frame_of(50), 1u);
}

TEST(Layout, EmptySegmentRejected) {
  SegmentLayout l = canonical();
  l.mask_tokens = 0;
  EXPECT_THROW(l.validate(), LayoutError);
  EXPECT_THROW(build_ada_mask(l), LayoutError);
}

TEST(AdaMask, TargetFrameZeroRow) {
  const SegmentLayout l = canonical();
  const AttnMask m = build_ada_mask(l);
  for (std::size_t k = 0; k < 112; ++k) {
    const bool expected = k < 32 || (k >= 32 && k < 48) || k >= 64;
    EXPECT_EQ(m.admits(0, k), expected) << "key " << k;
  }
}

TEST(AdaMask, ConditionRowsStayInOwnSegment) {
  const SegmentLayout l = canonical();
  const AttnMask m = build_ada_mask(l);
  for (std::size_t q = l.offset(Segment::mesh); q < l.total(); ++q) {
    for (std::size_t k = 0; k < l.total(); ++k) {
      if (m.admits(q, k)) EXPECT_EQ(l.segment_of(q), l.segment_of(k)) << q << "," << k;
    }
  }
}

TEST(AdaMask, MatchesRuleOracleAndBlocks) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng = substream(seed, "layout");
    SegmentLayout l;
    l.frames = 1 + rng() % 4;
    l.grid_rows = 1 + rng() % 4;
    l.grid_cols = 1 + rng() % 4;
    l.mask_tokens = 1 + rng() % 12;
    l.ref_frames = 1 + rng() % 3;
    const AttnMask m = build_ada_mask(l);
    for (std::size_t q = 0; q < l.total(); ++q) {
      for (std::size_t k = 0; k < l.total(); ++k) ASSERT_EQ(m.admits(q, k), testkit::oracle_admits(l, q, k));
    }
    EXPECT_EQ(build_ada_blocks(l).to_dense(), m);
  }
}

TEST(PairCount, CanonicalAndDegenerate) {
  EXPECT_EQ(count_attended_pairs(canonical()), 5376u);
  EXPECT_EQ(count_dense_pairs(canonical()), 12544u);
  EXPECT_EQ(build_ada_mask(canonical()).popcount(), 5376u);
  const SegmentLayout d = SegmentLayout::from_counts(1, 1, 1, 1);
  EXPECT_EQ(count_attended_pairs(d), 7u);
  EXPECT_EQ(count_dense_pairs(d), 16u);
}

TEST(DenseAttention, AllTrueMaskEqualsFullAttention) {
  const Qkv x = random_qkv(10, 2, 4, 1);
  EXPECT_EQ(dense_masked_attention(x.q, x.k, x.v, AttnMask(10, true)), full_attention(x.q, x.k, x.v));
}

TEST(DenseAttention, IdentityMaskCopiesValues) {
  const Qkv x = random_qkv(6, 2, 4, 2);
  EXPECT_EQ(dense_masked_attention(x.q, x.k, x.v, AttnMask::identity(6)), x.v);
}

TEST(DenseAttention, EmptyRowIsMaskError) {
  const Qkv x = random_qkv(4, 1, 2, 3);
  AttnMask m = AttnMask::identity(4);
  m.set(2, 2, false);
  EXPECT_THROW(dense_masked_attention(x.q, x.k, x.v, m), MaskError);
}

TEST(DenseAttention, MatchesDoubleOracle) {
  const SegmentLayout l = SegmentLayout::from_counts(2, 4, 3, 1);
  const Qkv x = random_qkv(l.total(), 2, 6, 4);
  const Tensor ref = testkit::oracle_attention(x.q, x.k, x.v, l);
  EXPECT_LT(max_abs_diff(dense_masked_attention(x.q, x.k, x.v, build_ada_mask(l)), ref), 1e-5);
  EXPECT_LT(max_abs_diff(blockwise_attention(x.q, x.k, x.v, l), ref), 1e-5);
}

TEST(BlockwiseAttention, ShapeMismatchRejected) {
  const Qkv x = random_qkv(8, 1, 2, 5);
  EXPECT_THROW(blockwise_attention(x.q, x.k, x.v, canonical()), DimensionError);
}

TEST(BlockwiseAttention, MaxKeysBoundedByTargetRow) {
  const SegmentLayout l = canonical();
  EXPECT_EQ(build_ada_blocks(l).max_keys(), 32u + 16u + 16u + 32u);
}

class AttentionGradient : public ::testing::TestWithParam<bool> {};

TEST_P(AttentionGradient, MatchesFiniteDifferences) {
  const bool blockwise = GetParam();
  const SegmentLayout l = SegmentLayout::from_counts(2, 4, 3, 1);  // L = 23
  const Qkv x = random_qkv(l.total(), 2, 4, 6);
  Rng rng = substream(7, "w");
  const Tensor w = randn(x.q.shape(), rng);
  const AttnMask mask = build_ada_mask(l);
  const auto r = testkit::grad_check({{"q", x.q}, {"k", x.k}, {"v", x.v}}, [&](Graph& g, const auto& v) {
    const Var out = blockwise ? ops::blockwise_attention(v.at("q"), v.at("k"), v.at("v"), l)
                              : ops::dense_masked_attention(v.at("q"), v.at("k"), v.at("v"), mask);
    return ops::sum(ops::mul(out, g.leaf(w)));
  });
  EXPECT_LT(r.worst, 1e-3) << r.worst_name;
}

INSTANTIATE_TEST_SUITE_P(BothPaths, AttentionGradient, ::testing::Bool());
