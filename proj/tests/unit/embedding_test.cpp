#include <gtest/gtest.h>

#include <cmath>

#include "dctl/embedding.hpp"
#include "dctl/text.hpp"

using namespace dctl;

TEST(Embedding, Fnv1aReferenceValues) {
  EXPECT_EQ(fnv1a32(""), 0x811c9dc5u);
  EXPECT_EQ(fnv1a32("a"), 0xe40c292cu);
  EXPECT_EQ(fnv1a32("foobar"), 0xbf9cf968u);
}

TEST(Embedding, UnitNormAndDimension) {
  Vector v = embed("tiramisu contains custard cream");
  ASSERT_EQ(v.size(), kEmbeddingDim);
  EXPECT_NEAR(dot(v, v), 1.0, 1e-12);
}

TEST(Embedding, EmptyTextIsZeroVector) {
  Vector v = embed("  ...  ");
  ASSERT_EQ(v.size(), kEmbeddingDim);
  for (double x : v) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(cosine(v, embed("anything")), 0.0);
}

TEST(Embedding, BucketsMatchHashedCounts) {
  std::string text = "milk milk eggs";
  Vector expect(kEmbeddingDim, 0.0);
  for (const auto& t : tokenize(text)) expect[fnv1a32(t) % kEmbeddingDim] += 1.0;
  double norm = 0;
  for (double x : expect) norm += x * x;
  norm = std::sqrt(norm);
  Vector got = embed(text);
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) EXPECT_NEAR(got[i], expect[i] / norm, 1e-12);
}

TEST(Embedding, CosineOrdering) {
  Vector q = embed("calorie target for bob");
  EXPECT_GT(cosine(q, embed("bob daily calorie target 2000")), cosine(q, embed("inception screening friday")));
  EXPECT_NEAR(cosine(q, q), 1.0, 1e-12);
}
