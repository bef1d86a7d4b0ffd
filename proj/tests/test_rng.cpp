#include <decodelab/rng.hpp>

#include <gtest/gtest.h>

#include <set>
#include <vector>

using namespace decodelab;

TEST(RngTest, SameSeedSameStream) {
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(RngTest, Uniform01InUnitInterval) {
  Rng r(5);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(RngTest, UniformIndexCoversRange) {
  Rng r(11);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) ++hits[r.uniform_index(7)];
  for (int h : hits) EXPECT_NEAR(h, 1000, 150);
}

TEST(RngTest, UniformIntInclusiveBounds) {
  Rng r(3);
  std::set<int> seen;
  for (int i = 0; i < 2000; ++i) seen.insert(r.uniform_int(-2, 2));
  EXPECT_EQ(seen, (std::set<int>{-2, -1, 0, 1, 2}));
}

TEST(RngTest, ShuffleIsPermutation) {
  Rng r(8);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  r.shuffle(v);
  std::multiset<int> s(v.begin(), v.end());
  EXPECT_EQ(s, (std::multiset<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}));
}

TEST(RngTest, DerivedSeedsDependOnEveryInput) {
  const auto base = derive_seed(1, "g000001", 0);
  EXPECT_EQ(base, derive_seed(1, "g000001", 0));
  EXPECT_NE(base, derive_seed(2, "g000001", 0));
  EXPECT_NE(base, derive_seed(1, "g000002", 0));
  EXPECT_NE(base, derive_seed(1, "g000001", 1));
}

TEST(RngTest, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}
