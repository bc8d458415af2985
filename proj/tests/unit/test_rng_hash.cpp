#include <gtest/gtest.h>

#include <map>
#include <set>

#include "pacit/hash.hpp"
#include "pacit/rng.hpp"

using namespace pacit;

TEST(Hash, Fnv1aKnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Rng, EngineMatchesStandardSequence) {
  // The standard pins the 10000th output of a default-seeded mt19937_64.
  Rng r(5489u);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = r.next();
  EXPECT_EQ(v, 9981545732273789042ULL);
}

TEST(Rng, DeriveSeedSeparatesStreamsAndKeys) {
  EXPECT_EQ(derive_seed(1, "split", "t1"), derive_seed(1, "split", "t1"));
  EXPECT_NE(derive_seed(1, "split", "t1"), derive_seed(1, "split", "t2"));
  EXPECT_NE(derive_seed(1, "split", "t1"), derive_seed(1, "shuffle", "t1"));
  EXPECT_NE(derive_seed(1, "split", "t1"), derive_seed(2, "split", "t1"));
}

TEST(Rng, BelowStaysInRangeAndCoversIt) {
  Rng r(42);
  std::map<std::uint64_t, int> counts;
  const int n = 60000;
  for (int i = 0; i < n; ++i) {
    auto v = r.below(6);
    ASSERT_LT(v, 6u);
    ++counts[v];
  }
  // 5-sigma bound on each cell of a fair 6-way draw.
  const double p = 1.0 / 6, mean = n * p, sd = std::sqrt(n * p * (1 - p));
  for (auto& [k, c] : counts) EXPECT_NEAR(c, mean, 5 * sd) << "value " << k;
  EXPECT_EQ(r.below(1), 0u);
}

TEST(Rng, SampleIndicesDistinctAndCapped) {
  Rng r(3);
  for (int rep = 0; rep < 200; ++rep) {
    auto idx = r.sample_indices(7, 4);
    ASSERT_EQ(idx.size(), 4u);
    std::set<std::size_t> s(idx.begin(), idx.end());
    EXPECT_EQ(s.size(), 4u);
    for (auto i : idx) EXPECT_LT(i, 7u);
  }
  EXPECT_EQ(r.sample_indices(2, 5).size(), 2u);
  EXPECT_TRUE(r.sample_indices(0, 3).empty());
}

TEST(Rng, ShuffleIsAPermutationAndUniformOnThree) {
  Rng r(9);
  std::map<std::vector<int>, int> seen;
  const int n = 30000;
  for (int i = 0; i < n; ++i) {
    std::vector<int> v{0, 1, 2};
    r.shuffle(v);
    ++seen[v];
  }
  ASSERT_EQ(seen.size(), 6u);
  const double p = 1.0 / 6, sd = std::sqrt(n * p * (1 - p));
  for (auto& [perm, c] : seen) EXPECT_NEAR(c, n * p, 5 * sd);
}
