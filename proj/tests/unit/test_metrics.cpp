#include <gtest/gtest.h>

#include <cmath>

#include "pacit/metrics.hpp"
#include "pacit/rng.hpp"

using namespace pacit;

namespace {

// Exhaustive oracle: longest subsequence of `a` (by bitmask) that is also a subsequence of `b`.
std::size_t brute_lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::size_t best = 0;
  for (std::uint32_t mask = 0; mask < (1u << a.size()); ++mask) {
    std::size_t j = 0, len = 0;
    bool ok = true;
    for (std::size_t i = 0; i < a.size() && ok; ++i) {
      if (!(mask >> i & 1)) continue;
      while (j < b.size() && b[j] != a[i]) ++j;
      if (j == b.size()) ok = false;
      else { ++j; ++len; }
    }
    if (ok) best = std::max(best, len);
  }
  return best;
}

std::vector<std::string> random_words(Rng& r, std::size_t max_len) {
  static const char* vocab[] = {"a", "b", "c", "d"};
  std::vector<std::string> w(r.below(max_len + 1));
  for (auto& x : w) x = vocab[r.below(4)];
  return w;
}

}  // namespace

TEST(Rouge, FixedCase) {
  auto s = rouge_l("the cat sat", "the cat");
  EXPECT_DOUBLE_EQ(s.precision, 1.0);
  EXPECT_NEAR(s.recall, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.f_measure, 0.8, 1e-12);
}

TEST(Rouge, TokenizerLowercasesAndSplits) {
  EXPECT_EQ(rouge_tokenize("Hello, WORLD! it's 42"),
            (std::vector<std::string>{"hello", "world", "it", "s", "42"}));
  EXPECT_TRUE(rouge_tokenize(" ,.; ").empty());
  EXPECT_EQ(rouge_tokenize("café au lait").size(), 3u);
}

TEST(Rouge, LcsMatchesBruteForce) {
  Rng r(1);
  for (int i = 0; i < 400; ++i) {
    auto a = random_words(r, 9), b = random_words(r, 9);
    EXPECT_EQ(lcs_length<std::string>(a, b), brute_lcs(a, b));
  }
}

TEST(Rouge, EdgeCases) {
  EXPECT_DOUBLE_EQ(rouge_l("", "").f_measure, 0.0);
  EXPECT_DOUBLE_EQ(rouge_l("a b", "").f_measure, 0.0);
  EXPECT_DOUBLE_EQ(rouge_l("A b", "a, B").f_measure, 1.0);
  std::string long_text;
  for (int i = 0; i < 600; ++i) long_text += "w" + std::to_string(i) + " ";
  auto s = rouge_l(long_text, long_text);
  EXPECT_TRUE(s.truncated);
  EXPECT_DOUBLE_EQ(s.f_measure, 1.0);
}

TEST(Rouge, MultiReferenceTakesMax) {
  std::vector<std::string> refs{"the dog", "the cat sat", "cat"};
  EXPECT_NEAR(score_instance(refs, "the cat").f_measure, 0.8, 1e-12);
  EXPECT_THROW(score_instance({}, "x"), PreconditionError);
}

TEST(Metrics, AggregateMicroAndMacro) {
  std::vector<ScoredInstance> s{{"t1", {0, 0, 1.0, false}}, {"t1", {0, 0, 0.0, false}},
                                {"t2", {0, 0, 0.4, true}}};
  auto rep = aggregate(s);
  EXPECT_NEAR(rep.overall, 1.4 / 3, 1e-12);
  EXPECT_NEAR(rep.overall_macro, (0.5 + 0.4) / 2, 1e-12);
  EXPECT_EQ(rep.n_truncated, 1u);
  EXPECT_FALSE(rep.classification_accuracy);
  auto j = to_json(rep);
  EXPECT_NEAR(j["rouge_l"].get<double>(), 100 * 1.4 / 3, 1e-9);
  EXPECT_THROW(aggregate({}), PreconditionError);
}

TEST(Metrics, AggregateAccuracyAndParseRates) {
  std::vector<ScoredInstance> s{{"t", {0, 0, 1.0, false}}, {"t", {0, 0, 1.0, false}}};
  std::vector<ParsedOutput> p(2);
  p[0].labels = {Verdict::correct};
  p[0].status = ParseStatus::full;
  p[1].status = ParseStatus::answer_only;
  std::vector<std::vector<Verdict>> g{{Verdict::correct}, {}};
  auto rep = aggregate(s, p, g);
  EXPECT_DOUBLE_EQ(rep.classification_accuracy.value(), 1.0);
  EXPECT_EQ(rep.n_classified, 1u);
  EXPECT_DOUBLE_EQ(rep.answer_only_rate(), 0.5);
}

TEST(Metrics, PearsonClosedForm) {
  // x = 1..4, y = 1,3,2,5: mean 2.5/2.75, Sxy = 5.5, Sxx = 5, Syy = 8.75.
  std::vector<double> x{1, 2, 3, 4}, y{1, 3, 2, 5};
  EXPECT_NEAR(pearson(x, y), 5.5 / std::sqrt(5.0 * 8.75), 1e-12);
  std::vector<double> neg{4, 3, 2, 1};
  EXPECT_NEAR(pearson(x, neg), -1.0, 1e-12);
  EXPECT_THROW(pearson(x, std::vector<double>{1, 1, 1, 1}), ValidationError);
  EXPECT_THROW(pearson(std::vector<double>{1}, std::vector<double>{1}), PreconditionError);
  EXPECT_THROW(pearson(x, std::vector<double>{1, 2}), PreconditionError);
}

TEST(Metrics, AverageOverSettings) {
  std::vector<double> v{38.02, 40.59};
  EXPECT_NEAR(average_over_settings(v), 39.305, 1e-12);
  EXPECT_THROW(average_over_settings({}), PreconditionError);
}
