#include <gtest/gtest.h>

#include <cmath>

#include "pacit/loss.hpp"
#include "pacit/rng.hpp"

using namespace pacit;

namespace {

RenderedSample sample(std::size_t k) {
  std::vector<Verdict> v(k, Verdict::correct);
  return render_pacit_target(v, ActionText{}, "the answer");
}

// Character-level tokenisation: one token per byte, plus an optional EOS.
TokenAlignment char_tokens(const std::string& t, bool eos) {
  TokenAlignment a{t, {}, eos};
  for (std::size_t i = 0; i < t.size(); ++i) a.token_offsets.push_back({i, i + 1});
  if (eos) a.token_offsets.push_back({t.size(), t.size()});
  return a;
}

}  // namespace

TEST(Loss, SpansCoverClassificationAndAnswer) {
  auto r = sample(2);
  auto sp = annotate_spans(r);
  ASSERT_TRUE(sp.classification);
  EXPECT_EQ(sp.classification->start, r.parts[0].start);
  EXPECT_EQ(sp.classification->end, r.parts[1].end);
  EXPECT_EQ(r.target.substr(sp.answer.start, sp.answer.size()), "the answer");
  EXPECT_LE(sp.classification->end, sp.answer.start);
}

TEST(Loss, ZeroExampleHasNoClassificationSpan) {
  auto sp = annotate_spans(sample(0));
  EXPECT_FALSE(sp.classification);
  EXPECT_EQ(sp.answer, (Range{0, 10}));
}

TEST(Loss, HandComputedWeightedSum) {
  TokenSpans ts{Range{0, 2}, Range{2, 3}};
  std::vector<double> lp{-0.5, -2.0, -0.25};
  auto b = masked_nll(lp, ts, 0.5);
  EXPECT_DOUBLE_EQ(b.l_c, 2.5);
  EXPECT_DOUBLE_EQ(b.l_a, 0.25);
  EXPECT_DOUBLE_EQ(b.total, 2.5 + 0.5 * 0.25);
  EXPECT_DOUBLE_EQ(b.total_mean(), 1.25 + 0.5 * 0.25);
  EXPECT_EQ(b.n_c, 2u);
  EXPECT_EQ(b.n_a, 1u);
}

TEST(Loss, LambdaLinearityAndZeroExampleEquality) {
  Rng r(2);
  std::vector<double> lp(20);
  for (auto& x : lp) x = -static_cast<double>(r.below(1000)) / 100.0;
  TokenSpans with{Range{0, 12}, Range{12, 20}}, without{std::nullopt, Range{12, 20}};
  auto b0 = masked_nll(lp, with, 0.0), b1 = masked_nll(lp, with, 1.0), b3 = masked_nll(lp, with, 3.0);
  EXPECT_NEAR(b3.total - b0.total, 3 * (b1.total - b0.total), 1e-9);
  // Without a classification span the loss is the plain answer NLL.
  auto a = masked_nll(lp, without, 1.0);
  double plain = 0;
  for (std::size_t i = 12; i < 20; ++i) plain -= lp[i];
  EXPECT_NEAR(a.total, plain, 1e-12);
  EXPECT_DOUBLE_EQ(a.l_c, 0.0);
}

TEST(Loss, RejectsBadLogprobs) {
  TokenSpans ts{std::nullopt, Range{0, 1}};
  EXPECT_THROW(masked_nll(std::vector<double>{0.1}, ts), PreconditionError);
  EXPECT_THROW(masked_nll(std::vector<double>{std::nan("")}, ts), PreconditionError);
  EXPECT_THROW(masked_nll(std::vector<double>{}, ts), PreconditionError);
}

TEST(Loss, TokenMappingWithEos) {
  auto r = sample(1);
  auto sp = annotate_spans(r);
  auto ts = map_spans_to_tokens(sp, char_tokens(r.target, true));
  ASSERT_TRUE(ts.classification);
  EXPECT_EQ(*ts.classification, *sp.classification);
  EXPECT_EQ(ts.answer.start, sp.answer.start);
  EXPECT_EQ(ts.answer.end, r.target.size() + 1);
}

TEST(Loss, TokenOverlapRuleOnCoarseTokens) {
  // "ab|cd|ef" with answer span [3,5): overlaps tokens 1 and 2.
  LossSpans sp{std::nullopt, Range{3, 5}};
  TokenAlignment a{"abcdef", {{0, 2}, {2, 4}, {4, 6}}, false};
  auto ts = map_spans_to_tokens(sp, a);
  EXPECT_EQ(ts.answer, (Range{1, 3}));
}

TEST(Loss, SeparatedSampleEosJoinsClassification) {
  RenderedSample r = render_separated_target(std::vector<Verdict>{Verdict::wrong}, ActionText{});
  auto sp = annotate_spans(r);
  EXPECT_TRUE(sp.answer.empty());
  auto ts = map_spans_to_tokens(sp, char_tokens(r.target, true));
  EXPECT_EQ(ts.classification->end, r.target.size() + 1);
  EXPECT_TRUE(ts.answer.empty());
}

TEST(Loss, InvalidAlignmentsRejected) {
  LossSpans sp{std::nullopt, Range{0, 2}};
  EXPECT_THROW(map_spans_to_tokens(sp, {"ab", {{0, 3}}, false}), PreconditionError);
  EXPECT_THROW(map_spans_to_tokens(sp, {"ab", {{1, 2}, {0, 1}}, false}), PreconditionError);
  EXPECT_THROW(map_spans_to_tokens(sp, {"ab", {{0, 2}}, true}), PreconditionError);
  RenderedSample bad{"", "abc", {{PartName::answer, 0, 9}}};
  EXPECT_THROW(annotate_spans(bad), InternalError);
}

TEST(Loss, SumLosses) {
  std::vector<LossBreakdown> parts{{1, 2, 0, 0.5, 1, 1}, {3, 4, 0, 0.5, 2, 2}};
  auto s = sum_losses(parts);
  EXPECT_DOUBLE_EQ(s.total, 4 + 0.5 * 6);
  parts[1].lambda = 1.0;
  EXPECT_THROW(sum_losses(parts), PreconditionError);
}
