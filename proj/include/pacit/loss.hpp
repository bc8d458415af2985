#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pacit/error.hpp"
#include "pacit/templater.hpp"

namespace pacit {

/// Half-open character (or token) range.
struct Range {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - start; }
  bool empty() const noexcept { return end == start; }
  friend bool operator==(const Range&, const Range&) = default;
};

/// Character spans of the two supervised stages inside a target.
struct LossSpans {
  std::optional<Range> classification;  // result sentence + action, with the scaffold between
  Range answer;                         // may be empty (separated classification samples)

  friend bool operator==(const LossSpans&, const LossSpans&) = default;
};

inline LossSpans annotate_spans(const RenderedSample& r) {
  std::size_t prev_end = 0;
  for (const auto& p : r.parts) {
    if (p.start > p.end || p.end > r.target.size())
      throw InternalError("part '" + std::string(to_string(p.name)) + "' lies outside the target");
    if (p.start < prev_end) throw InternalError("rendered parts overlap or are out of order");
    prev_end = p.end;
  }

  LossSpans spans;
  bool have_answer = false;
  for (const auto& p : r.parts) {
    if (p.name == PartName::answer) {
      if (have_answer) throw InternalError("target has more than one answer part");
      spans.answer = {p.start, p.end};
      have_answer = true;
      continue;
    }
    if (have_answer) throw InternalError("classification part follows the answer");
    if (!spans.classification)
      spans.classification = Range{p.start, p.end};
    else
      spans.classification->end = p.end;
  }
  if (!have_answer) spans.answer = {r.target.size(), r.target.size()};
  return spans;
}

struct TokenAlignment {
  std::string target_text;
  std::vector<Range> token_offsets;  // one per target token, character offsets
  bool eos_sentinel = false;         // last token is an end-of-text marker at (len, len)
};

struct TokenSpans {
  std::optional<Range> classification;
  Range answer;
};

/// A token belongs to a span when their character ranges share at least one
/// character. The end-of-text sentinel joins the answer (or, for targets
/// without an answer, the classification span).
inline TokenSpans map_spans_to_tokens(const LossSpans& spans, const TokenAlignment& align) {
  const std::size_t len = align.target_text.size();
  const auto& toks = align.token_offsets;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i].start > toks[i].end || toks[i].end > len)
      throw PreconditionError("token " + std::to_string(i) + " offsets [" +
                              std::to_string(toks[i].start) + ", " + std::to_string(toks[i].end) +
                              ") fall outside the target (length " + std::to_string(len) + ")");
    if (i && (toks[i].start < toks[i - 1].start || toks[i].end < toks[i - 1].end))
      throw PreconditionError("token offsets must be non-decreasing (token " +
                              std::to_string(i) + ")");
  }
  if (align.eos_sentinel && (toks.empty() || toks.back() != Range{len, len}))
    throw PreconditionError("eos sentinel must be the last token at the end of the target");

  const std::size_t n_text = align.eos_sentinel ? toks.size() - 1 : toks.size();
  auto cover = [&](const Range& span) {
    Range r{0, 0};
    bool any = false;
    for (std::size_t i = 0; i < n_text; ++i) {
      if (toks[i].start < span.end && span.start < toks[i].end) {
        if (!any) r.start = i;
        r.end = i + 1;
        any = true;
      }
    }
    return any ? r : Range{0, 0};
  };

  TokenSpans out;
  if (spans.classification) out.classification = cover(*spans.classification);
  out.answer = cover(spans.answer);
  if (align.eos_sentinel) {
    const std::size_t eos = toks.size() - 1;
    if (!spans.answer.empty()) {
      if (out.answer.empty()) out.answer.start = eos;
      out.answer.end = eos + 1;
    } else if (out.classification && spans.classification->end == len) {
      if (out.classification->empty()) out.classification->start = eos;
      out.classification->end = eos + 1;
    }
  }
  return out;
}

struct LossBreakdown {
  double l_c = 0.0;  // nats, summed over classification tokens
  double l_a = 0.0;  // nats, summed over answer tokens
  double total = 0.0;
  double lambda = 1.0;
  std::size_t n_c = 0;
  std::size_t n_a = 0;

  double mean_c() const noexcept { return n_c ? l_c / static_cast<double>(n_c) : 0.0; }
  double mean_a() const noexcept { return n_a ? l_a / static_cast<double>(n_a) : 0.0; }
  /// Per-token-mean objective: mean_c + lambda * mean_a.
  double total_mean() const noexcept { return mean_c() + lambda * mean_a(); }

  friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

/// L = L_c + lambda * L_a from per-token log-probabilities of the target.
inline LossBreakdown masked_nll(std::span<const double> token_logprobs, const TokenSpans& spans,
                                double lambda = 1.0) {
  for (std::size_t i = 0; i < token_logprobs.size(); ++i) {
    if (std::isnan(token_logprobs[i]))
      throw PreconditionError("log-probability of token " + std::to_string(i) + " is NaN");
    if (token_logprobs[i] > 0.0)
      throw PreconditionError("log-probability of token " + std::to_string(i) + " is positive");
  }
  if (std::isnan(lambda)) throw PreconditionError("lambda is NaN");

  auto sum = [&](const Range& r) {
    if (r.start > r.end || r.end > token_logprobs.size())
      throw PreconditionError("token span exceeds the log-probability sequence");
    double s = 0.0;
    for (std::size_t i = r.start; i < r.end; ++i) s -= token_logprobs[i];
    return s;
  };

  LossBreakdown b;
  b.lambda = lambda;
  if (spans.classification) {
    b.l_c = sum(*spans.classification);
    b.n_c = spans.classification->size();
  }
  b.l_a = sum(spans.answer);
  b.n_a = spans.answer.size();
  b.total = b.l_c + lambda * b.l_a;
  return b;
}

/// Corpus-level sum of per-sample losses (all samples must share lambda).
inline LossBreakdown sum_losses(std::span<const LossBreakdown> parts) {
  LossBreakdown acc;
  if (parts.empty()) return acc;
  acc.lambda = parts.front().lambda;
  for (const auto& p : parts) {
    if (p.lambda != acc.lambda) throw PreconditionError("sum_losses: mixed lambda values");
    acc.l_c += p.l_c;
    acc.l_a += p.l_a;
    acc.n_c += p.n_c;
    acc.n_a += p.n_a;
  }
  acc.total = acc.l_c + acc.lambda * acc.l_a;
  return acc;
}

}  // namespace pacit
