#pragma once

#include <cctype>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pacit/error.hpp"
#include "pacit/scaffold.hpp"
#include "pacit/templater.hpp"
#include "pacit/text.hpp"

namespace pacit {

enum class ParseStatus { full, partial, answer_only };

inline std::string_view to_string(ParseStatus s) noexcept {
  switch (s) {
    case ParseStatus::full: return "full";
    case ParseStatus::partial: return "partial";
    case ParseStatus::answer_only: return "answer_only";
  }
  return "?";
}

struct ParsedOutput {
  std::vector<Verdict> labels;  // one per ordinal, 1-based ordinal i at index i-1
  std::optional<std::string> action;
  std::string answer;
  ParseStatus status = ParseStatus::answer_only;
  bool strict_format = false;  // canonical words and scaffold, nothing normalised
};

namespace detail {

struct Clause {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t ordinal = 0;
  Verdict verdict = Verdict::unparsed;
  bool canonical = false;
};

inline bool is_alnum(char c) noexcept { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

inline std::size_t skip_blanks(std::string_view s, std::size_t p) noexcept {
  while (p < s.size() && (s[p] == ' ' || s[p] == '\t')) ++p;
  return p;
}

// Ordinals above this are treated as noise rather than allocating label slots.
inline constexpr std::size_t kMaxOrdinal = 64;

/// "example <n> is <verdict>" starting exactly at p.
inline std::optional<Clause> match_clause(std::string_view s, std::size_t p) {
  if (p > 0 && is_alnum(s[p - 1])) return std::nullopt;
  if (!text::istarts_with(s.substr(p), "example")) return std::nullopt;
  Clause c;
  c.start = p;
  p = skip_blanks(s, p + 7);
  if (p < s.size() && s[p] == '#') p = skip_blanks(s, p + 1);
  std::size_t digits = 0, ordinal = 0;
  while (p < s.size() && std::isdigit(static_cast<unsigned char>(s[p])) && digits < 6) {
    ordinal = ordinal * 10 + static_cast<std::size_t>(s[p] - '0');
    ++p;
    ++digits;
  }
  if (digits == 0 || ordinal == 0 || ordinal > kMaxOrdinal) return std::nullopt;
  std::size_t q = skip_blanks(s, p);
  if (q == p || !text::istarts_with(s.substr(q), "is")) return std::nullopt;
  p = q + 2;
  q = skip_blanks(s, p);
  if (q == p) return std::nullopt;
  std::size_t w = q;
  while (w < s.size() && std::isalpha(static_cast<unsigned char>(s[w]))) ++w;
  if (w < s.size() && is_alnum(s[w])) return std::nullopt;
  const std::string word = text::to_lower_ascii(s.substr(q, w - q));
  if (word == "correct" || word == "right")
    c.verdict = Verdict::correct;
  else if (word == "wrong" || word == "incorrect")
    c.verdict = Verdict::wrong;
  else
    return std::nullopt;
  const std::string_view raw = s.substr(q, w - q);
  c.canonical = raw == "correct" || raw == "wrong";
  c.ordinal = ordinal;
  c.end = w;
  return c;
}

inline std::optional<Clause> find_clause(std::string_view s, std::size_t from) {
  for (std::size_t p = from; p < s.size(); ++p) {
    if (s[p] != 'e' && s[p] != 'E') continue;
    if (auto c = match_clause(s, p)) return c;
  }
  return std::nullopt;
}

/// A clause continuing the sentence at p: [,] [and] clause.
inline std::optional<Clause> next_clause(std::string_view s, std::size_t p) {
  p = skip_blanks(s, p);
  if (p < s.size() && s[p] == ',') p = skip_blanks(s, p + 1);
  if (text::istarts_with(s.substr(p), "and")) {
    std::size_t q = skip_blanks(s, p + 3);
    if (q > p + 3) p = q;
  }
  return match_clause(s, p);
}

/// Line-start offset of the first answer marker line at or after `from`.
inline std::optional<std::pair<std::size_t, std::size_t>> find_answer_marker(
    std::string_view s, std::size_t from, const Scaffold& sc) {
  const std::string_view prefix = text::trim(sc.answer_prefix);  // "- Output:"
  std::string_view bare = prefix;                                 // "Output:"
  while (!bare.empty() && (bare.front() == '-' || bare.front() == ' ')) bare.remove_prefix(1);
  std::size_t line = from;
  if (line > 0 && s[line - 1] != '\n') {
    line = s.find('\n', from);
    if (line == std::string_view::npos) return std::nullopt;
    ++line;
  }
  while (line <= s.size()) {
    std::size_t p = skip_blanks(s, line);
    std::string_view rest = s.substr(p);
    if (!prefix.empty() && text::istarts_with(rest, prefix))
      return std::make_pair(line, p + prefix.size());
    if (!bare.empty() && text::istarts_with(rest, bare)) return std::make_pair(line, p + bare.size());
    std::size_t nl = s.find('\n', line);
    if (nl == std::string_view::npos) break;
    line = nl + 1;
  }
  return std::nullopt;
}

inline std::string_view strip_prefix_icase(std::string_view s, std::string_view prefix) {
  std::string_view t = text::trim(s);
  std::string_view p = text::trim(prefix);
  if (!p.empty() && text::istarts_with(t, p)) return text::trim(t.substr(p.size()));
  return t;
}

}  // namespace detail

/// Decodes a model generation into verdicts, action, and answer. Never throws
/// on the generation text; problems are reported through `status`.
inline ParsedOutput parse_output(std::string_view gen, std::size_t expected_examples,
                                 const Scaffold& sc = {}) {
  ParsedOutput out;
  const std::string_view answering_header = text::trim(sc.answering_header);
  const std::string_view classification_header = text::trim(sc.classification_header);

  auto verbatim = [&] {
    out.labels.clear();
    out.action.reset();
    out.answer = std::string(text::trim(gen));
    out.status = out.answer.empty() ? ParseStatus::partial : ParseStatus::full;
    out.strict_format = out.status == ParseStatus::full;
    return out;
  };

  auto first = detail::find_clause(gen, 0);
  if (!first && expected_examples == 0) return verbatim();
  if (!first) {
    // No classification sentence: everything (minus leading scaffold) is the answer.
    out.labels.assign(expected_examples, Verdict::unparsed);
    std::string_view rest = text::trim(gen);
    for (std::string_view header : {classification_header, answering_header}) {
      if (header.empty()) continue;
      std::size_t e = text::line_end(rest, 0);
      if (text::trim(rest.substr(0, e)) == header) rest = text::trim(rest.substr(e));
    }
    std::string_view bare = detail::strip_prefix_icase(rest, sc.answer_prefix);
    if (bare.size() == rest.size()) {
      std::string_view alt = text::trim(sc.answer_prefix);
      while (!alt.empty() && (alt.front() == '-' || alt.front() == ' ')) alt.remove_prefix(1);
      bare = detail::strip_prefix_icase(rest, alt);
    }
    out.answer = std::string(bare);
    out.status = ParseStatus::answer_only;
    return out;
  }

  std::vector<detail::Clause> clauses{*first};
  while (auto c = detail::next_clause(gen, clauses.back().end)) clauses.push_back(*c);
  std::size_t sentence_end = clauses.back().end;
  if (sentence_end < gen.size() && gen[sentence_end] == '.') ++sentence_end;

  std::size_t n = expected_examples;
  for (const auto& c : clauses) n = std::max(n, c.ordinal);
  out.labels.assign(n, Verdict::unparsed);
  bool canonical = true;
  for (const auto& c : clauses) {
    if (out.labels[c.ordinal - 1] == Verdict::unparsed) out.labels[c.ordinal - 1] = c.verdict;
    canonical = canonical && c.canonical;
  }

  const auto marker = detail::find_answer_marker(gen, sentence_end, sc);
  // Without examples a clause-like phrase is only structure if an answer marker follows.
  if (!marker && expected_examples == 0) return verbatim();
  const std::size_t action_end = marker ? marker->first : gen.size();

  // Action: text between the sentence and the answer marker, minus scaffold lines.
  std::string action;
  {
    std::string_view region = gen.substr(sentence_end, action_end - sentence_end);
    std::size_t p = 0;
    while (p <= region.size()) {
      std::size_t e = text::line_end(region, p);
      std::string_view line = text::trim(region.substr(p, e - p));
      if (!line.empty() && !(text::istarts_with(line, answering_header) &&
                             line.size() == answering_header.size())) {
        line = detail::strip_prefix_icase(line, sc.action_prefix);
        if (!action.empty()) action += '\n';
        action += line;
      }
      if (e >= region.size()) break;
      p = e + 1;
    }
  }
  std::string_view action_view = text::trim(action);
  if (!action_view.empty()) out.action = std::string(action_view);

  if (marker) out.answer = std::string(text::trim(gen.substr(marker->second)));

  bool complete = marker && !out.answer.empty();
  for (auto v : out.labels) complete = complete && v != Verdict::unparsed;
  if (expected_examples > 0) complete = complete && out.labels.size() == expected_examples;
  out.status = complete ? ParseStatus::full : ParseStatus::partial;

  if (out.status == ParseStatus::full && canonical) {
    const std::string sentence(gen.substr(first->start, sentence_end - first->start));
    out.strict_format = sentence == classification_sentence(out.labels);
  }
  return out;
}

/// Fraction of example slots whose parsed verdict equals the gold verdict.
/// Unparsed or missing verdicts count as wrong.
inline double classification_accuracy(std::span<const ParsedOutput> parsed,
                                      std::span<const std::vector<Verdict>> gold) {
  if (parsed.size() != gold.size())
    throw PreconditionError("classification_accuracy: " + std::to_string(parsed.size()) +
                            " parsed outputs vs " + std::to_string(gold.size()) + " gold lists");
  std::size_t slots = 0, hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (std::size_t j = 0; j < gold[i].size(); ++j) {
      ++slots;
      if (j < parsed[i].labels.size() && parsed[i].labels[j] == gold[i][j] &&
          gold[i][j] != Verdict::unparsed)
        ++hits;
    }
  }
  if (slots == 0) throw PreconditionError("classification_accuracy: no example slots to score");
  return static_cast<double>(hits) / static_cast<double>(slots);
}

}  // namespace pacit
