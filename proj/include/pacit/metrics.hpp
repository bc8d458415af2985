#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pacit/error.hpp"
#include "pacit/outparse.hpp"

namespace pacit {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
  bool truncated = false;  // an input exceeded kRougeMaxTokens
};

inline constexpr std::size_t kRougeMaxTokens = 512;

/// Lowercased alphanumeric runs. Bytes >= 0x80 count as word characters so
/// non-ASCII text is kept whole rather than dropped.
inline std::vector<std::string> rouge_tokenize(std::string_view s) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

/// LCS length with two rolling rows.
template <class T>
std::size_t lcs_length(std::span<const T> a, std::span<const T> b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline RougeScore rouge_from_counts(std::size_t lcs, std::size_t ref_len, std::size_t hyp_len) {
  RougeScore r;
  r.precision = hyp_len ? static_cast<double>(lcs) / static_cast<double>(hyp_len) : 0.0;
  r.recall = ref_len ? static_cast<double>(lcs) / static_cast<double>(ref_len) : 0.0;
  const double pr = r.precision + r.recall;
  r.f_measure = pr > 0.0 ? 2.0 * r.precision * r.recall / pr : 0.0;
  return r;
}

inline RougeScore rouge_l(std::string_view reference, std::string_view hypothesis) {
  auto ref = rouge_tokenize(reference);
  auto hyp = rouge_tokenize(hypothesis);
  const bool truncated = ref.size() > kRougeMaxTokens || hyp.size() > kRougeMaxTokens;
  if (ref.size() > kRougeMaxTokens) ref.resize(kRougeMaxTokens);
  if (hyp.size() > kRougeMaxTokens) hyp.resize(kRougeMaxTokens);
  const std::size_t l = lcs_length<std::string>(ref, hyp);
  RougeScore r = rouge_from_counts(l, ref.size(), hyp.size());
  r.truncated = truncated;
  return r;
}

/// Best F over the references; ties keep the earliest reference.
inline RougeScore score_instance(std::span<const std::string> references,
                                 std::string_view hypothesis) {
  if (references.empty()) throw PreconditionError("score_instance: no references");
  RougeScore best = rouge_l(references[0], hypothesis);
  for (std::size_t i = 1; i < references.size(); ++i) {
    RougeScore s = rouge_l(references[i], hypothesis);
    if (s.f_measure > best.f_measure) best = s;
  }
  return best;
}

struct ScoredInstance {
  std::string task_id;
  RougeScore score;
};

/// Aggregated evaluation. Scores are stored as fractions in [0, 1]; the
/// JSON and text renderings scale them by 100.
struct MetricReport {
  std::map<std::string, double> per_task;  // mean F per task
  double overall = 0.0;                    // micro: mean over instances
  double overall_macro = 0.0;              // mean of per-task means
  std::optional<double> classification_accuracy;
  std::size_t n_instances = 0;
  std::size_t n_classified = 0;  // samples that carried example slots
  std::size_t n_truncated = 0;
  std::size_t n_full = 0;
  std::size_t n_partial = 0;
  std::size_t n_answer_only = 0;

  double answer_only_rate() const {
    const std::size_t n = n_full + n_partial + n_answer_only;
    return n ? static_cast<double>(n_answer_only) / static_cast<double>(n) : 0.0;
  }
};

/// `parsed` and `gold` are optional and aligned with each other (not with
/// `scored`); samples with an empty gold list do not enter the accuracy.
inline MetricReport aggregate(std::span<const ScoredInstance> scored,
                              std::span<const ParsedOutput> parsed = {},
                              std::span<const std::vector<Verdict>> gold = {}) {
  if (scored.empty()) throw PreconditionError("aggregate: no scored instances");
  MetricReport rep;
  std::map<std::string, std::pair<double, std::size_t>> sums;
  double total = 0.0;
  for (const auto& s : scored) {
    auto& [sum, n] = sums[s.task_id];
    sum += s.score.f_measure;
    ++n;
    total += s.score.f_measure;
    if (s.score.truncated) ++rep.n_truncated;
  }
  rep.n_instances = scored.size();
  rep.overall = total / static_cast<double>(scored.size());
  double macro = 0.0;
  for (const auto& [task, sn] : sums) {
    rep.per_task[task] = sn.first / static_cast<double>(sn.second);
    macro += rep.per_task[task];
  }
  rep.overall_macro = macro / static_cast<double>(sums.size());

  if (parsed.size() != gold.size())
    throw PreconditionError("aggregate: parsed outputs and gold labels are not aligned");
  std::vector<ParsedOutput> with_slots;
  std::vector<std::vector<Verdict>> gold_slots;
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    switch (parsed[i].status) {
      case ParseStatus::full: ++rep.n_full; break;
      case ParseStatus::partial: ++rep.n_partial; break;
      case ParseStatus::answer_only: ++rep.n_answer_only; break;
    }
    if (gold[i].empty()) continue;
    with_slots.push_back(parsed[i]);
    gold_slots.push_back(gold[i]);
  }
  rep.n_classified = gold_slots.size();
  if (!gold_slots.empty())
    rep.classification_accuracy = classification_accuracy(with_slots, gold_slots);
  return rep;
}

/// "Avg ROUGE-L" across inference settings: plain mean of setting scores.
inline double average_over_settings(std::span<const double> setting_scores) {
  if (setting_scores.empty()) throw PreconditionError("average_over_settings: no settings");
  double s = 0.0;
  for (double v : setting_scores) s += v;
  return s / static_cast<double>(setting_scores.size());
}

/// Sample Pearson correlation.
inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size())
    throw PreconditionError("pearson: series lengths differ");
  if (xs.size() < 2) throw PreconditionError("pearson: need at least two points");
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw ValidationError("pearson: correlation undefined for a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json per_task = nlohmann::json::object();
  for (const auto& [k, v] : r.per_task) per_task[k] = v * 100.0;
  nlohmann::json j{
      {"scale", 100},
      {"rouge_l", r.overall * 100.0},
      {"rouge_l_macro", r.overall_macro * 100.0},
      {"per_task", per_task},
      {"n_instances", r.n_instances},
      {"n_truncated", r.n_truncated},
      {"parse_status", {{"full", r.n_full}, {"partial", r.n_partial}, {"answer_only", r.n_answer_only}}},
      {"answer_only_rate", r.answer_only_rate()},
      {"n_classified", r.n_classified},
      {"rouge_tokenizer", "lowercase, split on non-alphanumeric runs, no stemming"},
  };
  j["classification_accuracy"] =
      r.classification_accuracy ? nlohmann::json(*r.classification_accuracy) : nlohmann::json();
  return j;
}

inline std::string format_report_text(const MetricReport& r) {
  std::size_t width = 8;
  for (const auto& [k, v] : r.per_task) width = std::max(width, k.size());
  std::string out;
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-*s  %9s\n", static_cast<int>(width), "task", "ROUGE-L");
  out += buf;
  out += std::string(width + 11, '-') + "\n";
  for (const auto& [k, v] : r.per_task) {
    std::snprintf(buf, sizeof buf, "%-*s  %9.2f\n", static_cast<int>(width), k.c_str(), v * 100.0);
    out += buf;
  }
  out += std::string(width + 11, '-') + "\n";
  std::snprintf(buf, sizeof buf, "%-*s  %9.2f\n", static_cast<int>(width), "overall", r.overall * 100.0);
  out += buf;
  std::snprintf(buf, sizeof buf, "%-*s  %9.2f\n", static_cast<int>(width), "macro", r.overall_macro * 100.0);
  out += buf;
  if (r.classification_accuracy) {
    std::snprintf(buf, sizeof buf, "%-*s  %9.4f\n", static_cast<int>(width), "cls-acc",
                  *r.classification_accuracy);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "instances %zu, answer-only rate %.4f, truncated %zu\n",
                r.n_instances, r.answer_only_rate(), r.n_truncated);
  out += buf;
  return out;
}

}  // namespace pacit
