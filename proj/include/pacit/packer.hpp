#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "pacit/corpus.hpp"
#include "pacit/error.hpp"
#include "pacit/length.hpp"
#include "pacit/loss.hpp"
#include "pacit/rng.hpp"
#include "pacit/templater.hpp"

namespace pacit {

enum class Variant {
  pacit,
  pacit_no_action,  // ablation: classification result without the action line
  superni_fewshot,
  zero_shot,
  separated_classification,
  separated_answering,
};

inline std::string_view to_string(Variant v) noexcept {
  switch (v) {
    case Variant::pacit: return "pacit";
    case Variant::pacit_no_action: return "pacit_no_action";
    case Variant::superni_fewshot: return "superni_fewshot";
    case Variant::zero_shot: return "zero_shot";
    case Variant::separated_classification: return "separated_classification";
    case Variant::separated_answering: return "separated_answering";
  }
  return "?";
}

inline Variant variant_from_string(std::string_view s) {
  for (Variant v : {Variant::pacit, Variant::pacit_no_action, Variant::superni_fewshot,
                    Variant::zero_shot, Variant::separated_classification,
                    Variant::separated_answering})
    if (to_string(v) == s) return v;
  throw ParseError("unknown variant '" + std::string(s) + "'");
}

enum class SampleType { without_examples, only_positive, only_negative, mixing };

inline constexpr std::array<SampleType, 4> kSampleTypes{
    SampleType::without_examples, SampleType::only_positive, SampleType::only_negative,
    SampleType::mixing};

inline std::string_view to_string(SampleType t) noexcept {
  switch (t) {
    case SampleType::without_examples: return "without_examples";
    case SampleType::only_positive: return "only_positive";
    case SampleType::only_negative: return "only_negative";
    case SampleType::mixing: return "mixing";
  }
  return "?";
}

inline SampleType sample_type_from_string(std::string_view s) {
  for (SampleType t : kSampleTypes)
    if (to_string(t) == s) return t;
  throw ParseError("unknown sample type '" + std::string(s) + "'");
}

inline SampleType sample_type_of(std::span<const Tag> tags) noexcept {
  bool pos = false, neg = false;
  for (Tag t : tags) (t == Tag::positive ? pos : neg) = true;
  if (pos && neg) return SampleType::mixing;
  if (pos) return SampleType::only_positive;
  if (neg) return SampleType::only_negative;
  return SampleType::without_examples;
}

enum class LabelMode { ground_truth, random };

inline std::string_view to_string(LabelMode m) noexcept {
  return m == LabelMode::ground_truth ? "ground_truth" : "random";
}

inline LabelMode label_mode_from_string(std::string_view s) {
  if (s == "ground_truth") return LabelMode::ground_truth;
  if (s == "random") return LabelMode::random;
  throw ParseError("unknown label mode '" + std::string(s) + "'");
}

struct PackedSample {
  std::string sample_id;
  std::string task_id;
  std::string instance_id;
  Variant variant = Variant::pacit;
  SampleType sample_type = SampleType::without_examples;
  std::string prompt;
  std::string target;
  std::vector<Tag> example_tags;       // true tags, in prompt order
  std::vector<Verdict> target_labels;  // verdicts written into the target
  LossSpans spans;
  std::vector<Part> parts;
  std::vector<std::string> references;  // every reference output of the instance
  std::uint64_t seed = 0;
  LabelMode label_mode = LabelMode::ground_truth;
  bool input_truncated = false;
  bool target_over_budget = false;

  friend bool operator==(const PackedSample&, const PackedSample&) = default;
};

struct PackConfig {
  LengthBudget budget{};
  RenderStyle style{};
  ActionText action{};
  std::size_t k_pos = 1;
  std::size_t k_neg = 1;
};

namespace detail {

struct Draw {
  std::vector<LabeledExample> candidates;  // shuffled
};

inline Draw draw_examples(const Task& task, std::size_t k_pos, std::size_t k_neg,
                          std::uint64_t seed) {
  Rng rng(seed);
  Draw d;
  for (std::size_t i : rng.sample_indices(task.positive_pool.size(), k_pos))
    d.candidates.push_back(task.positive_pool[i]);
  for (std::size_t i : rng.sample_indices(task.negative_pool.size(), k_neg))
    d.candidates.push_back(task.negative_pool[i]);
  rng.shuffle(d.candidates);
  return d;
}

using PromptFn =
    std::function<std::string(std::span<const LabeledExample>, std::string_view input)>;

/// Longest UTF-8-clean prefix of the instance input for which every prompt
/// (rendered with no examples) fits the budget.
inline std::string fit_input(const std::string& input, std::span<const PromptFn> prompts,
                             const LengthBudget& budget, bool& truncated) {
  auto fits = [&](std::string_view in) {
    for (const auto& p : prompts)
      if (budget.length_fn(p({}, in)) > budget.max_input_units) return false;
    return true;
  };
  truncated = false;
  if (fits(input)) return input;
  if (!fits({}))
    throw ValidationError("task definition alone exceeds the input budget of " +
                          std::to_string(budget.max_input_units) + " units");
  std::vector<std::size_t> cuts{0};  // UTF-8 character boundaries
  for (std::size_t i = 1; i < input.size(); ++i)
    if ((static_cast<unsigned char>(input[i]) & 0xC0) != 0x80) cuts.push_back(i);
  std::size_t lo = 0, hi = cuts.size();  // fits(cuts[lo]) holds; cut hi is the full input
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (fits(std::string_view(input).substr(0, cuts[mid])))
      lo = mid;
    else
      hi = mid;
  }
  truncated = true;
  return input.substr(0, cuts[lo]);
}

/// Appends candidates in order until one would push a prompt past the budget.
inline std::vector<LabeledExample> add_incrementally(const std::vector<LabeledExample>& candidates,
                                                     std::string_view input,
                                                     std::span<const PromptFn> prompts,
                                                     const LengthBudget& budget) {
  std::vector<LabeledExample> kept;
  for (const auto& c : candidates) {
    kept.push_back(c);
    bool ok = true;
    for (const auto& p : prompts)
      if (budget.length_fn(p(kept, input)) > budget.max_input_units) ok = false;
    if (!ok) {
      kept.pop_back();
      break;
    }
  }
  return kept;
}

inline std::vector<Tag> tags_of(std::span<const LabeledExample> ex) {
  std::vector<Tag> t;
  for (const auto& e : ex) t.push_back(e.tag);
  return t;
}

inline void check_k(const PackConfig& cfg) {
  if (cfg.k_pos + cfg.k_neg > cfg.style.max_examples)
    throw PreconditionError("k_pos + k_neg = " + std::to_string(cfg.k_pos + cfg.k_neg) +
                            " exceeds the maximum of " + std::to_string(cfg.style.max_examples) +
                            " examples per sample");
}

inline const std::string& training_answer(const TaskInstance& inst) {
  if (inst.outputs.empty() || inst.outputs.front().empty())
    throw ValidationError("instance " + inst.id + ": first reference output is empty");
  return inst.outputs.front();
}

inline void finish(PackedSample& s, const RenderedSample& r, const PackConfig& cfg) {
  s.target = r.target;
  s.parts = r.parts;
  s.spans = annotate_spans(r);
  s.sample_type = sample_type_of(s.example_tags);
  s.target_over_budget = cfg.budget.length_fn(s.target) > cfg.budget.max_output_units;
}

}  // namespace detail

/// Per-sample seed: one draw per (task, instance) under the run seed.
inline std::uint64_t sample_seed(std::uint64_t run_seed, std::string_view task_id,
                                 std::string_view instance_id) {
  std::string key(task_id);
  key += '\x1f';
  key += instance_id;
  return derive_seed(run_seed, "shuffle", key);
}

inline std::string sample_id_for(std::string_view task_id, std::string_view instance_id) {
  return std::string(task_id) + "/" + std::string(instance_id);
}

/// One packed sample: definition + instance first, then the shuffled
/// positive/negative draw added one example at a time until the next one
/// would exceed the input budget.
inline PackedSample assemble(const Task& task, const TaskInstance& instance, const PackConfig& cfg,
                             Variant variant, std::uint64_t rng_seed) {
  if (variant == Variant::separated_classification || variant == Variant::separated_answering)
    throw PreconditionError("separated variants are built with assemble_separated");
  detail::check_k(cfg);
  cfg.budget.validate();
  const RenderStyle& style = cfg.style;
  const std::string& answer = detail::training_answer(instance);

  detail::PromptFn prompt;
  switch (variant) {
    case Variant::pacit:
    case Variant::pacit_no_action:
      prompt = [&](std::span<const LabeledExample> ex, std::string_view in) {
        return render_pacit_prompt(task.definition, ex, in, style);
      };
      break;
    case Variant::superni_fewshot:
      prompt = [&](std::span<const LabeledExample> ex, std::string_view in) {
        return render_superni_fewshot_prompt(task.definition, ex, in, style);
      };
      break;
    default:
      prompt = [&](std::span<const LabeledExample>, std::string_view in) {
        return render_zero_shot_prompt(task.definition, in, style);
      };
      break;
  }
  const std::array<detail::PromptFn, 1> prompts{prompt};

  PackedSample s;
  s.sample_id = sample_id_for(task.task_id, instance.id);
  s.task_id = task.task_id;
  s.instance_id = instance.id;
  s.variant = variant;
  s.seed = rng_seed;
  s.references = instance.outputs;

  const std::string input = detail::fit_input(instance.input, prompts, cfg.budget, s.input_truncated);
  std::vector<LabeledExample> kept;
  if (variant != Variant::zero_shot) {
    const auto draw = detail::draw_examples(task, cfg.k_pos, cfg.k_neg, rng_seed);
    kept = detail::add_incrementally(draw.candidates, input, prompts, cfg.budget);
  }
  s.example_tags = detail::tags_of(kept);

  RenderedSample r;
  switch (variant) {
    case Variant::pacit:
      r = render_pacit(task.definition, kept, input, answer, cfg.action, style);
      s.target_labels = verdicts_for(kept);
      break;
    case Variant::pacit_no_action:
      r = render_pacit_no_action(task.definition, kept, input, answer, style);
      s.target_labels = verdicts_for(kept);
      break;
    case Variant::superni_fewshot:
      r = render_superni_fewshot(task.definition, kept, input, answer, style);
      break;
    default:
      r = render_zero_shot(task.definition, input, answer, style);
      break;
  }
  s.prompt = std::move(r.prompt);
  detail::finish(s, r, cfg);
  return s;
}

struct SeparatedPair {
  std::optional<PackedSample> classification;  // absent when no example survives
  PackedSample answering;
};

/// Ablation with the two stages in separate sub-samples that share one draw:
/// a classification sample over all surviving examples and a conventional
/// few-shot answering sample.
inline SeparatedPair assemble_separated(const Task& task, const TaskInstance& instance,
                                        const PackConfig& cfg, std::uint64_t rng_seed) {
  detail::check_k(cfg);
  cfg.budget.validate();
  const RenderStyle& style = cfg.style;
  const std::string& answer = detail::training_answer(instance);

  const std::array<detail::PromptFn, 2> prompts{
      [&](std::span<const LabeledExample> ex, std::string_view in) {
        return render_superni_fewshot_prompt(task.definition, ex, in, style);
      },
      [&](std::span<const LabeledExample> ex, std::string_view) {
        return ex.empty() ? std::string() : render_separated_prompt(task.definition, ex, style);
      }};

  SeparatedPair out;
  PackedSample& a = out.answering;
  a.sample_id = sample_id_for(task.task_id, instance.id);
  a.task_id = task.task_id;
  a.instance_id = instance.id;
  a.variant = Variant::separated_answering;
  a.seed = rng_seed;
  a.references = instance.outputs;

  const std::string input = detail::fit_input(instance.input, prompts, cfg.budget, a.input_truncated);
  const auto draw = detail::draw_examples(task, cfg.k_pos, cfg.k_neg, rng_seed);
  const auto kept = detail::add_incrementally(draw.candidates, input, prompts, cfg.budget);
  a.example_tags = detail::tags_of(kept);

  RenderedSample ra = render_superni_fewshot(task.definition, kept, input, answer, style);
  a.prompt = std::move(ra.prompt);
  detail::finish(a, ra, cfg);

  if (!kept.empty()) {
    PackedSample c;
    c.sample_id = a.sample_id + "#cls";
    c.task_id = task.task_id;
    c.instance_id = instance.id;
    c.variant = Variant::separated_classification;
    c.seed = rng_seed;
    c.example_tags = a.example_tags;
    c.target_labels = verdicts_for(kept);
    RenderedSample rc = render_separated_classification(task.definition, kept, cfg.action, style);
    c.prompt = std::move(rc.prompt);
    detail::finish(c, rc, cfg);
    out.classification = std::move(c);
  }
  return out;
}

/// Replaces every verdict written into a target by a fair coin flip. Prompts
/// and true tags are untouched; spans are recomputed.
inline std::vector<PackedSample> randomize_labels(std::vector<PackedSample> samples,
                                                  std::uint64_t rng_seed,
                                                  const RenderStyle& style = {}) {
  for (auto& s : samples) {
    if (s.target_labels.empty()) continue;
    Rng rng(derive_seed(rng_seed, "labels", s.sample_id));
    for (auto& v : s.target_labels) v = rng.coin() ? Verdict::correct : Verdict::wrong;

    RenderedSample current{{}, s.target, s.parts};
    const std::string answer(current.part_text(PartName::answer));
    std::optional<ActionText> action;
    if (current.has_part(PartName::action))
      action = ActionText{std::string(current.part_text(PartName::action))};

    RenderedSample r;
    if (s.variant == Variant::separated_classification)
      r = render_separated_target(s.target_labels, action.value_or(ActionText{}), style);
    else
      r = render_pacit_target(s.target_labels, action, answer, style);
    s.target = std::move(r.target);
    s.parts = std::move(r.parts);
    s.spans = annotate_spans({{}, s.target, s.parts});
    s.label_mode = LabelMode::random;
  }
  return samples;
}

struct CorpusStats {
  std::size_t n_samples = 0;
  std::array<std::size_t, 4> type_counts{};  // indexed like kSampleTypes
  double avg_examples_per_sample = 0.0;
  std::map<std::string, std::size_t> per_task;
  std::size_t n_input_truncated = 0;
  std::size_t n_target_over_budget = 0;

  double proportion(SampleType t) const {
    return n_samples ? static_cast<double>(type_counts[static_cast<std::size_t>(t)]) /
                           static_cast<double>(n_samples)
                     : 0.0;
  }
};

inline CorpusStats corpus_stats(std::span<const PackedSample> samples) {
  if (samples.empty()) throw PreconditionError("corpus_stats: empty corpus");
  CorpusStats st;
  st.n_samples = samples.size();
  std::size_t examples = 0;
  for (const auto& s : samples) {
    ++st.type_counts[static_cast<std::size_t>(s.sample_type)];
    examples += s.example_tags.size();
    ++st.per_task[s.task_id];
    st.n_input_truncated += s.input_truncated;
    st.n_target_over_budget += s.target_over_budget;
  }
  st.avg_examples_per_sample = static_cast<double>(examples) / static_cast<double>(samples.size());
  return st;
}

/// Average example pool sizes per task (task-level, unlike the per-sample average).
struct PoolStats {
  std::size_t n_tasks = 0;
  double avg_positive = 0.0;
  double avg_negative = 0.0;
};

inline PoolStats pool_stats(std::span<const Task> tasks) {
  PoolStats p;
  p.n_tasks = tasks.size();
  if (tasks.empty()) return p;
  for (const auto& t : tasks) {
    p.avg_positive += static_cast<double>(t.positive_pool.size());
    p.avg_negative += static_cast<double>(t.negative_pool.size());
  }
  p.avg_positive /= static_cast<double>(tasks.size());
  p.avg_negative /= static_cast<double>(tasks.size());
  return p;
}

struct BuildResult {
  std::vector<PackedSample> samples;
  std::vector<std::string> warnings;
};

/// Packs every sampled instance of one split. Work is spread over `threads`
/// workers per task; output order and bytes do not depend on thread count.
inline BuildResult build_corpus(std::span<const Task> tasks, std::span<const SplitSample> split,
                                const PackConfig& cfg, Variant variant, LabelMode label_mode,
                                std::uint64_t run_seed, unsigned threads = 1) {
  std::vector<BuildResult> per_task(split.size());
  auto work = [&](std::size_t i) {
    const SplitSample& ss = split[i];
    const Task& task = tasks[ss.task_index];
    BuildResult& out = per_task[i];
    for (const auto& inst : ss.instances) {
      const std::uint64_t seed = sample_seed(run_seed, task.task_id, inst.id);
      try {
        if (variant == Variant::separated_classification ||
            variant == Variant::separated_answering) {
          auto pair = assemble_separated(task, inst, cfg, seed);
          if (pair.classification) out.samples.push_back(std::move(*pair.classification));
          out.samples.push_back(std::move(pair.answering));
        } else {
          out.samples.push_back(assemble(task, inst, cfg, variant, seed));
        }
        if (out.samples.back().input_truncated)
          out.warnings.push_back(sample_id_for(task.task_id, inst.id) +
                                 ": instance input truncated to fit the budget");
      } catch (const ValidationError& e) {
        out.warnings.push_back(sample_id_for(task.task_id, inst.id) + ": skipped: " + e.what());
      }
    }
    if (label_mode == LabelMode::random)
      out.samples = randomize_labels(std::move(out.samples), run_seed, cfg.style);
  };

  threads = std::max(1u, threads);
  if (threads == 1 || split.size() < 2) {
    for (std::size_t i = 0; i < split.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = next++; i < split.size(); i = next++) work(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  BuildResult all;
  for (auto& r : per_task) {
    std::move(r.samples.begin(), r.samples.end(), std::back_inserter(all.samples));
    std::move(r.warnings.begin(), r.warnings.end(), std::back_inserter(all.warnings));
  }
  return all;
}

// ---- JSONL -------------------------------------------------------------

inline nlohmann::ordered_json to_json(const PackedSample& s) {
  nlohmann::ordered_json j;
  j["sample_id"] = s.sample_id;
  j["task_id"] = s.task_id;
  j["instance_id"] = s.instance_id;
  j["variant"] = to_string(s.variant);
  j["sample_type"] = to_string(s.sample_type);
  j["prompt"] = s.prompt;
  j["target"] = s.target;
  auto tags = nlohmann::ordered_json::array();
  for (Tag t : s.example_tags) tags.push_back(to_string(t));
  j["example_tags"] = std::move(tags);
  auto labels = nlohmann::ordered_json::array();
  for (Verdict v : s.target_labels) labels.push_back(to_string(v));
  j["target_labels"] = std::move(labels);
  nlohmann::ordered_json spans;
  spans["classification"] =
      s.spans.classification
          ? nlohmann::ordered_json::array({s.spans.classification->start, s.spans.classification->end})
          : nlohmann::ordered_json();
  spans["answer"] = nlohmann::ordered_json::array({s.spans.answer.start, s.spans.answer.end});
  j["spans"] = std::move(spans);
  auto parts = nlohmann::ordered_json::array();
  for (const auto& p : s.parts) parts.push_back({to_string(p.name), p.start, p.end});
  j["parts"] = std::move(parts);
  j["references"] = s.references;
  j["seed"] = s.seed;
  j["label_mode"] = to_string(s.label_mode);
  j["input_truncated"] = s.input_truncated;
  j["target_over_budget"] = s.target_over_budget;
  return j;
}

inline std::string to_jsonl_line(const PackedSample& s) {
  return to_json(s).dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

inline PackedSample packed_sample_from_json(const nlohmann::json& j) {
  try {
    PackedSample s;
    s.sample_id = j.at("sample_id").get<std::string>();
    s.task_id = j.at("task_id").get<std::string>();
    s.instance_id = j.at("instance_id").get<std::string>();
    s.variant = variant_from_string(j.at("variant").get<std::string>());
    s.sample_type = sample_type_from_string(j.at("sample_type").get<std::string>());
    s.prompt = j.at("prompt").get<std::string>();
    s.target = j.at("target").get<std::string>();
    for (const auto& t : j.at("example_tags")) s.example_tags.push_back(tag_from_string(t.get<std::string>()));
    if (auto it = j.find("target_labels"); it != j.end())
      for (const auto& v : *it) s.target_labels.push_back(verdict_from_string(v.get<std::string>()));
    const auto& sp = j.at("spans");
    if (!sp.at("classification").is_null())
      s.spans.classification = Range{sp["classification"].at(0).get<std::size_t>(),
                                     sp["classification"].at(1).get<std::size_t>()};
    s.spans.answer = {sp.at("answer").at(0).get<std::size_t>(), sp.at("answer").at(1).get<std::size_t>()};
    if (auto it = j.find("parts"); it != j.end())
      for (const auto& p : *it)
        s.parts.push_back({part_from_string(p.at(0).get<std::string>()), p.at(1).get<std::size_t>(),
                           p.at(2).get<std::size_t>()});
    if (auto it = j.find("references"); it != j.end()) s.references = it->get<std::vector<std::string>>();
    s.seed = j.at("seed").get<std::uint64_t>();
    if (auto it = j.find("label_mode"); it != j.end())
      s.label_mode = label_mode_from_string(it->get<std::string>());
    s.input_truncated = j.value("input_truncated", false);
    s.target_over_budget = j.value("target_over_budget", false);
    if (sample_type_of(s.example_tags) != s.sample_type)
      throw ValidationError("sample " + s.sample_id + ": sample_type disagrees with example_tags");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("packed sample: ") + e.what());
  }
}

inline void write_jsonl(const std::filesystem::path& path, std::span<const PackedSample> samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : samples) out << to_jsonl_line(s) << '\n';
}

inline std::vector<PackedSample> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus " + path.string());
  std::vector<PackedSample> samples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    samples.push_back(packed_sample_from_json(j));
  }
  return samples;
}

}  // namespace pacit
