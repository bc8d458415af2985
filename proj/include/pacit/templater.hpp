#pragma once

#include <cctype>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pacit/corpus.hpp"
#include "pacit/error.hpp"
#include "pacit/scaffold.hpp"

namespace pacit {

/// Verdict on one in-prompt example, as it appears in a classification sentence.
enum class Verdict { correct, wrong, unparsed };

inline std::string_view to_string(Verdict v) noexcept {
  switch (v) {
    case Verdict::correct: return "correct";
    case Verdict::wrong: return "wrong";
    case Verdict::unparsed: return "unparsed";
  }
  return "?";
}

inline Verdict verdict_from_string(std::string_view s) {
  if (s == "correct") return Verdict::correct;
  if (s == "wrong") return Verdict::wrong;
  if (s == "unparsed") return Verdict::unparsed;
  throw ParseError("unknown verdict '" + std::string(s) + "'");
}

inline Verdict verdict_for(Tag t) noexcept {
  return t == Tag::positive ? Verdict::correct : Verdict::wrong;
}

enum class PartName { classification_result, action, answer };

inline std::string_view to_string(PartName p) noexcept {
  switch (p) {
    case PartName::classification_result: return "classification_result";
    case PartName::action: return "action";
    case PartName::answer: return "answer";
  }
  return "?";
}

inline PartName part_from_string(std::string_view s) {
  if (s == "classification_result") return PartName::classification_result;
  if (s == "action") return PartName::action;
  if (s == "answer") return PartName::answer;
  throw ParseError("unknown part name '" + std::string(s) + "'");
}

/// Half-open character range of one content part inside a target.
struct Part {
  PartName name;
  std::size_t start = 0;
  std::size_t end = 0;

  friend bool operator==(const Part&, const Part&) = default;
};

struct RenderedSample {
  std::string prompt;
  std::string target;
  std::vector<Part> parts;  // ordered, non-overlapping

  std::string_view part_text(PartName name) const {
    for (const auto& p : parts)
      if (p.name == name) return std::string_view(target).substr(p.start, p.end - p.start);
    return {};
  }
  bool has_part(PartName name) const {
    for (const auto& p : parts)
      if (p.name == name) return true;
    return false;
  }
};

/// The self-reminder sentence emitted after the classification result.
/// One value per corpus build.
struct ActionText {
  std::string text = Scaffold{}.action_text;
};

struct RenderStyle {
  Scaffold scaffold{};
  bool stage_headers = true;    // "Classification" / "Answering" lines in PACIT targets
  std::size_t max_examples = 4;
};

/// "Example 1 is correct and example 2 is wrong." for any k >= 1.
inline std::string classification_sentence(std::span<const Verdict> labels) {
  if (labels.empty()) throw PreconditionError("classification sentence needs at least one label");
  std::string s;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == Verdict::unparsed)
      throw PreconditionError("cannot render an unparsed verdict");
    if (i) s += " and ";
    s += "example " + std::to_string(i + 1) + " is " + std::string(to_string(labels[i]));
  }
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  s += '.';
  return s;
}

inline std::vector<Verdict> verdicts_for(std::span<const LabeledExample> examples) {
  std::vector<Verdict> v;
  v.reserve(examples.size());
  for (const auto& e : examples) v.push_back(verdict_for(e.tag));
  return v;
}

namespace detail {

inline void check_examples(std::span<const LabeledExample> examples, const RenderStyle& style) {
  if (examples.size() > style.max_examples)
    throw PreconditionError("too many examples: " + std::to_string(examples.size()) + " > " +
                            std::to_string(style.max_examples));
}

inline void check_answer(std::string_view answer) {
  if (answer.empty()) throw PreconditionError("answer must be non-empty");
}

inline void append_io(std::string& out, const Scaffold& sc, const LabeledExample& e) {
  out += sc.input_prefix + e.input + "\n";
  out += sc.output_prefix + e.output + "\n";
}

inline std::string definition_block(std::string_view def, const Scaffold& sc) {
  return sc.definition_prefix + std::string(def) + "\n";
}

inline std::string instance_block(std::string_view input, const Scaffold& sc) {
  return sc.instance_heading + "\n" + sc.input_prefix + std::string(input);
}

inline std::string ordinal_examples(std::span<const LabeledExample> examples, const Scaffold& sc) {
  std::string out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    out += sc.example_heading_for(i + 1) + "\n";
    append_io(out, sc, examples[i]);
  }
  return out;
}

inline RenderedSample answer_only(std::string prompt, std::string_view answer) {
  RenderedSample r;
  r.prompt = std::move(prompt);
  r.target = std::string(answer);
  r.parts.push_back({PartName::answer, 0, r.target.size()});
  return r;
}

}  // namespace detail

/// Definition, "Example i" blocks with the tags concealed, then the instance.
inline std::string render_pacit_prompt(std::string_view task_def,
                                       std::span<const LabeledExample> examples,
                                       std::string_view instance_input,
                                       const RenderStyle& style = {}) {
  detail::check_examples(examples, style);
  const auto& sc = style.scaffold;
  return detail::definition_block(task_def, sc) + detail::ordinal_examples(examples, sc) +
         detail::instance_block(instance_input, sc);
}

/// PACIT target from explicit verdicts. An empty verdict list yields the
/// bare answer; a missing action drops the action line.
inline RenderedSample render_pacit_target(std::span<const Verdict> labels,
                                          const std::optional<ActionText>& action,
                                          std::string_view answer, const RenderStyle& style = {}) {
  detail::check_answer(answer);
  if (labels.empty()) return detail::answer_only({}, answer);

  const auto& sc = style.scaffold;
  RenderedSample r;
  std::string& t = r.target;
  if (style.stage_headers) t += sc.classification_header + "\n";
  t += sc.result_prefix;
  const std::size_t cs = t.size();
  t += classification_sentence(labels);
  r.parts.push_back({PartName::classification_result, cs, t.size()});
  t += "\n";
  if (action) {
    t += sc.action_prefix;
    const std::size_t as = t.size();
    t += action->text;
    r.parts.push_back({PartName::action, as, t.size()});
    t += "\n";
  }
  if (style.stage_headers) t += sc.answering_header + "\n";
  t += sc.answer_prefix;
  const std::size_t ys = t.size();
  t += answer;
  r.parts.push_back({PartName::answer, ys, t.size()});
  return r;
}

inline RenderedSample render_pacit(std::string_view task_def,
                                   std::span<const LabeledExample> examples,
                                   std::string_view instance_input, std::string_view answer,
                                   const ActionText& action, const RenderStyle& style = {}) {
  detail::check_answer(answer);
  std::string prompt = render_pacit_prompt(task_def, examples, instance_input, style);
  const auto labels = verdicts_for(examples);
  RenderedSample r = render_pacit_target(labels, action, answer, style);
  r.prompt = std::move(prompt);
  return r;
}

/// Ablation: classification stage without the action line.
inline RenderedSample render_pacit_no_action(std::string_view task_def,
                                             std::span<const LabeledExample> examples,
                                             std::string_view instance_input,
                                             std::string_view answer,
                                             const RenderStyle& style = {}) {
  detail::check_answer(answer);
  std::string prompt = render_pacit_prompt(task_def, examples, instance_input, style);
  const auto labels = verdicts_for(examples);
  RenderedSample r = render_pacit_target(labels, std::nullopt, answer, style);
  r.prompt = std::move(prompt);
  return r;
}

inline std::string render_zero_shot_prompt(std::string_view task_def,
                                           std::string_view instance_input,
                                           const RenderStyle& style = {}) {
  const auto& sc = style.scaffold;
  return detail::definition_block(task_def, sc) + detail::instance_block(instance_input, sc);
}

inline RenderedSample render_zero_shot(std::string_view task_def, std::string_view instance_input,
                                       std::string_view answer, const RenderStyle& style = {}) {
  detail::check_answer(answer);
  return detail::answer_only(render_zero_shot_prompt(task_def, instance_input, style), answer);
}

/// Conventional in-context prompt: examples shown with their tags as headings.
inline std::string render_superni_fewshot_prompt(std::string_view task_def,
                                                 std::span<const LabeledExample> examples,
                                                 std::string_view instance_input,
                                                 const RenderStyle& style = {}) {
  detail::check_examples(examples, style);
  const auto& sc = style.scaffold;
  std::string p = detail::definition_block(task_def, sc);
  for (const auto& e : examples) {
    p += (e.tag == Tag::positive ? sc.positive_heading : sc.negative_heading) + "\n";
    detail::append_io(p, sc, e);
  }
  p += detail::instance_block(instance_input, sc);
  return p;
}

inline RenderedSample render_superni_fewshot(std::string_view task_def,
                                             std::span<const LabeledExample> examples,
                                             std::string_view instance_input,
                                             std::string_view answer,
                                             const RenderStyle& style = {}) {
  detail::check_answer(answer);
  return detail::answer_only(
      render_superni_fewshot_prompt(task_def, examples, instance_input, style), answer);
}

inline std::string render_separated_prompt(std::string_view task_def,
                                           std::span<const LabeledExample> examples,
                                           const RenderStyle& style = {}) {
  if (examples.empty())
    throw PreconditionError("a classification sub-sample needs at least one example");
  detail::check_examples(examples, style);
  const auto& sc = style.scaffold;
  return detail::definition_block(task_def, sc) + detail::ordinal_examples(examples, sc) +
         sc.judge_instruction;
}

/// "- Prediction: <classification sentence> <action>" with no answer part.
inline RenderedSample render_separated_target(std::span<const Verdict> labels,
                                              const ActionText& action,
                                              const RenderStyle& style = {}) {
  if (labels.empty())
    throw PreconditionError("a classification sub-sample needs at least one example");
  const auto& sc = style.scaffold;
  RenderedSample r;
  std::string& t = r.target;
  t += sc.prediction_prefix;
  const std::size_t cs = t.size();
  t += classification_sentence(labels);
  r.parts.push_back({PartName::classification_result, cs, t.size()});
  t += sc.prediction_joiner;
  const std::size_t as = t.size();
  t += action.text;
  r.parts.push_back({PartName::action, as, t.size()});
  return r;
}

inline RenderedSample render_separated_classification(std::string_view task_def,
                                                      std::span<const LabeledExample> examples,
                                                      const ActionText& action,
                                                      const RenderStyle& style = {}) {
  std::string prompt = render_separated_prompt(task_def, examples, style);
  const auto labels = verdicts_for(examples);
  RenderedSample r = render_separated_target(labels, action, style);
  r.prompt = std::move(prompt);
  return r;
}

struct SeedDemo {
  std::string task_def;
  LabeledExample positive;
  LabeledExample negative;
};

inline constexpr std::size_t kSelfInstructDemos = 4;

/// Generation prompt for synthesising one positive/negative pair. Ends right
/// after the target definition line, where the model starts a new
/// "Positive Example" block.
inline std::string render_selfinstruct_prompt(std::span<const SeedDemo> demos,
                                              std::string_view target_task_def,
                                              const RenderStyle& style = {}) {
  if (demos.size() != kSelfInstructDemos)
    throw PreconditionError("self-instruct prompt needs exactly " +
                            std::to_string(kSelfInstructDemos) + " demonstrations, got " +
                            std::to_string(demos.size()));
  const auto& sc = style.scaffold;
  auto block = [&](std::string& out, const std::string& heading, const LabeledExample& e) {
    out += heading + "\n";
    detail::append_io(out, sc, e);
    if (e.explanation && !e.explanation->empty())
      out += sc.explanation_prefix + *e.explanation + "\n";
  };
  std::string p = sc.demos_heading + "\n";
  for (const auto& d : demos) {
    p += sc.demo_definition_prefix + d.task_def + "\n";
    block(p, sc.positive_heading, d.positive);
    block(p, sc.negative_heading, d.negative);
  }
  p += sc.generated_heading + "\n";
  p += detail::definition_block(target_task_def, sc);
  return p;
}

}  // namespace pacit
