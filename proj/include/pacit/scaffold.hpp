#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>

#include <nlohmann/json.hpp>

#include "pacit/error.hpp"
#include "pacit/text.hpp"

namespace pacit {

/// Fixed strings placed around user content by every template.
///
/// The defaults are the v1 catalog. A catalog file with the same keys can
/// override any of them; see templates/scaffolds.v1.txt and
/// docs/templates.md for the format.
struct Scaffold {
  // common
  std::string definition_prefix = "Task Definition: ";
  std::string input_prefix = "- Input: ";
  std::string output_prefix = "- Output: ";
  std::string explanation_prefix = "- Explanation: ";
  std::string instance_heading = "Evaluation Instance";
  // pacit
  std::string example_heading = "Example {i}";
  std::string classification_header = "Classification";
  std::string result_prefix = "- Classification result: ";
  std::string action_prefix = "- Generated action: ";
  std::string answering_header = "Answering";
  std::string answer_prefix = "- Output: ";
  std::string action_text =
      "I should learn from correct examples and avoid the mistakes in these wrong examples.";
  // superni few-shot and self-instruct blocks
  std::string positive_heading = "Positive Example";
  std::string negative_heading = "Negative Example";
  // separated classification
  std::string judge_instruction = "Judge whether each example conforms to the task definition.";
  std::string prediction_prefix = "- Prediction: ";
  std::string prediction_joiner = " ";
  // self-instruct
  std::string demos_heading = "Few-Shot Demonstrations:";
  std::string demo_definition_prefix = "Demonstrated Task Definition: ";
  std::string generated_heading = "Generated Examples:";

  friend bool operator==(const Scaffold&, const Scaffold&) = default;

  std::string example_heading_for(std::size_t ordinal) const {
    std::string h = example_heading;
    if (auto p = h.find("{i}"); p != std::string::npos) h.replace(p, 3, std::to_string(ordinal));
    return h;
  }
};

inline constexpr int kScaffoldCatalogVersion = 1;

namespace detail {

using ScaffoldField = std::pair<std::string_view, std::string Scaffold::*>;

inline const auto& scaffold_fields() {
  static const std::array<ScaffoldField, 20> fields{{
      {"common.definition_prefix", &Scaffold::definition_prefix},
      {"common.input_prefix", &Scaffold::input_prefix},
      {"common.output_prefix", &Scaffold::output_prefix},
      {"common.explanation_prefix", &Scaffold::explanation_prefix},
      {"common.instance_heading", &Scaffold::instance_heading},
      {"pacit.example_heading", &Scaffold::example_heading},
      {"pacit.classification_header", &Scaffold::classification_header},
      {"pacit.result_prefix", &Scaffold::result_prefix},
      {"pacit.action_prefix", &Scaffold::action_prefix},
      {"pacit.answering_header", &Scaffold::answering_header},
      {"pacit.answer_prefix", &Scaffold::answer_prefix},
      {"pacit.action_text", &Scaffold::action_text},
      {"superni.positive_heading", &Scaffold::positive_heading},
      {"superni.negative_heading", &Scaffold::negative_heading},
      {"separated.judge_instruction", &Scaffold::judge_instruction},
      {"separated.prediction_prefix", &Scaffold::prediction_prefix},
      {"separated.prediction_joiner", &Scaffold::prediction_joiner},
      {"selfinstruct.demos_heading", &Scaffold::demos_heading},
      {"selfinstruct.demo_definition_prefix", &Scaffold::demo_definition_prefix},
      {"selfinstruct.generated_heading", &Scaffold::generated_heading},
  }};
  return fields;
}

}  // namespace detail

/// Parses a scaffold catalog: `key = "json string"` lines, `#` comments,
/// and a mandatory `version = 1` line. Keys not present keep their defaults.
inline Scaffold parse_scaffold_catalog(std::string_view doc) {
  Scaffold sc;
  bool have_version = false;
  std::size_t lineno = 0;
  std::istringstream in{std::string(doc)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ParseError("scaffold catalog line " + std::to_string(lineno) + ": expected key = value");
    const std::string key(text::trim(line.substr(0, eq)));
    const std::string value(text::trim(line.substr(eq + 1)));
    if (key == "version") {
      if (value != std::to_string(kScaffoldCatalogVersion))
        throw ParseError("scaffold catalog: unsupported version " + value);
      have_version = true;
      continue;
    }
    std::string decoded;
    try {
      auto j = nlohmann::json::parse(value);
      if (!j.is_string()) throw ParseError("not a string");
      decoded = j.get<std::string>();
    } catch (const std::exception&) {
      throw ParseError("scaffold catalog line " + std::to_string(lineno) + ": value of '" + key +
                       "' must be a double-quoted string");
    }
    bool known = false;
    for (const auto& [name, member] : detail::scaffold_fields()) {
      if (name == key) {
        sc.*member = std::move(decoded);
        known = true;
        break;
      }
    }
    if (!known) throw ParseError("scaffold catalog: unknown key '" + key + "'");
  }
  if (!have_version) throw ParseError("scaffold catalog: missing version line");
  return sc;
}

inline Scaffold load_scaffold_catalog(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open scaffold catalog " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scaffold_catalog(ss.str());
}

inline std::string write_scaffold_catalog(const Scaffold& sc) {
  std::string out = "version = " + std::to_string(kScaffoldCatalogVersion) + "\n";
  for (const auto& [name, member] : detail::scaffold_fields())
    out += std::string(name) + " = " + nlohmann::json(sc.*member).dump() + "\n";
  return out;
}

}  // namespace pacit
