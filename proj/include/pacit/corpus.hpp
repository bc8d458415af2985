#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "pacit/error.hpp"
#include "pacit/rng.hpp"
#include "pacit/text.hpp"

namespace pacit {

enum class Tag { positive, negative };

inline std::string_view to_string(Tag t) noexcept {
  return t == Tag::positive ? "positive" : "negative";
}

inline Tag tag_from_string(std::string_view s) {
  if (s == "positive") return Tag::positive;
  if (s == "negative") return Tag::negative;
  throw ParseError("unknown example tag '" + std::string(s) + "'");
}

struct LabeledExample {
  std::string input;
  std::string output;
  Tag tag = Tag::positive;
  std::optional<std::string> explanation;

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

struct TaskInstance {
  std::string id;
  std::string input;
  std::vector<std::string> outputs;  // >= 1 reference

  friend bool operator==(const TaskInstance&, const TaskInstance&) = default;
};

struct Task {
  std::string task_id;
  std::string definition;
  std::vector<LabeledExample> positive_pool;
  std::vector<LabeledExample> negative_pool;
  std::vector<TaskInstance> instances;
};

struct SplitConfig {
  std::size_t train_instances_per_task = 60;
  std::size_t held_in_instances_per_task = 15;
  std::size_t held_out_instances_per_task = 100;
  std::uint64_t seed = 0;

  void validate() const {
    if (train_instances_per_task < 1 || held_in_instances_per_task < 1 ||
        held_out_instances_per_task < 1)
      throw ValidationError("split config: all per-task instance counts must be >= 1");
  }
};

enum class Split { train, held_in, held_out };

inline std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::held_in: return "held_in";
    case Split::held_out: return "held_out";
  }
  return "?";
}

inline Split split_from_string(std::string_view s) {
  for (Split v : {Split::train, Split::held_in, Split::held_out})
    if (to_string(v) == s) return v;
  throw ValidationError("unknown split '" + std::string(s) + "'");
}

struct SplitSample {
  std::size_t task_index = 0;  // into the task list the split was drawn from
  std::string task_id;
  std::vector<TaskInstance> instances;
};

struct SplitPlan {
  std::vector<SplitSample> train;
  std::vector<SplitSample> held_in;
  std::vector<SplitSample> held_out;
  std::vector<std::string> warnings;

  const std::vector<SplitSample>& get(Split s) const {
    switch (s) {
      case Split::train: return train;
      case Split::held_in: return held_in;
      case Split::held_out: return held_out;
    }
    return train;
  }
};

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key,
                                     const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw ValidationError(where + ": missing required field \"" + key + "\"");
  return *it;
}

inline std::string require_string(const nlohmann::json& obj, const char* key,
                                  const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_string())
    throw ParseError(where + "." + key + ": expected a string");
  return v.get<std::string>();
}

inline std::vector<LabeledExample> parse_pool(const nlohmann::json& doc, const char* key, Tag tag,
                                              const std::string& where) {
  const auto& arr = require(doc, key, where);
  if (!arr.is_array()) throw ParseError(where + ".\"" + key + "\": expected an array");
  std::vector<LabeledExample> pool;
  pool.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string at = where + ".\"" + key + "\"[" + std::to_string(i) + "]";
    const auto& e = arr[i];
    if (!e.is_object()) throw ParseError(at + ": expected an object");
    LabeledExample ex;
    ex.input = require_string(e, "input", at);
    ex.output = require_string(e, "output", at);
    ex.tag = tag;
    if (auto it = e.find("explanation"); it != e.end() && !it->is_null()) {
      if (!it->is_string()) throw ParseError(at + ".explanation: expected a string");
      if (!text::trim(it->get_ref<const std::string&>()).empty())
        ex.explanation = it->get<std::string>();
    }
    if (text::trim(ex.input).empty()) throw ValidationError(at + ".input: empty");
    if (text::trim(ex.output).empty()) throw ValidationError(at + ".output: empty");
    pool.push_back(std::move(ex));
  }
  return pool;
}

}  // namespace detail

/// Builds a Task from a parsed SuperNI document. Unknown top-level keys are
/// ignored.
inline Task task_from_json(const nlohmann::json& doc, std::string task_id) {
  const std::string where = task_id.empty() ? std::string("task") : task_id;
  if (!doc.is_object()) throw ParseError(where + ": top level must be an object");

  Task task;
  task.task_id = std::move(task_id);

  const auto& def = detail::require(doc, "Definition", where);
  if (def.is_string()) {
    task.definition = def.get<std::string>();
  } else if (def.is_array()) {
    std::vector<std::string> parts;
    for (const auto& p : def) {
      if (!p.is_string()) throw ParseError(where + ".Definition: expected strings");
      parts.push_back(p.get<std::string>());
    }
    task.definition = text::join(parts, " ");
  } else {
    throw ParseError(where + ".Definition: expected a string or an array of strings");
  }
  if (text::trim(task.definition).empty())
    throw ValidationError(where + ".Definition: empty task definition");

  task.positive_pool = detail::parse_pool(doc, "Positive Examples", Tag::positive, where);
  task.negative_pool = detail::parse_pool(doc, "Negative Examples", Tag::negative, where);

  const auto& inst = detail::require(doc, "Instances", where);
  if (!inst.is_array()) throw ParseError(where + ".Instances: expected an array");
  std::unordered_set<std::string> seen;
  task.instances.reserve(inst.size());
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const std::string at = where + ".Instances[" + std::to_string(i) + "]";
    const auto& e = inst[i];
    if (!e.is_object()) throw ParseError(at + ": expected an object");
    TaskInstance ti;
    ti.id = detail::require_string(e, "id", at);
    ti.input = detail::require_string(e, "input", at);
    const auto& out = detail::require(e, "output", at);
    if (out.is_string()) {
      ti.outputs.push_back(out.get<std::string>());
    } else if (out.is_array()) {
      for (const auto& o : out) {
        if (!o.is_string()) throw ParseError(at + ".output: expected strings");
        ti.outputs.push_back(o.get<std::string>());
      }
    } else {
      throw ParseError(at + ".output: expected an array of strings");
    }
    if (ti.outputs.empty()) throw ValidationError(at + ".output: no reference outputs");
    if (!seen.insert(ti.id).second)
      throw ValidationError(where + ": duplicate instance id '" + ti.id + "'");
    task.instances.push_back(std::move(ti));
  }
  return task;
}

inline nlohmann::json task_to_json(const Task& task) {
  auto pool = [](const std::vector<LabeledExample>& p) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : p) {
      nlohmann::json o{{"input", e.input}, {"output", e.output}};
      o["explanation"] = e.explanation.value_or("");
      arr.push_back(std::move(o));
    }
    return arr;
  };
  nlohmann::json inst = nlohmann::json::array();
  for (const auto& i : task.instances)
    inst.push_back({{"id", i.id}, {"input", i.input}, {"output", i.outputs}});
  return {{"Definition", nlohmann::json::array({task.definition})},
          {"Positive Examples", pool(task.positive_pool)},
          {"Negative Examples", pool(task.negative_pool)},
          {"Instances", std::move(inst)}};
}

/// Loads one SuperNI task file. The task id is the file stem.
inline Task load_task(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open task file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return task_from_json(doc, path.stem().string());
}

/// Newline-delimited task names; a trailing ".json" is dropped, blank lines skipped.
inline std::vector<std::string> load_split_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open split list " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    std::string_view name = text::trim(line);
    if (name.empty()) continue;
    if (name.size() > 5 && name.ends_with(".json")) name.remove_suffix(5);
    names.emplace_back(name);
  }
  return names;
}

/// Loads `names` from `dir` concurrently; the result keeps list order.
inline std::vector<Task> load_tasks(const std::filesystem::path& dir,
                                    const std::vector<std::string>& names) {
  std::vector<std::future<Task>> pending;
  pending.reserve(names.size());
  for (const auto& n : names)
    pending.push_back(std::async(std::launch::async, [p = dir / (n + ".json")] {
      return load_task(p);
    }));
  std::vector<Task> tasks;
  tasks.reserve(names.size());
  for (auto& f : pending) tasks.push_back(f.get());
  return tasks;
}

/// Draws per-task instance samples. Train and held-in come from the same
/// permutation of each training task's instances, so they never overlap.
inline SplitPlan sample_split(std::span<const Task> train_tasks,
                              std::span<const Task> held_out_tasks, const SplitConfig& cfg) {
  cfg.validate();
  SplitPlan plan;

  auto pick = [](const Task& t, const std::vector<std::size_t>& order, std::size_t from,
                 std::size_t count) {
    std::vector<TaskInstance> out;
    out.reserve(count);
    for (std::size_t i = from; i < from + count; ++i) out.push_back(t.instances[order[i]]);
    return out;
  };

  for (std::size_t ti = 0; ti < train_tasks.size(); ++ti) {
    const Task& t = train_tasks[ti];
    const std::size_t avail = t.instances.size();
    Rng rng(derive_seed(cfg.seed, "split", t.task_id));
    auto order = rng.sample_indices(avail, avail);

    std::size_t n_train = std::min(cfg.train_instances_per_task, avail);
    std::size_t n_held_in = std::min(cfg.held_in_instances_per_task, avail - n_train);
    if (n_train < cfg.train_instances_per_task)
      plan.warnings.push_back(t.task_id + ": train request " +
                              std::to_string(cfg.train_instances_per_task) + " capped at " +
                              std::to_string(n_train) + " available instances");
    if (n_held_in < cfg.held_in_instances_per_task)
      plan.warnings.push_back(t.task_id + ": held-in request " +
                              std::to_string(cfg.held_in_instances_per_task) + " shrunk to " +
                              std::to_string(n_held_in) + " (disjoint from train)");

    plan.train.push_back({ti, t.task_id, pick(t, order, 0, n_train)});
    plan.held_in.push_back({ti, t.task_id, pick(t, order, n_train, n_held_in)});
  }

  for (std::size_t ti = 0; ti < held_out_tasks.size(); ++ti) {
    const Task& t = held_out_tasks[ti];
    const std::size_t avail = t.instances.size();
    Rng rng(derive_seed(cfg.seed, "split", t.task_id));
    std::size_t n = std::min(cfg.held_out_instances_per_task, avail);
    if (n < cfg.held_out_instances_per_task)
      plan.warnings.push_back(t.task_id + ": held-out request " +
                              std::to_string(cfg.held_out_instances_per_task) + " capped at " +
                              std::to_string(n) + " available instances");
    plan.held_out.push_back({ti, t.task_id, pick(t, rng.sample_indices(avail, n), 0, n)});
  }
  return plan;
}

}  // namespace pacit
