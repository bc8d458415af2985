#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "pacit/corpus.hpp"
#include "pacit/error.hpp"
#include "pacit/hash.hpp"
#include "pacit/length.hpp"
#include "pacit/metrics.hpp"
#include "pacit/outparse.hpp"
#include "pacit/packer.hpp"
#include "pacit/scaffold.hpp"
#include "pacit/selfinstruct.hpp"
#include "pacit/version.hpp"

namespace pacit::app {

namespace fs = std::filesystem;

inline constexpr const char* kCorpusFile = "corpus.jsonl";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kReportJson = "report.json";
inline constexpr const char* kReportText = "report.txt";
inline constexpr const char* kAuditFile = "audit.jsonl";
inline constexpr const char* kRejectsFile = "rejects.jsonl";
inline constexpr const char* kParsedFile = "parsed.jsonl";

struct RunConfig {
  fs::path task_dir;
  fs::path train_list;
  fs::path held_out_list;
  fs::path out_dir = "out";
  std::vector<Split> splits;  // empty: every split whose list is given
  SplitConfig split;
  std::size_t max_input_units = 1024;
  std::size_t max_output_units = 128;
  std::string length_fn = "whitespace";  // whitespace | characters | external
  std::string token_counter_cmd;
  Variant variant = Variant::pacit;
  std::size_t k_pos = 1;
  std::size_t k_neg = 1;
  double lambda = 1.0;
  LabelMode label_mode = LabelMode::ground_truth;
  bool stage_headers = true;
  fs::path templates;  // optional scaffold catalog override
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;  // 0: hardware concurrency
  bool strict = false;
};

/// Outcome of one command. Exit code 0 iff no error and, under --strict, no warnings.
struct CommandResult {
  int exit_code = 0;
  std::vector<std::string> warnings;
  std::string summary;
};

inline int exit_code_for(const std::vector<std::string>& warnings, bool strict) {
  return strict && !warnings.empty() ? 2 : 0;
}

inline std::vector<Split> effective_splits(const RunConfig& c) {
  if (!c.splits.empty()) return c.splits;
  std::vector<Split> s;
  if (!c.train_list.empty()) {
    s.push_back(Split::train);
    s.push_back(Split::held_in);
  }
  if (!c.held_out_list.empty()) s.push_back(Split::held_out);
  return s;
}

/// Field-level validation of a build configuration; throws with every problem listed.
inline void validate_build(const RunConfig& c) {
  std::vector<std::string> errs;
  if (!c.seed) errs.push_back("seed: required for build");
  if (c.task_dir.empty())
    errs.push_back("task_dir: required");
  else if (!fs::is_directory(c.task_dir))
    errs.push_back("task_dir: not a directory: " + c.task_dir.string());
  const auto splits = effective_splits(c);
  if (splits.empty()) errs.push_back("train_list/held_out_list: at least one split list is required");
  for (Split s : splits) {
    const fs::path& list = s == Split::held_out ? c.held_out_list : c.train_list;
    const char* field = s == Split::held_out ? "held_out_list" : "train_list";
    if (list.empty())
      errs.push_back(std::string(field) + ": required for split " + std::string(to_string(s)));
    else if (!fs::is_regular_file(list))
      errs.push_back(std::string(field) + ": file not found: " + list.string());
  }
  if (!c.templates.empty() && !fs::is_regular_file(c.templates))
    errs.push_back("templates: file not found: " + c.templates.string());
  if (c.length_fn != "whitespace" && c.length_fn != "characters" && c.length_fn != "external")
    errs.push_back("length_fn: must be whitespace, characters or external");
  if (c.length_fn == "external" && c.token_counter_cmd.empty())
    errs.push_back("token_counter_cmd: required when length_fn = external");
  if (c.max_input_units < 1) errs.push_back("max_input: must be >= 1");
  if (c.max_output_units < 1) errs.push_back("max_output: must be >= 1");
  if (c.k_pos + c.k_neg > 4) errs.push_back("k_pos + k_neg: at most 4 examples per sample");
  if (c.split.train_instances_per_task < 1 || c.split.held_in_instances_per_task < 1 ||
      c.split.held_out_instances_per_task < 1)
    errs.push_back("train_n/held_in_n/held_out_n: must be >= 1");
  if (!(c.lambda >= 0.0)) errs.push_back("lambda: must be >= 0");
  if (c.variant == Variant::separated_answering)
    errs.push_back("variant: use separated_classification to build the separated pair corpus");
  if (!errs.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ValidationError(msg);
  }
}

inline nlohmann::ordered_json config_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["task_dir"] = c.task_dir.string();
  j["train_list"] = c.train_list.string();
  j["held_out_list"] = c.held_out_list.string();
  auto splits = nlohmann::ordered_json::array();
  for (Split s : effective_splits(c)) splits.push_back(to_string(s));
  j["splits"] = splits;
  j["train_n"] = c.split.train_instances_per_task;
  j["held_in_n"] = c.split.held_in_instances_per_task;
  j["held_out_n"] = c.split.held_out_instances_per_task;
  j["max_input"] = c.max_input_units;
  j["max_output"] = c.max_output_units;
  j["length_fn"] = c.length_fn;
  j["token_counter_cmd"] = c.token_counter_cmd;
  j["variant"] = to_string(c.variant);
  j["k_pos"] = c.k_pos;
  j["k_neg"] = c.k_neg;
  j["lambda"] = c.lambda;
  j["label_mode"] = to_string(c.label_mode);
  j["stage_headers"] = c.stage_headers;
  j["templates"] = c.templates.string();
  j["seed"] = c.seed ? nlohmann::ordered_json(*c.seed) : nlohmann::ordered_json();
  return j;
}

inline nlohmann::ordered_json stats_json(const CorpusStats& st) {
  nlohmann::ordered_json j;
  j["n_samples"] = st.n_samples;
  nlohmann::ordered_json types, props;
  for (SampleType t : kSampleTypes) {
    types[std::string(to_string(t))] = st.type_counts[static_cast<std::size_t>(t)];
    props[std::string(to_string(t))] = st.proportion(t);
  }
  j["type_counts"] = types;
  j["type_proportions"] = props;
  j["avg_examples_per_sample"] = st.avg_examples_per_sample;
  j["n_input_truncated"] = st.n_input_truncated;
  j["n_target_over_budget"] = st.n_target_over_budget;
  j["n_tasks"] = st.per_task.size();
  nlohmann::ordered_json per_task;
  for (const auto& [k, v] : st.per_task) per_task[k] = v;
  j["per_task"] = per_task;
  return j;
}

inline std::string stats_text(const CorpusStats& st) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "samples            %zu\ntasks              %zu\n", st.n_samples,
                st.per_task.size());
  os << buf;
  for (SampleType t : kSampleTypes) {
    std::snprintf(buf, sizeof buf, "%-18s %8zu  %6.2f%%\n", std::string(to_string(t)).c_str(),
                  st.type_counts[static_cast<std::size_t>(t)], 100.0 * st.proportion(t));
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "avg examples/sample %.4f\ninput truncated    %zu\n",
                st.avg_examples_per_sample, st.n_input_truncated);
  os << buf;
  return os.str();
}

inline void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << s;
}

inline RenderStyle style_for(const RunConfig& c) {
  RenderStyle style;
  if (!c.templates.empty()) style.scaffold = load_scaffold_catalog(c.templates);
  style.stage_headers = c.stage_headers;
  return style;
}

inline LengthMeasure measure_for(const RunConfig& c) {
  if (c.length_fn == "characters") return LengthMeasure::characters();
  if (c.length_fn == "external") return LengthMeasure::external(c.token_counter_cmd);
  return LengthMeasure::whitespace();
}

/// Builds the corpora for every requested split and writes
/// <out>/<split>/corpus.jsonl plus <out>/manifest.json.
inline CommandResult cmd_build(const RunConfig& cfg) {
  validate_build(cfg);
  CommandResult res;
  const std::uint64_t seed = *cfg.seed;

  std::vector<Task> train_tasks, held_out_tasks;
  const auto splits = effective_splits(cfg);
  auto wants = [&](Split s) { return std::find(splits.begin(), splits.end(), s) != splits.end(); };
  if (wants(Split::train) || wants(Split::held_in))
    train_tasks = load_tasks(cfg.task_dir, load_split_list(cfg.train_list));
  if (wants(Split::held_out))
    held_out_tasks = load_tasks(cfg.task_dir, load_split_list(cfg.held_out_list));

  SplitConfig sc = cfg.split;
  sc.seed = derive_seed(seed, "split_root");
  const SplitPlan plan = sample_split(train_tasks, held_out_tasks, sc);
  res.warnings.insert(res.warnings.end(), plan.warnings.begin(), plan.warnings.end());

  PackConfig pc;
  pc.budget.max_input_units = cfg.max_input_units;
  pc.budget.max_output_units = cfg.max_output_units;
  pc.budget.length_fn = measure_for(cfg);
  pc.style = style_for(cfg);
  pc.action.text = pc.style.scaffold.action_text;
  pc.k_pos = cfg.k_pos;
  pc.k_neg = cfg.k_neg;
  const unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());

  fs::create_directories(cfg.out_dir);
  nlohmann::ordered_json manifest;
  manifest["toolkit"] = "pacit";
  manifest["version"] = kVersion;
  const auto cj = config_json(cfg);
  manifest["config"] = cj;
  manifest["config_hash"] = content_hash(cj.dump());
  manifest["seed"] = seed;
  manifest["length_fn"] = pc.budget.length_fn.name();
  manifest["scaffold_catalog_version"] = kScaffoldCatalogVersion;
  manifest["scaffold_hash"] = content_hash(write_scaffold_catalog(pc.style.scaffold));
  manifest["loss"] = {{"lambda", cfg.lambda},
                      {"normalization", "per_token_mean"},
                      {"also_reported", "unnormalized_sum"},
                      {"eos_in_answer_span", true},
                      {"span_units", "characters"}};
  manifest["rouge"] = {{"tokenizer", "lowercase, split on non-alphanumeric runs, no stemming"},
                       {"max_tokens", kRougeMaxTokens},
                       {"scale", 100}};

  nlohmann::ordered_json split_stats;
  std::ostringstream summary;
  for (Split s : splits) {
    const auto& tasks = s == Split::held_out ? held_out_tasks : train_tasks;
    BuildResult br = build_corpus(tasks, plan.get(s), pc, cfg.variant, cfg.label_mode,
                                  derive_seed(seed, "build", to_string(s)), threads);
    res.warnings.insert(res.warnings.end(), br.warnings.begin(), br.warnings.end());
    const fs::path dir = cfg.out_dir / std::string(to_string(s));
    fs::create_directories(dir);
    write_jsonl(dir / kCorpusFile, br.samples);
    nlohmann::ordered_json entry;
    entry["corpus"] = (fs::path(std::string(to_string(s))) / kCorpusFile).string();
    entry["n_tasks"] = tasks.size();
    std::size_t n_inst = 0;
    for (const auto& ss : plan.get(s)) n_inst += ss.instances.size();
    entry["n_instances"] = n_inst;
    if (!br.samples.empty()) entry["stats"] = stats_json(corpus_stats(br.samples));
    const PoolStats ps = pool_stats(tasks);
    entry["pool_avg_positive_per_task"] = ps.avg_positive;
    entry["pool_avg_negative_per_task"] = ps.avg_negative;
    split_stats[std::string(to_string(s))] = entry;
    summary << to_string(s) << ": " << br.samples.size() << " samples from " << tasks.size()
            << " tasks\n";
  }
  manifest["splits"] = split_stats;
  manifest["warnings"] = res.warnings;
  write_text(cfg.out_dir / kManifestFile, manifest.dump(2) + "\n");

  res.summary = summary.str();
  res.exit_code = exit_code_for(res.warnings, cfg.strict);
  return res;
}

inline CommandResult cmd_stats(const fs::path& corpus, const fs::path& out_dir, bool strict = false) {
  const auto samples = read_jsonl(corpus);
  if (samples.empty()) throw ValidationError("stats: corpus " + corpus.string() + " is empty");
  const CorpusStats st = corpus_stats(samples);
  CommandResult res;
  res.summary = stats_text(st);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text(out_dir / kReportJson, stats_json(st).dump(2) + "\n");
    write_text(out_dir / kReportText, res.summary);
  }
  res.exit_code = exit_code_for(res.warnings, strict);
  return res;
}

struct Prediction {
  std::string sample_id;
  std::string generation;
};

inline std::vector<Prediction> read_predictions(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open predictions " + path.string());
  std::vector<Prediction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back({j.at("sample_id").get<std::string>(), j.at("generation").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline bool carries_classification(Variant v) {
  return v == Variant::pacit || v == Variant::pacit_no_action ||
         v == Variant::separated_classification;
}

inline nlohmann::ordered_json to_json(const ParsedOutput& p) {
  nlohmann::ordered_json j;
  auto labels = nlohmann::ordered_json::array();
  for (Verdict v : p.labels) labels.push_back(to_string(v));
  j["labels"] = labels;
  j["action"] = p.action ? nlohmann::ordered_json(*p.action) : nlohmann::ordered_json();
  j["answer"] = p.answer;
  j["parse_status"] = to_string(p.status);
  j["strict_format"] = p.strict_format;
  return j;
}

/// Scores generations against a corpus: answer-only ROUGE-L plus
/// classification accuracy on samples that carried examples.
inline std::pair<CommandResult, MetricReport> cmd_eval(const fs::path& predictions,
                                                       const fs::path& corpus,
                                                       const fs::path& out_dir, bool strict = false,
                                                       const Scaffold& scaffold = {}) {
  const auto preds = read_predictions(predictions);
  if (preds.empty()) throw ValidationError("eval: predictions file " + predictions.string() + " is empty");
  const auto samples = read_jsonl(corpus);
  std::map<std::string, const PackedSample*> by_id;
  for (const auto& s : samples) by_id[s.sample_id] = &s;

  std::vector<std::string> unmatched;
  for (const auto& p : preds)
    if (!by_id.count(p.sample_id)) unmatched.push_back(p.sample_id);
  if (!unmatched.empty()) {
    std::string msg = "eval: " + std::to_string(unmatched.size()) + " prediction ids not in corpus:";
    for (const auto& id : unmatched) msg += "\n  " + id;
    throw ValidationError(msg);
  }

  std::vector<ScoredInstance> scored;
  std::vector<ParsedOutput> parsed;
  std::vector<std::vector<Verdict>> gold;
  std::string parsed_lines;
  for (const auto& p : preds) {
    const PackedSample& s = *by_id.at(p.sample_id);
    const bool cls = carries_classification(s.variant);
    ParsedOutput po = parse_output(p.generation, cls ? s.example_tags.size() : 0, scaffold);
    std::vector<Verdict> g;
    if (cls)
      for (Tag t : s.example_tags) g.push_back(verdict_for(t));
    const auto pj = to_json(po);
    nlohmann::ordered_json line{{"sample_id", p.sample_id}};
    for (auto it = pj.begin(); it != pj.end(); ++it)
      if (it.key() != "sample_id") line[it.key()] = it.value();
    if (!s.references.empty()) {
      RougeScore r = score_instance(s.references, po.answer);
      scored.push_back({s.task_id, r});
      line["rouge_l"] = r.f_measure * 100.0;
    }
    parsed_lines += line.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace) + "\n";
    parsed.push_back(std::move(po));
    gold.push_back(std::move(g));
  }
  if (scored.empty()) throw ValidationError("eval: no prediction has reference outputs to score");
  MetricReport rep = aggregate(scored, parsed, gold);

  CommandResult res;
  if (rep.n_truncated)
    res.warnings.push_back(std::to_string(rep.n_truncated) + " instances truncated at " +
                           std::to_string(kRougeMaxTokens) + " tokens for ROUGE-L");
  res.summary = format_report_text(rep);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text(out_dir / kReportJson, to_json(rep).dump(2) + "\n");
    write_text(out_dir / kReportText, res.summary);
    write_text(out_dir / kParsedFile, parsed_lines);
  }
  res.exit_code = exit_code_for(res.warnings, strict);
  return {res, rep};
}

struct GenerateOptions {
  fs::path task_dir;
  fs::path task_list;
  fs::path out_dir = "out";
  GenerationConfig gen;
  bool strict = false;
};

inline CommandResult cmd_generate(const GenerateOptions& opt, CompletionTransport& transport,
                                  SelfInstructGenerator::SleepFn sleep =
                                      SelfInstructGenerator::default_sleep) {
  std::vector<std::string> errs;
  if (opt.task_dir.empty() || !fs::is_directory(opt.task_dir)) errs.push_back("task_dir: not a directory");
  if (opt.task_list.empty() || !fs::is_regular_file(opt.task_list)) errs.push_back("task_list: file not found");
  try {
    opt.gen.validate();
  } catch (const ValidationError& e) {
    errs.push_back(e.what());
  }
  if (!errs.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ValidationError(msg);
  }

  const auto tasks = load_tasks(opt.task_dir, load_split_list(opt.task_list));
  CommandResult res;
  const SeedPool pool = build_seed_pool(tasks, opt.gen.seed);
  res.warnings = pool.warnings;

  SelfInstructGenerator gen(opt.gen, transport, RenderStyle{}, std::move(sleep));
  GenerationOutcome out = gen.run(tasks, pool);

  fs::create_directories(opt.out_dir / "tasks");
  std::string audit, rejects;
  for (const auto& a : out.audit) audit += to_json(a).dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace) + "\n";
  for (const auto& r : out.rejects) rejects += to_json(r).dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace) + "\n";
  write_text(opt.out_dir / kAuditFile, audit);
  write_text(opt.out_dir / kRejectsFile, rejects);
  const auto augmented = apply_generated(tasks, out.pairs);
  for (const auto& t : augmented)
    write_text(opt.out_dir / "tasks" / (t.task_id + ".json"), task_to_json(t).dump(2) + "\n");
  std::string list;
  for (const auto& t : augmented) list += t.task_id + "\n";
  write_text(opt.out_dir / "tasks.txt", list);

  std::size_t collisions = 0;
  for (const auto& p : out.pairs) collisions += p.collides_with_seed;
  if (out.budget_exhausted) res.warnings.push_back("request budget exhausted before all tasks were served");
  if (collisions) res.warnings.push_back(std::to_string(collisions) + " generated pairs repeat a seed example");

  nlohmann::ordered_json m;
  m["toolkit"] = "pacit";
  m["version"] = kVersion;
  nlohmann::ordered_json gc;
  gc["task_dir"] = opt.task_dir.string();
  gc["task_list"] = opt.task_list.string();
  gc["endpoint"] = opt.gen.endpoint;
  gc["model"] = opt.gen.model_name;
  gc["temperature"] = opt.gen.temperature;
  gc["max_retries"] = opt.gen.max_retries;
  gc["request_timeout"] = opt.gen.request_timeout;
  gc["concurrency_limit"] = opt.gen.concurrency_limit;
  gc["max_requests"] = opt.gen.max_requests;
  gc["pairs_per_task"] = opt.gen.pairs_per_task;
  gc["seed"] = opt.gen.seed;
  m["config"] = gc;
  m["config_hash"] = content_hash(gc.dump());
  m["endpoint"] = opt.gen.endpoint;
  m["transport"] = transport.describe();
  m["model"] = opt.gen.model_name;
  m["temperature"] = opt.gen.temperature;
  m["seed"] = opt.gen.seed;
  m["max_requests"] = opt.gen.max_requests;
  auto pool_ids = nlohmann::ordered_json::array();
  for (const auto& p : pool.pairs) pool_ids.push_back(p.task_id);
  m["seed_pool_tasks"] = pool_ids;
  m["requests"] = out.requests;
  m["pairs"] = out.pairs.size();
  m["rejects"] = out.rejects.size();
  m["reject_rate"] = out.reject_rate();
  m["seed_collisions"] = collisions;
  m["budget_exhausted"] = out.budget_exhausted;
  m["augmented_tasks"] = augmented.size();
  m["warnings"] = res.warnings;
  write_text(opt.out_dir / kManifestFile, m.dump(2) + "\n");

  char buf[200];
  std::snprintf(buf, sizeof buf, "requests %zu, pairs %zu, rejects %zu (reject rate %.4f)\n",
                out.requests, out.pairs.size(), out.rejects.size(), out.reject_rate());
  res.summary = buf;
  if (out.fatal_error) throw TransportError(*out.fatal_error, 0, false);
  res.exit_code = exit_code_for(res.warnings, opt.strict);
  return res;
}

/// Pearson r between classification accuracy and ROUGE-L over a series of
/// evaluation reports (JSONL, one report per checkpoint).
inline std::pair<CommandResult, double> cmd_correlate(const fs::path& series, const fs::path& out_dir) {
  std::ifstream in(series, std::ios::binary);
  if (!in) throw Error("cannot open series " + series.string());
  std::vector<double> acc, rouge;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      acc.push_back(j.at("classification_accuracy").get<double>());
      rouge.push_back(j.at("rouge_l").get<double>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(series.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  const double r = pearson(acc, rouge);
  CommandResult res;
  char buf[120];
  std::snprintf(buf, sizeof buf, "pearson r = %.6f over %zu checkpoints\n", r, acc.size());
  res.summary = buf;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    nlohmann::ordered_json j{{"pearson_r", r}, {"n_points", acc.size()},
                             {"x", "classification_accuracy"}, {"y", "rouge_l"}};
    write_text(out_dir / kReportJson, j.dump(2) + "\n");
    write_text(out_dir / kReportText, res.summary);
  }
  return {res, r};
}

}  // namespace pacit::app
