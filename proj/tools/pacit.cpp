// pacit: build, inspect and score instruction-tuning corpora.

#include <cstdlib>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "pacit/app.hpp"
#include "pacit/http_transport.hpp"

namespace {

using namespace pacit;

void print_warnings(const std::vector<std::string>& ws) {
  for (const auto& w : ws) std::cerr << "warning: " << w << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PACIT corpus toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.set_config("--config", "", "TOML-style config file; command-line flags override it");
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  bool strict = false;
  std::string out_dir = "out";
  auto* seed_opt = app.add_option("--seed", seed, "Run seed (required for build and generate)");
  app.add_flag("--strict", strict, "Treat warnings as errors (exit 2)");
  app.add_option("--out-dir", out_dir, "Output directory")->capture_default_str();

  app::RunConfig rc;
  std::string task_dir, train_list, held_out_list, templates;
  std::vector<std::string> split_names;
  auto* build = app.add_subcommand("build", "Sample splits and pack training/evaluation corpora");
  build->add_option("--task-dir", task_dir, "Directory of <task_id>.json files")->required();
  build->add_option("--train-list", train_list, "Training task list (train and held-in splits)");
  build->add_option("--held-out-list", held_out_list, "Held-out task list");
  build->add_option("--split", split_names, "Splits to build: train, held_in, held_out")
      ->check(CLI::IsMember({"train", "held_in", "held_out"}));
  build->add_option("--train-n", rc.split.train_instances_per_task)->capture_default_str();
  build->add_option("--held-in-n", rc.split.held_in_instances_per_task)->capture_default_str();
  build->add_option("--held-out-n", rc.split.held_out_instances_per_task)->capture_default_str();
  build->add_option("--max-input", rc.max_input_units)->capture_default_str();
  build->add_option("--max-output", rc.max_output_units)->capture_default_str();
  build->add_option("--length-fn", rc.length_fn, "whitespace, characters or external")
      ->capture_default_str();
  build->add_option("--token-counter", rc.token_counter_cmd,
                    "Command for --length-fn external (JSON string per line in, count out)");
  std::string variant = "pacit", label_mode = "ground_truth";
  build->add_option("--variant", variant)
      ->check(CLI::IsMember({"pacit", "pacit_no_action", "superni_fewshot", "zero_shot",
                             "separated_classification"}))
      ->capture_default_str();
  build->add_option("--k-pos", rc.k_pos)->capture_default_str();
  build->add_option("--k-neg", rc.k_neg)->capture_default_str();
  build->add_option("--lambda", rc.lambda, "Answer-loss weight in L = L_c + lambda * L_a (recorded in the manifest)")
      ->capture_default_str();
  build->add_option("--label-mode", label_mode)
      ->check(CLI::IsMember({"ground_truth", "random"}))
      ->capture_default_str();
  bool no_stage_headers = false;
  build->add_flag("--no-stage-headers", no_stage_headers,
                  "Omit the Classification/Answering header lines in targets");
  build->add_option("--templates", templates, "Scaffold catalog file");
  build->add_option("--threads", rc.threads, "Worker threads (0 = all cores)");

  std::string corpus_path;
  auto* stats = app.add_subcommand("stats", "Sample-type proportions and example counts of a corpus");
  stats->add_option("corpus", corpus_path, "corpus.jsonl")->required();

  std::string predictions;
  auto* eval = app.add_subcommand("eval", "Score generations: ROUGE-L and classification accuracy");
  eval->add_option("--predictions", predictions, "JSONL of {sample_id, generation}")->required();
  eval->add_option("--corpus", corpus_path, "corpus.jsonl the predictions were made on")->required();
  std::string eval_templates;
  eval->add_option("--templates", eval_templates, "Scaffold catalog the corpus was built with");

  app::GenerateOptions gopt;
  std::string gen_task_dir, gen_list, playback;
  auto* gen = app.add_subcommand("generate", "Synthesize positive/negative pairs per task");
  gen->add_option("--task-dir", gen_task_dir)->required();
  gen->add_option("--task-list", gen_list)->required();
  gen->add_option("--endpoint", gopt.gen.endpoint)->capture_default_str();
  gen->add_option("--model", gopt.gen.model_name)->capture_default_str();
  gen->add_option("--temperature", gopt.gen.temperature)->capture_default_str();
  gen->add_option("--max-retries", gopt.gen.max_retries)->capture_default_str();
  gen->add_option("--timeout", gopt.gen.request_timeout, "Seconds")->capture_default_str();
  gen->add_option("--concurrency", gopt.gen.concurrency_limit)->capture_default_str();
  gen->add_option("--max-requests", gopt.gen.max_requests, "Hard cap on requests")->required();
  gen->add_option("--pairs-per-task", gopt.gen.pairs_per_task)->capture_default_str();
  gen->add_option("--api-key-env", gopt.gen.api_key_env)->capture_default_str();
  gen->add_option("--playback", playback, "Replay recorded completions instead of calling the endpoint");

  std::string series;
  auto* corr = app.add_subcommand("correlate", "Pearson r of classification accuracy vs ROUGE-L");
  corr->add_option("series", series, "JSONL with classification_accuracy and rouge_l per line")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    app::CommandResult res;
    if (*build) {
      rc.task_dir = task_dir;
      rc.train_list = train_list;
      rc.held_out_list = held_out_list;
      rc.templates = templates;
      rc.out_dir = out_dir;
      rc.strict = strict;
      rc.stage_headers = !no_stage_headers;
      rc.variant = variant_from_string(variant);
      rc.label_mode = label_mode_from_string(label_mode);
      if (seed_opt->count()) rc.seed = seed;
      for (const auto& s : split_names) rc.splits.push_back(split_from_string(s));
      res = app::cmd_build(rc);
    } else if (*stats) {
      res = app::cmd_stats(corpus_path, out_dir, strict);
    } else if (*eval) {
      const Scaffold sc = eval_templates.empty() ? Scaffold{} : load_scaffold_catalog(eval_templates);
      res = app::cmd_eval(predictions, corpus_path, out_dir, strict, sc).first;
    } else if (*gen) {
      if (!seed_opt->count()) throw ValidationError("seed: required for generate");
      gopt.gen.seed = seed;
      gopt.task_dir = gen_task_dir;
      gopt.task_list = gen_list;
      gopt.out_dir = out_dir;
      gopt.strict = strict;
      std::unique_ptr<CompletionTransport> transport;
      if (!playback.empty())
        transport = std::make_unique<PlaybackTransport>(PlaybackTransport::from_jsonl(playback));
      else
        transport = std::make_unique<HttpTransport>(gopt.gen);
      res = app::cmd_generate(gopt, *transport);
    } else if (*corr) {
      res = app::cmd_correlate(series, out_dir).first;
    }
    std::cout << res.summary;
    print_warnings(res.warnings);
    return res.exit_code;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
