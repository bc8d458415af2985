#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "pacit/packer.hpp"

using namespace pacit;

namespace {

Task make_task(const std::string& id, std::size_t n_pos, std::size_t n_neg, std::size_t n_inst) {
  Task t;
  t.task_id = id;
  t.definition = "Copy the input words.";
  for (std::size_t i = 0; i < n_pos; ++i)
    t.positive_pool.push_back({"pos in " + std::to_string(i), "pos out " + std::to_string(i), Tag::positive, {}});
  for (std::size_t i = 0; i < n_neg; ++i)
    t.negative_pool.push_back({"neg in " + std::to_string(i), "neg out " + std::to_string(i), Tag::negative, {}});
  for (std::size_t i = 0; i < n_inst; ++i)
    t.instances.push_back({"i" + std::to_string(i), "instance words " + std::to_string(i), {"answer " + std::to_string(i)}});
  return t;
}

SplitSample all_instances(const Task& t) { return {0, t.task_id, t.instances}; }

}  // namespace

TEST(Packer, DeterministicForSeed) {
  Task t = make_task("t", 3, 3, 1);
  PackConfig cfg;
  auto a = assemble(t, t.instances[0], cfg, Variant::pacit, 99);
  auto b = assemble(t, t.instances[0], cfg, Variant::pacit, 99);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.sample_type, SampleType::mixing);
  EXPECT_EQ(a.target_labels.size(), 2u);
  EXPECT_EQ(a.sample_id, "t/i0");
}

TEST(Packer, KeptExamplesArePrefixOfDraw) {
  Task t = make_task("t", 4, 4, 1);
  PackConfig cfg;
  cfg.k_pos = 2;
  cfg.k_neg = 2;
  for (std::size_t budget : {8u, 12u, 16u, 20u, 30u, 100u}) {
    cfg.budget.max_input_units = budget;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      auto draw = detail::draw_examples(t, 2, 2, seed).candidates;
      PackedSample s;
      try {
        s = assemble(t, t.instances[0], cfg, Variant::pacit, seed);
      } catch (const ValidationError&) {
        continue;
      }
      ASSERT_LE(s.example_tags.size(), draw.size());
      for (std::size_t i = 0; i < s.example_tags.size(); ++i) EXPECT_EQ(s.example_tags[i], draw[i].tag);
      EXPECT_LE(cfg.budget.length_fn(s.prompt), budget);
      if (s.example_tags.size() < draw.size()) {
        std::vector<LabeledExample> one_more(draw.begin(), draw.begin() + s.example_tags.size() + 1);
        auto longer = render_pacit_prompt(t.definition, one_more, t.instances[0].input);
        EXPECT_GT(cfg.budget.length_fn(longer), budget);
      }
    }
  }
}

TEST(Packer, OverlongInputIsTruncatedAndDefinitionOverflowSkips) {
  Task t = make_task("t", 1, 1, 1);
  std::string big;
  for (int i = 0; i < 2000; ++i) big += "w ";
  t.instances[0].input = big;
  PackConfig cfg;
  auto s = assemble(t, t.instances[0], cfg, Variant::pacit, 1);
  EXPECT_TRUE(s.input_truncated);
  EXPECT_EQ(s.example_tags.size(), 0u);
  EXPECT_LE(cfg.budget.length_fn(s.prompt), cfg.budget.max_input_units);

  cfg.budget.max_input_units = 3;
  EXPECT_THROW(assemble(t, t.instances[0], cfg, Variant::pacit, 1), ValidationError);
}

TEST(Packer, UnbalancedPoolsGiveOneSidedTypes) {
  PackConfig cfg;
  Task only_pos = make_task("p", 2, 0, 1), none = make_task("n", 0, 0, 1);
  EXPECT_EQ(assemble(only_pos, only_pos.instances[0], cfg, Variant::pacit, 1).sample_type,
            SampleType::only_positive);
  auto z = assemble(none, none.instances[0], cfg, Variant::pacit, 1);
  EXPECT_EQ(z.sample_type, SampleType::without_examples);
  EXPECT_EQ(z.target, "answer 0");
  EXPECT_FALSE(z.spans.classification);
}

TEST(Packer, VariantsShareTheDraw) {
  Task t = make_task("t", 3, 3, 1);
  PackConfig cfg;
  auto p = assemble(t, t.instances[0], cfg, Variant::pacit, 7);
  auto f = assemble(t, t.instances[0], cfg, Variant::superni_fewshot, 7);
  auto z = assemble(t, t.instances[0], cfg, Variant::zero_shot, 7);
  EXPECT_EQ(p.example_tags, f.example_tags);
  EXPECT_TRUE(z.example_tags.empty());
  EXPECT_EQ(f.target, "answer 0");
  auto sep = assemble_separated(t, t.instances[0], cfg, 7);
  ASSERT_TRUE(sep.classification);
  EXPECT_EQ(sep.classification->example_tags, p.example_tags);
  EXPECT_EQ(sep.answering.prompt, f.prompt);
  EXPECT_TRUE(sep.classification->spans.answer.empty());
}

TEST(Packer, ShuffleOrderIsFair) {
  Task t = make_task("t", 1, 1, 1);
  PackConfig cfg;
  int pos_first = 0;
  const int n = 4000;
  for (int s = 0; s < n; ++s)
    pos_first += assemble(t, t.instances[0], cfg, Variant::pacit, static_cast<std::uint64_t>(s))
                     .example_tags[0] == Tag::positive;
  EXPECT_NEAR(pos_first, n / 2, 5 * std::sqrt(n * 0.25));
}

TEST(Packer, RandomLabelsKeepPromptAndAnswer) {
  Task t = make_task("t", 2, 2, 200);
  PackConfig cfg;
  auto br = build_corpus(std::vector<Task>{t}, std::vector<SplitSample>{all_instances(t)}, cfg,
                         Variant::pacit, LabelMode::ground_truth, 3);
  auto rnd = randomize_labels(br.samples, 4);
  std::size_t slots = 0, correct = 0;
  for (std::size_t i = 0; i < rnd.size(); ++i) {
    EXPECT_EQ(rnd[i].prompt, br.samples[i].prompt);
    EXPECT_EQ(rnd[i].example_tags, br.samples[i].example_tags);
    RenderedSample r{{}, rnd[i].target, rnd[i].parts};
    RenderedSample g{{}, br.samples[i].target, br.samples[i].parts};
    EXPECT_EQ(r.part_text(PartName::answer), g.part_text(PartName::answer));
    EXPECT_EQ(r.part_text(PartName::classification_result), classification_sentence(rnd[i].target_labels));
    EXPECT_EQ(rnd[i].label_mode, LabelMode::random);
    for (auto v : rnd[i].target_labels) {
      ++slots;
      correct += v == Verdict::correct;
    }
  }
  EXPECT_EQ(slots, 400u);
  EXPECT_NEAR(static_cast<double>(correct) / slots, 0.5, 5 * std::sqrt(0.25 / slots));
}

TEST(Packer, BuildIndependentOfThreadCount) {
  std::vector<Task> tasks{make_task("a", 2, 1, 30), make_task("b", 1, 2, 30), make_task("c", 0, 1, 30)};
  std::vector<SplitSample> split;
  for (std::size_t i = 0; i < tasks.size(); ++i) split.push_back({i, tasks[i].task_id, tasks[i].instances});
  PackConfig cfg;
  auto one = build_corpus(tasks, split, cfg, Variant::pacit, LabelMode::random, 8, 1);
  auto many = build_corpus(tasks, split, cfg, Variant::pacit, LabelMode::random, 8, 6);
  ASSERT_EQ(one.samples.size(), 90u);
  EXPECT_EQ(one.samples, many.samples);
}

TEST(Packer, JsonlRoundTripAndStats) {
  Task t = make_task("t", 2, 2, 10);
  PackConfig cfg;
  auto br = build_corpus(std::vector<Task>{t}, std::vector<SplitSample>{all_instances(t)}, cfg,
                         Variant::pacit, LabelMode::ground_truth, 1);
  const auto path = std::filesystem::temp_directory_path() / "pacit_packer_test.jsonl";
  write_jsonl(path, br.samples);
  auto back = read_jsonl(path);
  EXPECT_EQ(back, br.samples);
  std::filesystem::remove(path);

  auto st = corpus_stats(br.samples);
  EXPECT_EQ(st.n_samples, 10u);
  EXPECT_DOUBLE_EQ(st.proportion(SampleType::mixing), 1.0);
  EXPECT_DOUBLE_EQ(st.avg_examples_per_sample, 2.0);
  EXPECT_THROW(corpus_stats({}), PreconditionError);
}

TEST(Packer, RejectsTooManyExamples) {
  Task t = make_task("t", 3, 3, 1);
  PackConfig cfg;
  cfg.k_pos = 3;
  cfg.k_neg = 2;
  EXPECT_THROW(assemble(t, t.instances[0], cfg, Variant::pacit, 1), PreconditionError);
}

TEST(Length, ExternalCounter) {
  // Counts characters of the JSON-encoded line: wc -c over each line minus newline.
  auto m = LengthMeasure::external("while IFS= read -r l; do echo ${#l}; done");
  EXPECT_EQ(m("ab"), 4u);  // "\"ab\""
  EXPECT_EQ(m(""), 2u);
  EXPECT_THROW(LengthMeasure::external("exit 0")("x"), Error);
}
