#include <gtest/gtest.h>

#include "golden_cases.hpp"
#include "pacit/scaffold.hpp"
#include "pacit/templater.hpp"

using namespace pacit;

TEST(Templater, MatchesGoldenFiles) {
  for (const auto& c : golden::cases()) EXPECT_EQ(c.render(), golden::read(c.file)) << c.file;
}

TEST(Templater, ClassificationSentence) {
  std::vector<Verdict> v{Verdict::correct};
  EXPECT_EQ(classification_sentence(v), "Example 1 is correct.");
  v = {Verdict::wrong, Verdict::wrong, Verdict::correct};
  EXPECT_EQ(classification_sentence(v),
            "Example 1 is wrong and example 2 is wrong and example 3 is correct.");
  EXPECT_THROW(classification_sentence(std::vector<Verdict>{}), PreconditionError);
  EXPECT_THROW(classification_sentence(std::vector<Verdict>{Verdict::unparsed}), PreconditionError);
}

TEST(Templater, PartsIndexTheTarget) {
  std::vector<LabeledExample> ex{golden::kCat, golden::kDog};
  auto r = render_pacit(golden::kDef, ex, "house", "maison", ActionText{});
  ASSERT_EQ(r.parts.size(), 3u);
  EXPECT_EQ(r.part_text(PartName::classification_result),
            "Example 1 is correct and example 2 is wrong.");
  EXPECT_EQ(r.part_text(PartName::action), ActionText{}.text);
  EXPECT_EQ(r.part_text(PartName::answer), "maison");
  EXPECT_EQ(r.parts.back().end, r.target.size());
}

TEST(Templater, ZeroExamplesGivesBareAnswer) {
  auto r = render_pacit(golden::kDef, {}, "house", "maison", ActionText{});
  EXPECT_EQ(r.target, "maison");
  EXPECT_EQ(r.prompt, render_zero_shot_prompt(golden::kDef, "house"));
  ASSERT_EQ(r.parts.size(), 1u);
  EXPECT_EQ(r.parts[0], (Part{PartName::answer, 0, 6}));
}

TEST(Templater, RejectsBadInput) {
  std::vector<LabeledExample> five(5, golden::kCat);
  EXPECT_THROW(render_pacit(golden::kDef, five, "x", "y", ActionText{}), PreconditionError);
  EXPECT_THROW(render_pacit(golden::kDef, {}, "x", "", ActionText{}), PreconditionError);
  EXPECT_THROW(render_separated_classification(golden::kDef, {}, ActionText{}), PreconditionError);
  std::vector<SeedDemo> three(3);
  EXPECT_THROW(render_selfinstruct_prompt(three, "d"), PreconditionError);
}

TEST(Templater, PromptHidesTags) {
  std::vector<LabeledExample> ex{golden::kCat, golden::kDog};
  auto r = render_pacit(golden::kDef, ex, "house", "maison", ActionText{});
  EXPECT_EQ(r.prompt.find("Positive"), std::string::npos);
  EXPECT_EQ(r.prompt.find("Negative"), std::string::npos);
  EXPECT_EQ(r.prompt.find("correct"), std::string::npos);
}

TEST(Scaffold, CatalogFileMatchesDefaults) {
  Scaffold sc = load_scaffold_catalog(std::filesystem::path(PACIT_SOURCE_DIR) / "templates" /
                                      "scaffolds.v1.txt");
  EXPECT_EQ(write_scaffold_catalog(sc), write_scaffold_catalog(Scaffold{}));
}

TEST(Scaffold, CatalogRoundTripAndErrors) {
  Scaffold sc;
  sc.answer_prefix = "- Answer: \"quoted\"";
  EXPECT_EQ(write_scaffold_catalog(parse_scaffold_catalog(write_scaffold_catalog(sc))),
            write_scaffold_catalog(sc));
  EXPECT_THROW(parse_scaffold_catalog("common.input_prefix = \"x\"\n"), ParseError);
  EXPECT_THROW(parse_scaffold_catalog("version = 2\n"), ParseError);
  EXPECT_THROW(parse_scaffold_catalog("version = 1\nnope.key = \"x\"\n"), ParseError);
  EXPECT_THROW(parse_scaffold_catalog("version = 1\ncommon.input_prefix = bare\n"), ParseError);
}

TEST(Scaffold, OverrideChangesRendering) {
  RenderStyle style;
  style.scaffold = parse_scaffold_catalog("version = 1\ncommon.input_prefix = \"Q: \"\n");
  auto p = render_zero_shot_prompt("D", "x", style);
  EXPECT_EQ(p, "Task Definition: D\nEvaluation Instance\nQ: x");
}
