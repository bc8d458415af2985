#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pacit/app.hpp"

namespace fs = std::filesystem;
using namespace pacit;

namespace {

struct Run {
  int code;
  std::string output;
};

// Runs the CLI from the source root so the sample config's relative paths resolve.
Run cli(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / ("pacit_cli_" + std::to_string(getpid()) + ".log");
  const std::string cmd = "cd '" + std::string(PACIT_SOURCE_DIR) + "' && '" + PACIT_CLI + "' " + args +
                          " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("pacit_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string out(const std::string& sub = "") const { return "--out-dir '" + (dir / sub).string() + "'"; }
  fs::path dir;
};

}  // namespace

TEST_F(Cli, BuildIsDeterministicAcrossThreadCounts) {
  auto a = cli("--config samples/build.toml " + out("a") + " build --threads 1");
  ASSERT_EQ(a.code, 0) << a.output;
  auto b = cli("--config samples/build.toml " + out("b") + " build --threads 8");
  ASSERT_EQ(b.code, 0) << b.output;
  for (const char* split : {"train", "held_in", "held_out"}) {
    const auto ca = slurp(dir / "a" / split / "corpus.jsonl");
    EXPECT_FALSE(ca.empty());
    EXPECT_EQ(ca, slurp(dir / "b" / split / "corpus.jsonl")) << split;
  }
  auto m = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  EXPECT_EQ(m["seed"], 13);
  EXPECT_EQ(m["loss"]["normalization"], "per_token_mean");
  EXPECT_EQ(m["splits"]["train"]["stats"]["n_samples"], 80);
}

TEST_F(Cli, FlagsOverrideConfig) {
  auto r = cli("--config samples/build.toml --seed 99 " + out() + " build --split train --variant zero_shot");
  ASSERT_EQ(r.code, 0) << r.output;
  auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["seed"], 99);
  EXPECT_EQ(m["config"]["variant"], "zero_shot");
  EXPECT_FALSE(fs::exists(dir / "held_out"));
}

TEST_F(Cli, MissingSeedIsAFieldError) {
  auto r = cli(out() + " build --task-dir samples/tasks --train-list samples/train_tasks.txt");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("seed"), std::string::npos) << r.output;
}

TEST_F(Cli, StrictTurnsWarningsIntoFailure) {
  const std::string args = "--config samples/build.toml " + out() + " build --split train --train-n 500";
  auto lax = cli(args);
  EXPECT_EQ(lax.code, 0) << lax.output;
  EXPECT_NE(lax.output.find("warning"), std::string::npos);
  EXPECT_EQ(cli("--strict " + args).code, 2);
}

TEST_F(Cli, EvalOfGoldTargetsScoresPerfectly) {
  ASSERT_EQ(cli("--config samples/build.toml " + out() + " build --split train").code, 0);
  const auto corpus = dir / "train" / "corpus.jsonl";
  {
    std::ofstream preds(dir / "preds.jsonl");
    for (const auto& s : read_jsonl(corpus))
      preds << nlohmann::json{{"sample_id", s.sample_id}, {"generation", s.target}}.dump() << "\n";
  }
  auto r = cli("--out-dir '" + (dir / "eval").string() + "' eval --predictions '" +
               (dir / "preds.jsonl").string() + "' --corpus '" + corpus.string() + "'");
  ASSERT_EQ(r.code, 0) << r.output;
  auto rep = nlohmann::json::parse(slurp(dir / "eval" / "report.json"));
  EXPECT_DOUBLE_EQ(rep["rouge_l"].get<double>(), 100.0);
  EXPECT_DOUBLE_EQ(rep["classification_accuracy"].get<double>(), 1.0);
  EXPECT_TRUE(fs::exists(dir / "eval" / "report.txt"));
  EXPECT_TRUE(fs::exists(dir / "eval" / "parsed.jsonl"));

  std::ofstream(dir / "empty.jsonl").close();
  EXPECT_NE(cli("eval --predictions '" + (dir / "empty.jsonl").string() + "' --corpus '" + corpus.string() + "'").code, 0);

  std::ofstream(dir / "bad.jsonl") << R"({"sample_id":"nope/1","generation":"x"})" << "\n";
  auto bad = cli("eval --predictions '" + (dir / "bad.jsonl").string() + "' --corpus '" + corpus.string() + "'");
  EXPECT_NE(bad.code, 0);
  EXPECT_NE(bad.output.find("nope/1"), std::string::npos);
}

TEST_F(Cli, StatsAndCorrelate) {
  ASSERT_EQ(cli("--config samples/build.toml " + out() + " build --split train").code, 0);
  auto s = cli("stats '" + (dir / "train" / "corpus.jsonl").string() + "'");
  ASSERT_EQ(s.code, 0) << s.output;
  EXPECT_NE(s.output.find("mixing"), std::string::npos);

  std::ofstream(dir / "series.jsonl") << R"({"classification_accuracy":0.5,"rouge_l":40})" << "\n"
                                      << R"({"classification_accuracy":0.7,"rouge_l":45})" << "\n"
                                      << R"({"classification_accuracy":0.9,"rouge_l":50})" << "\n";
  auto c = cli(out("corr") + " correlate '" + (dir / "series.jsonl").string() + "'");
  ASSERT_EQ(c.code, 0) << c.output;
  auto j = nlohmann::json::parse(slurp(dir / "corr" / "report.json"));
  EXPECT_NEAR(j["pearson_r"].get<double>(), 1.0, 1e-12);
}

TEST_F(Cli, GenerateWithPlayback) {
  std::ofstream(dir / "playback.jsonl")
      << nlohmann::json{{"prompt_hash", "*"},
                        {"completion", "Positive Example\n- Input: a\n- Output: b\nNegative Example\n- Input: c\n- Output: d"}}
             .dump()
      << "\n";
  auto r = cli("--seed 4 " + out() + " generate --task-dir samples/tasks --task-list samples/train_tasks.txt"
               " --max-requests 20 --playback '" + (dir / "playback.jsonl").string() + "'");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir / "audit.jsonl"));
  EXPECT_TRUE(fs::exists(dir / "rejects.jsonl"));
  EXPECT_TRUE(fs::exists(dir / "tasks" / "task001_addition.json"));
  auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["pairs"], 4);
  EXPECT_EQ(m["requests"], 4);
  EXPECT_DOUBLE_EQ(m["reject_rate"].get<double>(), 0.0);

  auto again = cli("--seed 4 " + out("again") + " generate --task-dir samples/tasks --task-list samples/train_tasks.txt"
                   " --max-requests 20 --playback '" + (dir / "playback.jsonl").string() + "'");
  ASSERT_EQ(again.code, 0) << again.output;
  EXPECT_EQ(slurp(dir / "audit.jsonl"), slurp(dir / "again" / "audit.jsonl"));
  EXPECT_EQ(slurp(dir / "tasks" / "task003_sentiment.json"), slurp(dir / "again" / "tasks" / "task003_sentiment.json"));
}

TEST_F(Cli, GenerateRequiresBudget) {
  auto r = cli("--seed 4 " + out() + " generate --task-dir samples/tasks --task-list samples/train_tasks.txt");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("max-requests"), std::string::npos) << r.output;
}
